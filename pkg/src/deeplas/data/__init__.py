"""Synthetic speech, feature post-processing and the FBK1 file format."""
from .features import Utterance, add_deltas, normalize_per_speaker, pad_batch
from .fbk import (
    BadMagicError,
    DuplicateIdError,
    FeatureFileError,
    TruncatedFileError,
    attach_transcripts,
    dumps,
    loads,
    read_features,
    read_transcripts,
    write_features,
)
from .synth import SynthSpec, make_splits, prepare, random_transcript, render, synthesize

__all__ = [
    "Utterance", "add_deltas", "normalize_per_speaker", "pad_batch", "BadMagicError", "DuplicateIdError",
    "FeatureFileError", "TruncatedFileError", "attach_transcripts", "dumps", "loads", "read_features",
    "read_transcripts", "write_features", "SynthSpec", "make_splits", "prepare", "random_transcript",
    "render", "synthesize",
]
