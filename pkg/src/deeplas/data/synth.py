"""Toy speech: characters rendered as fixed spectral templates plus noise and speaker offsets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .features import Utterance, add_deltas, normalize_per_speaker


@dataclass(frozen=True)
class SynthSpec:
    vocab: str = "abcdefghij"
    freq_bins: int = 8
    frames_min: int = 3  # frames per character, inclusive range
    frames_max: int = 5
    noise_std: float = 0.1
    speaker_std: float = 0.5
    template_std: float = 1.0
    n_speakers: int = 3
    words_min: int = 1
    words_max: int = 3
    word_len_min: int = 2
    word_len_max: int = 4
    template_seed: int = 1234  # shared by every split drawn from this spec

    def __post_init__(self):
        if self.freq_bins < 2:
            raise ValueError("freq_bins must be >= 2")
        if not self.vocab or " " in self.vocab or len(set(self.vocab)) != len(self.vocab):
            raise ValueError("vocab must be distinct non-space characters")
        for lo, hi in ((self.frames_min, self.frames_max), (self.words_min, self.words_max),
                       (self.word_len_min, self.word_len_max)):
            if not 1 <= lo <= hi:
                raise ValueError(f"bad range {lo}..{hi}")
        if self.noise_std < 0 or self.speaker_std < 0 or self.n_speakers < 1:
            raise ValueError("noise/speaker settings must be non-negative with at least one speaker")

    @property
    def symbols(self) -> str:
        """Rendered symbols: the vocabulary plus the word separator."""
        return self.vocab + " "

    def templates(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.template_seed)
        while True:
            t = rng.normal(0.0, self.template_std, size=(len(self.symbols), self.freq_bins))
            if len({tuple(r) for r in t}) == len(t):
                return {c: t[i] for i, c in enumerate(self.symbols)}

    def speaker_offsets(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng([self.template_seed, 1])
        off = rng.normal(0.0, self.speaker_std, size=(self.n_speakers, self.freq_bins))
        return {f"spk{i}": off[i] for i in range(self.n_speakers)}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise KeyError(f"unknown synth key: {sorted(unknown)[0]}")
        conv = {}
        for k, v in d.items():
            default = getattr(cls, k)
            conv[k] = type(default)(v) if not isinstance(default, str) else str(v)
        return cls(**conv)

    def to_dict(self) -> dict:
        return asdict(self)


def random_transcript(spec: SynthSpec, rng: np.random.Generator) -> str:
    words = []
    for _ in range(rng.integers(spec.words_min, spec.words_max + 1)):
        n = rng.integers(spec.word_len_min, spec.word_len_max + 1)
        words.append("".join(spec.vocab[i] for i in rng.integers(0, len(spec.vocab), size=n)))
    return " ".join(words)


def render(spec: SynthSpec, transcript: str, speaker: str, rng: np.random.Generator,
           templates=None, offsets=None) -> np.ndarray:
    """(T, freq_bins) float32 frames for ``transcript``; durations and noise come from ``rng``."""
    templates = templates or spec.templates()
    offsets = offsets or spec.speaker_offsets()
    durs = rng.integers(spec.frames_min, spec.frames_max + 1, size=len(transcript))
    clean = np.concatenate([np.repeat(templates[c][None], d, axis=0) for c, d in zip(transcript, durs)])
    noise = rng.normal(0.0, spec.noise_std, size=clean.shape) if spec.noise_std > 0 else 0.0
    return (clean + offsets[speaker] + noise).astype(np.float32)


def synthesize(spec: SynthSpec, n_utts: int, seed: int, prefix: str = "utt") -> list[Utterance]:
    """Raw (T, freq_bins) utterances, deterministic in (spec, n_utts, seed)."""
    if n_utts < 1:
        raise ValueError("n_utts must be >= 1")
    rng = np.random.default_rng(seed)
    templates, offsets = spec.templates(), spec.speaker_offsets()
    out = []
    for i in range(n_utts):
        speaker = f"spk{i % spec.n_speakers}"
        text = random_transcript(spec, rng)
        feats = render(spec, text, speaker, rng, templates, offsets)
        out.append(Utterance(f"{prefix}{i:05d}", speaker, feats, text))
    return out


def prepare(dataset: list[Utterance], window: int = 2) -> list[Utterance]:
    """Deltas followed by per-speaker normalisation: (T, F) -> (T, 3F)."""
    with_deltas = [Utterance(u.id, u.speaker, add_deltas(u.features, window), u.transcript) for u in dataset]
    return normalize_per_speaker(with_deltas)


def make_splits(spec: SynthSpec, n_train: int, n_dev: int, seed: int):
    """Prepared train and dev sets sharing the spec's templates and speakers."""
    train = prepare(synthesize(spec, n_train, seed, prefix="train"))
    dev = prepare(synthesize(spec, n_dev, seed + 7919, prefix="dev"))
    return train, dev
