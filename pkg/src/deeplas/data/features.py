"""Feature post-processing: regression deltas and per-speaker normalisation."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np


@dataclass
class Utterance:
    id: str
    speaker: str
    features: np.ndarray  # (T, D) float32
    transcript: str

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


def _delta(x: np.ndarray, N: int) -> np.ndarray:
    T = x.shape[0]
    padded = np.concatenate([np.repeat(x[:1], N, axis=0), x, np.repeat(x[-1:], N, axis=0)])
    num = np.zeros_like(x, dtype=np.float64)
    for n in range(1, N + 1):
        num += n * (padded[N + n : N + n + T] - padded[N - n : N - n + T])
    return num / (2 * sum(n * n for n in range(1, N + 1)))


def add_deltas(features: np.ndarray, window: int = 2) -> np.ndarray:
    """[static; delta; delta-delta] with edge frames replicated; output is (T, 3D)."""
    src = np.asarray(features)
    out_dtype = src.dtype if src.dtype.kind == "f" else np.float32
    x = src.astype(np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"add_deltas: need a (T >= 1, D) matrix, got {x.shape}")
    if window < 1:
        raise ValueError("add_deltas: window must be >= 1")
    d1 = _delta(x, window)
    d2 = _delta(d1, window)
    return np.concatenate([x, d1, d2], axis=1).astype(out_dtype)


def normalize_per_speaker(dataset: list[Utterance], floor: float = 1e-6) -> list[Utterance]:
    """Zero mean, unit variance per speaker and dimension over all of that speaker's frames."""
    frames = defaultdict(list)
    for u in dataset:
        frames[u.speaker].append(np.asarray(u.features, dtype=np.float64))
    stats = {}
    for spk, fs in frames.items():
        allf = np.concatenate(fs)
        stats[spk] = (allf.mean(axis=0), np.maximum(allf.std(axis=0), floor))
    out = []
    for u in dataset:
        mu, sd = stats[u.speaker]
        out.append(replace(u, features=((u.features - mu) / sd).astype(u.features.dtype)))
    return out


def pad_batch(feats: list[np.ndarray], pad_value: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Stack (T_i, D) matrices into (B, T_max, D) plus the lengths vector."""
    lengths = np.array([f.shape[0] for f in feats], dtype=np.int64)
    D = feats[0].shape[1]
    out = np.full((len(feats), int(lengths.max()), D), pad_value, dtype=feats[0].dtype)
    for i, f in enumerate(feats):
        out[i, : f.shape[0]] = f
    return out, lengths
