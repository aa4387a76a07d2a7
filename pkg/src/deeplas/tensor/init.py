"""Seeded parameter initialisers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Tensor, default_dtype


@dataclass(frozen=True)
class Uniform:
    low: float = -0.1
    high: float = 0.1


@dataclass(frozen=True)
class TruncatedNormal:
    mean: float = 0.0
    std: float = 0.1


@dataclass(frozen=True)
class Zeros:
    pass


@dataclass(frozen=True)
class Constant:
    value: float


def _truncated_normal(rng, n, mean, std):
    out = rng.normal(mean, std, size=n)
    bad = np.abs(out - mean) > 2 * std
    while bad.any():
        out[bad] = rng.normal(mean, std, size=int(bad.sum()))
        bad = np.abs(out - mean) > 2 * std
    return out


def tensor_init(shape, scheme, seed: int = 0, dtype=None, requires_grad: bool = False, name=None) -> Tensor:
    """Deterministic initial values for ``shape`` under ``scheme``.

    Truncated normal redraws every sample farther than two standard deviations
    from the mean.
    """
    shape = tuple(int(s) for s in shape)
    if not shape or any(s <= 0 for s in shape):
        raise ValueError(f"tensor_init: extents must be positive and non-empty, got {shape}")
    dtype = dtype or default_dtype()
    n = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    if isinstance(scheme, Uniform):
        vals = rng.uniform(scheme.low, scheme.high, size=n)
    elif isinstance(scheme, TruncatedNormal):
        if scheme.std <= 0:
            raise ValueError("tensor_init: truncated normal needs std > 0")
        vals = _truncated_normal(rng, n, scheme.mean, scheme.std)
    elif isinstance(scheme, Zeros):
        vals = np.zeros(n)
    elif isinstance(scheme, Constant):
        vals = np.full(n, scheme.value, dtype=float)
    else:
        raise TypeError(f"tensor_init: unknown scheme {scheme!r}")
    return Tensor(vals.reshape(shape).astype(dtype), requires_grad=requires_grad, name=name)
