"""Adam, global-norm clipping, weight noise and L2 decay over module parameters."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..nn import WEIGHT, Parameter


class NonFiniteGradient(FloatingPointError):
    pass


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale so the joint L2 norm is at most ``max_norm``; returns (grads, norm before clipping)."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteGradient("non-finite gradient norm")
    if norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [(g * scale).astype(g.dtype) for g in grads], norm


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Bias-corrected Adam over a fixed list of parameters."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps, 0,
                               [np.zeros_like(p.data) for p in self.params],
                               [np.zeros_like(p.data) for p in self.params])

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = value

    def step(self, grads: list[np.ndarray]) -> None:
        s = self.state
        s.step += 1
        c1 = 1.0 - s.beta1 ** s.step
        c2 = 1.0 - s.beta2 ** s.step
        for p, g, m, v in zip(self.params, grads, s.m, s.v):
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * np.square(g)
            p.data -= (s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)).astype(p.data.dtype)


def weight_params(params) -> list[Parameter]:
    return [p for p in params if p.kind == WEIGHT]


def noise_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, 0x5EED])


@contextmanager
def weight_noise(params, std: float, seed: int, step: int):
    """Add N(0, std^2) to every weight matrix/filter for the enclosed forward pass.

    Clean values are restored on exit, so gradients computed inside apply to them.
    """
    targets = weight_params(params) if std > 0 else []
    rng = noise_rng(seed, step)
    saved = []
    for p in targets:
        saved.append(p.data)
        noise = rng.standard_normal(size=p.data.shape, dtype=p.data.dtype)
        noise *= p.data.dtype.type(std)
        p.data = p.data + noise
    try:
        yield
    finally:
        for p, clean in zip(targets, saved):
            p.data = clean


def l2_penalty(params, lam: float) -> float:
    return lam * sum(float(np.sum(np.square(p.data, dtype=np.float64))) for p in weight_params(params))


def add_l2_grads(params, grads: list[np.ndarray], lam: float) -> list[np.ndarray]:
    """Gradient of lam * sum ||W||^2 added to the weight entries of ``grads``."""
    if lam == 0:
        return grads
    return [g + (2.0 * lam * p.data).astype(g.dtype) if p.kind == WEIGHT else g for p, g in zip(params, grads)]
