"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .core import Tensor, backward, no_grad


def _as_mapping(params) -> Mapping[str, Tensor]:
    if isinstance(params, Mapping):
        return params
    return {p.name or f"param{i}": p for i, p in enumerate(params)}


def finite_difference_report(build_loss: Callable[[], Tensor], params, eps: float = 1e-5) -> dict:
    """Per-parameter max of |analytic - numeric| / max(1, |analytic|)."""
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-5, 1e-2], got {eps}")
    params = _as_mapping(params)
    for name, p in params.items():
        if p.dtype.itemsize < 8:
            raise TypeError(f"gradient check needs double precision; {name} is {p.dtype}")
        p.requires_grad = True
        p.grad = None
    loss = build_loss()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss at the unperturbed point")
    backward(loss)
    report = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        aflat = analytic.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                fp = float(build_loss().data)
                flat[i] = orig - eps
                fm = float(build_loss().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{i}]")
            num = (fp - fm) / (2 * eps)
            err = abs(aflat[i] - num) / max(1.0, abs(aflat[i]))
            worst = max(worst, err)
        report[name] = worst
    return report


def finite_difference_check(build_loss: Callable[[], Tensor], params, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all parameters."""
    report = finite_difference_report(build_loss, params, eps)
    return max(report.values()) if report else 0.0
