"""Finite-difference gradient checks for every layer type, in double precision."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import nn
from .arch import ElabConfig, InputSpec
from .model import LAS, Vocabulary, attention_context
from .model.las import DecoderState, EncoderOutput
from .nn import Seq
from .tensor import Tensor, finite_difference_report, precision, reduce_sum
from .tensor.ops import conv2d

TOLERANCE = 1e-4


def _probe(out: Tensor, seed: int) -> Tensor:
    """Scalar sum(out * R) for a fixed random R, so no gradient is trivially zero."""
    r = np.random.default_rng(seed).normal(size=out.shape)
    return reduce_sum(out * Tensor(r))


def _x(rng, shape, lengths=None, time_axis=1):
    a = rng.normal(size=shape)
    if lengths is not None:
        t = np.arange(shape[time_axis])
        for b, n in enumerate(lengths):
            idx = [b] + [slice(None)] * (len(shape) - 1)
            idx[time_axis] = t >= n
            a[tuple(idx)] = 0.0
    return Tensor(a, requires_grad=True)


def _module_case(make, x_shape, lengths, layout):
    def build():
        rng = np.random.default_rng(0)
        mod = make(rng).to_dtype(np.float64)
        mod.train()
        x = _x(rng, x_shape, lengths, 1 if layout == "seq" else 3)
        params = {"x": x, **dict(mod.named_parameters())}
        # BN scale and shift away from 1/0 so their gradients are exercised
        for name, p in params.items():
            if name.endswith("gamma"):
                p.data = 1.0 + 0.3 * rng.normal(size=p.shape)
            elif name.endswith("beta"):
                p.data = 0.3 * rng.normal(size=p.shape)

        def loss():
            return _probe(mod(Seq(x, np.array(lengths), layout)).x, 1)

        return loss, params

    return build


def _lstm_step():
    rng = np.random.default_rng(0)
    p = nn.LstmParams(Tensor(rng.uniform(-0.5, 0.5, (3, 16))), Tensor(rng.uniform(-0.5, 0.5, (4, 16))),
                      Tensor(rng.normal(size=16) * 0.1))
    x, h, c = (Tensor(rng.normal(size=s)) for s in ((2, 3), (2, 4), (2, 4)))

    def loss():
        h1, c1 = nn.lstm_step(x, h, c, p)
        return _probe(h1, 1) + _probe(c1, 2)

    return loss, {"x": x, "h": h, "c": c, "w_x": p.w_x, "w_h": p.w_h, "b": p.b}


def _convlstm_step():
    rng = np.random.default_rng(0)
    p = nn.ConvLstmParams(Tensor(rng.normal(size=(12, 2, 3, 1)) * 0.3), Tensor(rng.normal(size=(12, 3, 3, 1)) * 0.3),
                          Tensor(rng.normal(size=12) * 0.1))
    x, h, c = (Tensor(rng.normal(size=s)) for s in ((2, 2, 4), (2, 3, 4), (2, 3, 4)))

    def loss():
        h1, c1 = nn.convlstm_step(x, h, c, p)
        return _probe(h1, 1) + _probe(c1, 2)

    return loss, {"x": x, "h": h, "c": c, "w_x": p.w_x, "w_h": p.w_h, "b": p.b}


def _blstm():
    rng = np.random.default_rng(0)
    fwd, bwd = (nn.LstmParams(Tensor(rng.uniform(-0.5, 0.5, (3, 12))), Tensor(rng.uniform(-0.5, 0.5, (3, 12))),
                              Tensor(rng.normal(size=12) * 0.1)) for _ in range(2))
    lengths = np.array([5, 3])
    x = _x(rng, (2, 5, 3), lengths)

    def loss():
        return _probe(nn.blstm(Seq(x, lengths), fwd, bwd).x, 1)

    return loss, {"x": x, "fwd.w_x": fwd.w_x, "fwd.w_h": fwd.w_h, "fwd.b": fwd.b,
                  "bwd.w_x": bwd.w_x, "bwd.w_h": bwd.w_h, "bwd.b": bwd.b}


def _conv2d():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 2, 5, 6)))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.3)
    b = Tensor(rng.normal(size=3))

    def loss():
        return _probe(conv2d(x, w, b, stride=(1, 2)), 1)

    return loss, {"x": x, "w": w, "b": b}


def _bn_train():
    rng = np.random.default_rng(0)
    lengths = np.array([5, 3])
    x = _x(rng, (2, 3, 4, 5), lengths, 3)
    gamma = Tensor(1.0 + 0.3 * rng.normal(size=3))
    beta = Tensor(0.3 * rng.normal(size=3))

    def loss():
        return _probe(nn.batchnorm_seq(Seq(x, lengths, "grid"), gamma, beta, training=True).x, 1)

    return loss, {"x": x, "gamma": gamma, "beta": beta}


def _attention():
    rng = np.random.default_rng(0)
    lengths = np.array([4, 2])
    h = _x(rng, (2, 4, 3), lengths)
    w_h = Tensor(rng.normal(size=(3, 5)) * 0.5)
    s = Tensor(rng.normal(size=(2, 4)))
    w_s = Tensor(rng.normal(size=(4, 5)) * 0.5)
    b = Tensor(rng.normal(size=5) * 0.1)
    v = Tensor(rng.normal(size=5))

    def loss():
        enc = EncoderOutput(h, lengths, h @ w_h)
        ctx, alpha = attention_context(s, enc, w_s, b, v)
        return _probe(ctx, 1) + _probe(alpha, 2)

    return loss, {"h": h, "w_h": w_h, "s": s, "w_s": w_s, "b": b, "v": v}


def micro_las(seed: int = 0) -> LAS:
    """Six frames of width 4, |V|=4, hidden 3: small enough to check every weight."""
    m = LAS("L + P/2 + L", Vocabulary("a"), InputSpec(4, 1), ElabConfig(hidden=3), dec_hidden=3, seed=seed)
    return m.to_dtype(np.float64)


def _spread(model, rng):
    # weights drawn wider than the training init so the check sees non-trivial curvature
    for _, p in model.named_parameters():
        if p.kind == "weight":
            p.data = rng.uniform(-0.5, 0.5, size=p.shape)


def _decode_step():
    rng = np.random.default_rng(0)
    m = micro_las()
    _spread(m, rng)
    feats = rng.normal(size=(2, 6, 4))
    lengths = np.array([6, 4])
    h0, c0, ctx0 = (Tensor(rng.normal(size=(2, d)) * 0.5) for d in (3, 3, 6))

    def loss():
        enc = m.listen(feats, lengths)
        st, logp, alpha = m.decode_step([2, 3], DecoderState(h0, c0, ctx0, 1), enc)
        return _probe(logp, 1) + _probe(st.c, 2) + _probe(alpha, 3)

    return loss, {"h0": h0, "c0": c0, "ctx0": ctx0, **dict(m.named_parameters())}


def _micro_las():
    rng = np.random.default_rng(0)
    m = micro_las()
    _spread(m, rng)
    feats = rng.normal(size=(2, 6, 4))
    lengths = np.array([6, 5])
    targets = np.array([[3, 2, 1], [3, 1, 0]])
    tl = np.array([3, 2])

    def loss():
        return m.loss(feats, lengths, targets, tl)

    return loss, dict(m.named_parameters())


CASES: dict[str, Callable] = {
    "lstm_step": _lstm_step,
    "blstm": _blstm,
    "convlstm_step": _convlstm_step,
    "conv2d": _conv2d,
    "bn_train": _bn_train,
    "nin": _module_case(lambda r: nn.NiNModule(2, 3, r), (2, 2, 3, 4), [4, 2], "grid"),
    "projected_subsample": _module_case(lambda r: nn.ProjectedSubsample(3, 3, r), (2, 6, 3), [6, 3], "seq"),
    "res_cnn": _module_case(lambda r: nn.res_cnn(2, r), (2, 2, 3, 4), [4, 3], "grid"),
    "res_convlstm": _module_case(lambda r: nn.res_convlstm(2, r), (2, 2, 3, 4), [4, 3], "grid"),
    "res_lstm": _module_case(lambda r: nn.res_lstm(3, 2, r), (2, 4, 3), [4, 2], "seq"),
    "attention": _attention,
    "decode_step": _decode_step,
    "micro_las": _micro_las,
}


def run_case(name: str, eps: float = 1e-5) -> dict:
    """{"case", "max_rel_err", "per_param", "seconds"} for one named case."""
    if name not in CASES:
        raise KeyError(f"unknown gradcheck module {name!r}; choose from {', '.join(CASES)}")
    t0 = time.perf_counter()
    with precision(np.float64):
        build_loss, params = CASES[name]()
        per = finite_difference_report(build_loss, params, eps)
    return {"case": name, "max_rel_err": max(per.values()), "per_param": per,
            "seconds": time.perf_counter() - t0}


def run_all(names=None, eps: float = 1e-5) -> list[dict]:
    return [run_case(n, eps) for n in (names or CASES)]
