"""Differentiable primitives.

Each op computes its forward value with numpy and appends exactly one tape
record whose backward closure maps output grads to input grads.
"""
from __future__ import annotations

import functools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels
from .core import Tensor, record


def _pair(a, b):
    """Coerce binary-op operands to tensors of a common float dtype."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("at least one operand must be a Tensor")
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return record("add", (a, b), a.data + b.data,
                  lambda g: [_unbroadcast(g[0], sa), _unbroadcast(g[0], sb)])


def sub(a, b):
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return record("sub", (a, b), a.data - b.data,
                  lambda g: [_unbroadcast(g[0], sa), _unbroadcast(-g[0], sb)])


def mul(a, b):
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        return [_unbroadcast(g[0] * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g[0] * ad, bd.shape) if b.requires_grad else None]

    return record("mul", (a, b), ad * bd, bw)


def div(a, b):
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return [_unbroadcast(g[0] / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g[0] * out / bd, bd.shape) if b.requires_grad else None]

    return record("div", (a, b), out, bw)


def neg(x):
    return record("neg", (x,), -x.data, lambda g: [-g[0]])


def power(x, p: float):
    xd = x.data
    return record("power", (x,), xd ** p, lambda g: [g[0] * p * xd ** (p - 1)])


def exp(x):
    out = np.exp(x.data)
    return record("exp", (x,), out, lambda g: [g[0] * out])


def log(x):
    xd = x.data
    return record("log", (x,), np.log(xd), lambda g: [g[0] / xd])


def sigmoid(x):
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return record("sigmoid", (x,), out, lambda g: [g[0] * out * (1.0 - out)])


def tanh(x):
    out = np.tanh(x.data)
    return record("tanh", (x,), out, lambda g: [g[0] * (1.0 - out * out)])


def relu(x):
    pos = x.data > 0
    # subgradient 0 at exactly 0
    return record("relu", (x,), np.where(pos, x.data, 0).astype(x.dtype), lambda g: [g[0] * pos])


def masked_fill(x, mask, value: float = 0.0):
    """Replace entries where the constant boolean ``mask`` is true; no gradient flows there."""
    mask = np.asarray(mask, dtype=bool)
    _check_broadcast("masked_fill", x, mask)
    out = np.where(mask, np.asarray(value, dtype=x.dtype), x.data)
    return record("masked_fill", (x,), out,
                  lambda g: [_unbroadcast(np.where(mask, 0, g[0]), x.shape)])


# -- reductions -----------------------------------------------------------------

def _expand(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = sorted(a % len(shape) for a in axes)
        for a in axes:
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def _count(shape, axis):
    if axis is None:
        return int(np.prod(shape))
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[a] for a in axes]))


def sum(x, axis=None, keepdims=False):  # noqa: A001
    shape = x.shape
    return record("sum", (x,), np.sum(x.data, axis=axis, keepdims=keepdims),
                  lambda g: [_expand(g[0], shape, axis, keepdims).copy()])


def mean(x, axis=None, keepdims=False):
    shape = x.shape
    n = _count(shape, axis)
    return record("mean", (x,), np.mean(x.data, axis=axis, keepdims=keepdims),
                  lambda g: [_expand(g[0], shape, axis, keepdims) / n])


def variance(x, axis=None, keepdims=False):
    """Population variance (divides by the element count)."""
    shape = x.shape
    n = _count(shape, axis)
    centered = x.data - np.mean(x.data, axis=axis, keepdims=True)
    return record("variance", (x,), np.mean(centered ** 2, axis=axis, keepdims=keepdims),
                  lambda g: [_expand(g[0], shape, axis, keepdims) * centered * (2.0 / n)])


def softmax(x, axis=-1):
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        gs = g[0] * out
        return [gs - out * np.sum(gs, axis=axis, keepdims=True)]

    return record("softmax", (x,), out, bw)


def log_softmax(x, axis=-1):
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))

    def bw(g):
        return [g[0] - np.exp(out) * np.sum(g[0], axis=axis, keepdims=True)]

    return record("log_softmax", (x,), out, bw)


# -- shape manipulation --------------------------------------------------------------

def reshape(x, shape):
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {old} to {tuple(shape)}") from None
    return record("reshape", (x,), out, lambda g: [g[0].reshape(old)])


def transpose(x, axes=None):
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return record("transpose", (x,), np.transpose(x.data, axes), lambda g: [np.transpose(g[0], inv)])


def concat(tensors, axis=0):
    tensors = list(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, t.shape)) if i != ax):
            raise ValueError(f"concat: shape mismatch {ref} vs {t.shape} along axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return record("concat", tuple(tensors), out, lambda g: np.split(g[0], sizes, axis=ax))


def _is_basic(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in items)


def getitem(x, idx):
    shape, dtype = x.shape, x.dtype
    basic = _is_basic(idx)

    def bw(g):
        gx = np.zeros(shape, dtype=dtype)
        if basic:
            gx[idx] = g[0]
        else:
            np.add.at(gx, idx, g[0])
        return [gx]

    return record("slice", (x,), x.data[idx], bw)


def take(table, ids):
    """Row lookup ``table[ids]`` (embedding); ``ids`` is an int array."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"take: index out of range for table of {table.shape[0]} rows")
    shape, dtype = table.shape, table.dtype

    def bw(g):
        gt = np.zeros(shape, dtype=dtype)
        np.add.at(gt, ids.ravel(), g[0].reshape(-1, *shape[1:]))
        return [gt]

    return record("take", (table,), table.data[ids], bw)


def _reverse_index(T, lengths):
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def time_reverse(x, lengths):
    """Reverse each row of ``x`` (batch, time, ...) within its own valid length.

    Frames past the length stay in place. The permutation is its own inverse.
    """
    idx = _reverse_index(x.shape[1], lengths)
    rows = np.arange(x.shape[0])[:, None]
    return record("time_reverse", (x,), x.data[rows, idx], lambda g: [g[0][rows, idx]])


# -- linear algebra -----------------------------------------------------------------

def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        g = g[0]
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return [ga, gb]

    return record("matmul", (a, b), np.matmul(ad, bd), bw)


def _same_pad(k):
    lo = (k - 1) // 2
    return lo, k - 1 - lo


def conv_output_extent(n, k, stride, padding):
    if padding == "same":
        return -(-n // stride)
    return (n - k) // stride + 1


def conv2d(x, w, b=None, stride=(1, 1), padding="same"):
    """2-D cross-correlation over (freq, time).

    x: (batch, in_ch, freq, time); w: (out_ch, in_ch, k_f, k_t); b: (out_ch,).
    ``same`` pads k-1 cells per axis, the odd cell on the high-index side,
    giving ceil(n/stride) outputs; ``valid`` gives floor((n-k)/stride)+1.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError(f"conv2d: expected 4-D input and filters, got {x.shape} and {w.shape}")
    B, C, F, T = x.shape
    Co, Ci, kf, kt = w.shape
    if Ci != C:
        raise ValueError(f"conv2d: shape mismatch input {x.shape} vs filters {w.shape}")
    sf, st = stride
    if padding == "same":
        (pf0, pf1), (pt0, pt1) = _same_pad(kf), _same_pad(kt)
    elif padding == "valid":
        pf0 = pf1 = pt0 = pt1 = 0
    else:
        raise ValueError(f"conv2d: unknown padding {padding!r}")
    xd = x.data
    if pf0 or pf1 or pt0 or pt1:
        xd = np.pad(xd, ((0, 0), (0, 0), (pf0, pf1), (pt0, pt1)))
    Fp, Tp = xd.shape[2], xd.shape[3]
    if Fp < kf or Tp < kt:
        raise ValueError(f"conv2d: input {x.shape} smaller than filter {w.shape}")
    win = sliding_window_view(xd, (kf, kt), axis=(2, 3))[:, :, ::sf, ::st]
    Fo, To = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Fo * To, C * kf * kt)
    wm = w.data.reshape(Co, -1)
    out = cols @ wm.T
    if b is not None:
        out += b.data
    out = np.ascontiguousarray(out.reshape(B, Fo, To, Co).transpose(0, 3, 1, 2))
    inputs = (x, w) if b is None else (x, w, b)
    padded_shape = (B, C, Fp, Tp)

    def bw(g):
        gr = g[0].transpose(0, 2, 3, 1).reshape(-1, Co)
        gw = (gr.T @ cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = np.ascontiguousarray((gr @ wm).reshape(B, Fo, To, C, kf, kt))
            dxp = _kernels.col2im(dcols, padded_shape, kf, kt, sf, st)
            gx = dxp[:, :, pf0:pf0 + F, pt0:pt0 + T]
        res = [gx, gw]
        if b is not None:
            res.append(gr.sum(axis=0))
        return res

    return record("conv2d", inputs, out, bw)


@functools.lru_cache(maxsize=64)
def _band_index(G, C, kf, F):
    lo = (kf - 1) // 2
    g, ci, k, fo = np.meshgrid(np.arange(G), np.arange(C), np.arange(kf), np.arange(F), indexing="ij")
    fi = fo + k - lo
    ok = (fi >= 0) & (fi < F)
    rows = (ci * F + fi)[ok]
    cols = (g * F + fo)[ok]
    widx = ((g * C + ci) * kf + k)[ok]
    return rows, cols, widx


def conv_as_matrix(w, freq: int):
    """Dense matrix M with ``flat(h) @ M == flat(conv2d(h, w, same))`` for single-frame h.

    w: (out_ch, in_ch, k_f, 1); h laid out (in_ch, freq) channel-major.
    Used for the state-to-state transition of a ConvLSTM inside the fused recurrence.
    """
    G, C, kf, kt = w.shape
    if kt != 1:
        raise ValueError(f"conv_as_matrix: time extent of recurrent filter must be 1, got {w.shape}")
    rows, cols, widx = _band_index(G, C, kf, freq)
    m = np.zeros((C * freq, G * freq), dtype=w.dtype)
    m[rows, cols] = w.data.ravel()[widx]

    def bw(g):
        gw = np.bincount(widx, weights=g[0][rows, cols], minlength=w.data.size)
        return [gw.astype(w.dtype).reshape(w.shape)]

    return record("conv_as_matrix", (w,), m, bw)


def lstm_sequence(xg, w_h, h0=None, c0=None):
    """Fused LSTM recurrence over all timesteps.

    xg: (batch, T, 4H) input-side pre-activations with bias, gate order i, f, g, o.
    w_h: (H, 4H). Returns (h for every step (batch, T, H), final cell state (batch, H)).
    """
    B, T, G = xg.shape
    H = G // 4
    if G != 4 * H or w_h.shape != (H, G):
        raise ValueError(f"lstm_sequence: shape mismatch gates {xg.shape} vs recurrent weights {w_h.shape}")
    dt = xg.dtype
    zeros = np.zeros((B, H), dtype=dt)
    h0d = zeros if h0 is None else np.ascontiguousarray(h0.data, dtype=dt)
    c0d = zeros if c0 is None else np.ascontiguousarray(c0.data, dtype=dt)
    whd = np.ascontiguousarray(w_h.data, dtype=dt)
    xt = np.ascontiguousarray(xg.data.transpose(1, 0, 2))
    hs, cs, gates = _kernels.lstm_forward(xt, whd, h0d, c0d)
    h_out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))
    inputs = [xg, w_h]
    if h0 is not None:
        inputs.append(h0)
    if c0 is not None:
        inputs.append(c0)

    def bw(g):
        dh = np.ascontiguousarray(g[0].transpose(1, 0, 2), dtype=dt)
        dc = np.ascontiguousarray(g[1], dtype=dt)
        dz, dh0, dc0 = _kernels.lstm_backward(dh, dc, whd, hs, cs, gates)
        dxg = dz.transpose(1, 0, 2)
        dwh = hs[:-1].reshape(-1, H).T @ dz.reshape(-1, G) if w_h.requires_grad else None
        res = [dxg, dwh]
        if h0 is not None:
            res.append(dh0)
        if c0 is not None:
            res.append(dc0)
        return res

    return record("lstm_sequence", inputs, (h_out, cs[T].copy()), bw, n_out=2)
