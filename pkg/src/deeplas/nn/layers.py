"""Layer types composed by the acoustic encoders.

Weight matrices start from U(-0.1, 0.1), convolution filters from a normal
with std 0.1 truncated at two std, biases from zero. Gate blocks of the
recurrent layers are packed along the last axis in the order i, f, g, o.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import Tensor, TruncatedNormal, Uniform, Zeros
from ..tensor.ops import (
    concat,
    conv2d,
    conv_as_matrix,
    lstm_sequence,
    masked_fill,
    power,
    relu,
    reshape,
    sigmoid,
    tanh,
    time_reverse,
    transpose,
)
from ..tensor.ops import sum as reduce_sum
from .module import BIAS, BN, Module, Parameter, Seq

WEIGHT_INIT = Uniform(-0.1, 0.1)
FILTER_INIT = TruncatedNormal(0.0, 0.1)


@dataclass
class LstmParams:
    w_x: Tensor  # (input_dim, 4H)
    w_h: Tensor  # (H, 4H)
    b: Tensor  # (4H,)


@dataclass
class ConvLstmParams:
    w_x: Tensor  # (4C, in_ch, k_f, 1)
    w_h: Tensor  # (4C, C, k_f, 1)
    b: Tensor  # (4C,)


def _gates(z, H, axis):
    def part(k):
        idx = [slice(None)] * z.ndim
        idx[axis] = slice(k * H, (k + 1) * H)
        return z[tuple(idx)]

    return sigmoid(part(0)), sigmoid(part(1)), tanh(part(2)), sigmoid(part(3))


def lstm_step(x_t, h_prev, c_prev, params: LstmParams):
    """One LSTM step without peepholes; x_t (B, D), h_prev and c_prev (B, H)."""
    H = params.w_h.shape[0]
    if x_t.shape[-1] != params.w_x.shape[0] or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ValueError(
            f"lstm_step: shape mismatch x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"vs W_x {params.w_x.shape}, W_h {params.w_h.shape}")
    z = x_t @ params.w_x + h_prev @ params.w_h + params.b
    i, f, g, o = _gates(z, H, -1)
    c = f * c_prev + i * g
    return o * tanh(c), c


def convlstm_step(x_t, h_prev, c_prev, params: ConvLstmParams):
    """One ConvLSTM step; every gate product is a convolution along frequency.

    x_t: (B, in_ch, F); h_prev, c_prev: (B, C, F). Same padding keeps F.
    """
    G, Cin, kf, _ = params.w_x.shape
    C = G // 4
    B, _, F = x_t.shape
    if x_t.shape[1] != Cin or h_prev.shape != (B, C, F) or params.w_h.shape[1] != C:
        raise ValueError(
            f"convlstm_step: channel mismatch x {x_t.shape}, h {h_prev.shape} vs filters "
            f"{params.w_x.shape}, {params.w_h.shape}")
    zx = conv2d(reshape(x_t, (B, Cin, F, 1)), params.w_x, params.b)
    zh = conv2d(reshape(h_prev, (B, C, F, 1)), params.w_h)
    z = reshape(zx + zh, (B, G, F))
    i, f, g, o = _gates(z, C, 1)
    c = f * c_prev + i * g
    return o * tanh(c), c


class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        super().__init__()
        self.w = self.make_param((in_dim, out_dim), WEIGHT_INIT, rng)
        if bias:
            self.b = self.make_param((out_dim,), Zeros(), rng, kind=BIAS)
        self.in_dim, self.out_dim = in_dim, out_dim

    def apply(self, x):
        y = x @ self.w
        return y + self.b if hasattr(self, "b") else y

    def forward(self, seq: Seq) -> Seq:
        return seq.with_x(self.apply(seq.x)).zero_pad()


class LSTM(Module):
    """Unidirectional LSTM layer running the fused recurrence."""

    def __init__(self, input_dim, hidden, rng):
        super().__init__()
        self.w_x = self.make_param((input_dim, 4 * hidden), WEIGHT_INIT, rng)
        self.w_h = self.make_param((hidden, 4 * hidden), WEIGHT_INIT, rng)
        self.b = self.make_param((4 * hidden,), Zeros(), rng, kind=BIAS)
        self.hidden = hidden

    @property
    def params(self) -> LstmParams:
        return LstmParams(self.w_x, self.w_h, self.b)

    def run(self, x, lengths, reverse=False):
        xg = x @ self.w_x + self.b
        if reverse:
            xg = time_reverse(xg, lengths)
        h, _ = lstm_sequence(xg, self.w_h)
        return time_reverse(h, lengths) if reverse else h


class BLSTM(Module):
    """Bidirectional LSTM: forward pass and per-utterance time-reversed pass, concatenated."""

    def __init__(self, input_dim, hidden, rng):
        super().__init__()
        self.fwd = LSTM(input_dim, hidden, rng)
        self.bwd = LSTM(input_dim, hidden, rng)
        self.hidden = hidden

    def forward(self, seq: Seq) -> Seq:
        if seq.layout != "seq":
            raise ValueError("BLSTM expects (batch, time, dims) input")
        if seq.T < 1:
            raise ValueError("BLSTM: empty sequence")
        x = seq.zero_pad().x
        out = concat([self.fwd.run(x, seq.lengths), self.bwd.run(x, seq.lengths, reverse=True)], axis=2)
        return seq.with_x(out).zero_pad()


def blstm(seq: Seq, fwd: LstmParams, bwd: LstmParams) -> Seq:
    """Functional BLSTM over explicit parameter sets."""
    out = []
    for p, rev in ((fwd, False), (bwd, True)):
        xg = seq.x @ p.w_x + p.b
        if rev:
            xg = time_reverse(xg, seq.lengths)
        h, _ = lstm_sequence(xg, p.w_h)
        out.append(time_reverse(h, seq.lengths) if rev else h)
    return seq.with_x(concat(out, axis=2)).zero_pad()


class ConvLSTM(Module):
    """Unidirectional ConvLSTM over a (batch, channels, freq, time) grid.

    The input-to-state convolution runs for all frames at once; the
    state-to-state convolution enters the fused recurrence as its equivalent
    banded matrix.
    """

    def __init__(self, in_ch, channels, rng, kf=3):
        super().__init__()
        self.w_x = self.make_param((4 * channels, in_ch, kf, 1), FILTER_INIT, rng)
        self.w_h = self.make_param((4 * channels, channels, kf, 1), FILTER_INIT, rng)
        self.b = self.make_param((4 * channels,), Zeros(), rng, kind=BIAS)
        self.channels = channels

    @property
    def params(self) -> ConvLstmParams:
        return ConvLstmParams(self.w_x, self.w_h, self.b)

    def run(self, x, lengths, reverse=False):
        B, _, F, T = x.shape
        C = self.channels
        zx = conv2d(x, self.w_x, self.b)
        xg = reshape(transpose(zx, (0, 3, 1, 2)), (B, T, 4 * C * F))
        if reverse:
            xg = time_reverse(xg, lengths)
        h, _ = lstm_sequence(xg, conv_as_matrix(self.w_h, F))
        if reverse:
            h = time_reverse(h, lengths)
        return transpose(reshape(h, (B, T, C, F)), (0, 2, 3, 1))


class BiConvLSTM(Module):
    def __init__(self, in_ch, channels, rng, kf=3):
        super().__init__()
        self.fwd = ConvLSTM(in_ch, channels, rng, kf)
        self.bwd = ConvLSTM(in_ch, channels, rng, kf)

    def forward(self, seq: Seq) -> Seq:
        if seq.layout != "grid":
            raise ValueError("ConvLSTM expects (batch, channels, freq, time) input")
        x = seq.zero_pad().x
        out = concat([self.fwd.run(x, seq.lengths), self.bwd.run(x, seq.lengths, reverse=True)], axis=1)
        return seq.with_x(out).zero_pad()


def bidirectional_convlstm(seq: Seq, fwd: ConvLstmParams, bwd: ConvLstmParams) -> Seq:
    out = []
    B, _, F, T = seq.x.shape
    x = seq.zero_pad().x
    for p, rev in ((fwd, False), (bwd, True)):
        C = p.w_h.shape[1]
        zx = conv2d(x, p.w_x, p.b)
        xg = reshape(transpose(zx, (0, 3, 1, 2)), (B, T, 4 * C * F))
        if rev:
            xg = time_reverse(xg, seq.lengths)
        h, _ = lstm_sequence(xg, conv_as_matrix(p.w_h, F))
        if rev:
            h = time_reverse(h, seq.lengths)
        out.append(transpose(reshape(h, (B, T, C, F)), (0, 2, 3, 1)))
    return seq.with_x(concat(out, axis=1)).zero_pad()


def batchnorm_seq(seq: Seq, gamma, beta, eps=1e-6, training=True, running=None, momentum=0.99) -> Seq:
    """Sequence-wise batch normalisation.

    Statistics are pooled per channel over every valid frame of every utterance
    in the batch (and over frequency for grids). ``running`` is an object with
    ``running_mean``/``running_var`` arrays, updated by EMA in training mode and
    used exclusively in inference mode.
    """
    pad = seq.pad_mask()
    if seq.layout == "seq":
        axes, bshape = (0, 1), (1, 1, -1)
        per_frame = 1
    else:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
        per_frame = seq.x.shape[2]
    n = int(np.sum(seq.lengths)) * per_frame
    g = reshape(gamma, bshape)
    b = reshape(beta, bshape)
    xz = masked_fill(seq.x, pad, 0.0)
    if training:
        if n < 1:
            raise ValueError("batchnorm: no valid frames")
        if n < 2:
            raise ValueError("batchnorm: train mode needs at least 2 frames per channel")
        mean = reduce_sum(xz, axes, keepdims=True) * (1.0 / n)
        xc = masked_fill(xz - mean, pad, 0.0)
        var = reduce_sum(xc * xc, axes, keepdims=True) * (1.0 / n)
        xhat = xc * power(var + eps, -0.5)
        if running is not None:
            running.running_mean = (momentum * running.running_mean
                                    + (1 - momentum) * mean.data.ravel()).astype(running.running_mean.dtype)
            running.running_var = (momentum * running.running_var
                                   + (1 - momentum) * var.data.ravel()).astype(running.running_var.dtype)
    else:
        rm = running.running_mean.reshape(bshape).astype(seq.x.dtype)
        rs = (1.0 / np.sqrt(running.running_var + eps)).reshape(bshape).astype(seq.x.dtype)
        xhat = (xz - rm) * rs
    return seq.with_x(masked_fill(xhat * g + b, pad, 0.0))


class BatchNorm(Module):
    def __init__(self, channels, eps=1e-6, momentum=0.99):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=np.float32), kind=BN)
        self.beta = Parameter(np.zeros(channels, dtype=np.float32), kind=BN)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self._buffers = ("running_mean", "running_var")
        self.eps, self.momentum = eps, momentum

    def forward(self, seq: Seq) -> Seq:
        return batchnorm_seq(seq, self.gamma, self.beta, self.eps, self.training, self, self.momentum)


class ReLU(Module):
    def forward(self, seq: Seq) -> Seq:
        return seq.with_x(relu(seq.x))


def _halve(seq: Seq) -> tuple[int, np.ndarray]:
    if seq.T < 2:
        raise ValueError(f"subsampling needs at least 2 frames, got {seq.T}")
    lengths = np.asarray(seq.lengths) // 2
    if lengths.min() < 1:
        raise ValueError(f"subsampling below length 1 (shortest utterance has {int(np.min(seq.lengths))} frames)")
    return seq.T // 2, lengths


class PairProject(Module):
    """Concatenate frames (2u, 2u+1) and project; an odd final frame is dropped."""

    def __init__(self, in_dim, out_dim, rng):
        super().__init__()
        self.proj = Linear(2 * in_dim, out_dim, rng)

    def forward(self, seq: Seq) -> Seq:
        if seq.layout != "seq":
            raise ValueError("projected subsampling expects (batch, time, dims) input")
        Tn, lengths = _halve(seq)
        B, _, D = seq.x.shape
        pairs = reshape(seq.zero_pad().x[:, : 2 * Tn], (B, Tn, 2 * D))
        return Seq(self.proj.apply(pairs), lengths).zero_pad()


class ProjectedSubsample(Module):
    """relu(BN(P [x_2u; x_2u+1] + b)): halves the frame rate."""

    def __init__(self, in_dim, out_dim, rng):
        super().__init__()
        self.pair = PairProject(in_dim, out_dim, rng)
        self.bn = BatchNorm(out_dim)
        self.relu = ReLU()

    def forward(self, seq: Seq) -> Seq:
        return self.relu(self.bn(self.pair(seq)))


class SkipSubsample(Module):
    """Keep every other frame (frames 0, 2, 4, ...), dropping an odd final frame."""

    def forward(self, seq: Seq) -> Seq:
        Tn, lengths = _halve(seq)
        if seq.layout == "seq":
            x = seq.x[:, 0 : 2 * Tn : 2]
        else:
            x = seq.x[:, :, :, 0 : 2 * Tn : 2]
        return seq.with_x(x, lengths)


class Flatten(Module):
    """(batch, channels, freq, time) -> (batch, time, channels*freq), channel-major."""

    def forward(self, seq: Seq) -> Seq:
        if seq.layout == "seq":
            return seq
        B, C, F, T = seq.x.shape
        return Seq(reshape(transpose(seq.x, (0, 3, 1, 2)), (B, T, C * F)), seq.lengths, "seq")


class Conv(Module):
    """Convolution over (freq, time) with time stride; a stride-s layer keeps floor(T/s) frames.

    On (batch, time, dims) input the feature axis acts as channels with a
    frequency extent of one.
    """

    def __init__(self, in_ch, out_ch, kf, kt, rng, stride_t=1):
        super().__init__()
        self.w = self.make_param((out_ch, in_ch, kf, kt), FILTER_INIT, rng)
        self.b = self.make_param((out_ch,), Zeros(), rng, kind=BIAS)
        self.stride_t = stride_t

    def forward(self, seq: Seq) -> Seq:
        s = self.stride_t
        seq = seq.zero_pad()
        x = seq.x
        if seq.layout == "seq":
            B, T, D = x.shape
            x = reshape(transpose(x, (0, 2, 1)), (B, D, 1, T))
        T = x.shape[3]
        if T // s < 1:
            raise ValueError(f"strided conv: {T} frames cannot be reduced by {s}")
        y = conv2d(x, self.w, self.b, stride=(1, s))
        lengths = np.asarray(seq.lengths) // s
        if s > 1:
            y = y[:, :, :, : T // s]
            if lengths.min() < 1:
                raise ValueError("strided conv: utterance reduced below length 1")
        if seq.layout == "seq":
            B, Co, _, Tn = y.shape
            y = transpose(reshape(y, (B, Co, Tn)), (0, 2, 1))
        return seq.with_x(y, lengths).zero_pad()


class NiNModule(Module):
    """1x1 convolution -> BN -> relu; time and frequency extents unchanged."""

    def __init__(self, in_ch, out_ch, rng):
        super().__init__()
        self.conv = Conv(in_ch, out_ch, 1, 1, rng)
        self.bn = BatchNorm(out_ch)
        self.relu = ReLU()

    def forward(self, seq: Seq) -> Seq:
        return self.relu(self.bn(self.conv(seq)))


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, seq: Seq) -> Seq:
        for layer in self.layers:
            seq = layer(seq)
        return seq


class ResidualBlock(Module):
    """y = F(x) + x with an identity shortcut; F must preserve shape."""

    def __init__(self, inner, kind: str):
        super().__init__()
        self.inner = Sequential(inner)
        self.kind = kind

    def forward(self, seq: Seq) -> Seq:
        y = self.inner(seq)
        if y.x.shape != seq.x.shape:
            raise ValueError(f"{self.kind}: inner output {y.x.shape} does not match input {seq.x.shape}")
        return seq.with_x(y.x + seq.x)


def res_cnn(channels, rng, k=3):
    """conv -> BN -> relu -> conv -> BN inside the shortcut."""
    return ResidualBlock([Conv(channels, channels, k, k, rng), BatchNorm(channels), ReLU(),
                          Conv(channels, channels, k, k, rng), BatchNorm(channels)], "ResCNN")


def res_convlstm(channels, rng, kf=3, k=3):
    """Bidirectional ConvLSTM followed by one conv (2C -> C) and BN."""
    return ResidualBlock([BiConvLSTM(channels, channels, rng, kf),
                          Conv(2 * channels, channels, k, k, rng), BatchNorm(channels)], "ResConvLSTM")


def res_lstm(dim, hidden, rng):
    """BLSTM followed by a linear map back to the block's input width."""
    return ResidualBlock([BLSTM(dim, hidden, rng), Linear(2 * hidden, dim, rng, bias=False)], "ResLSTM")
