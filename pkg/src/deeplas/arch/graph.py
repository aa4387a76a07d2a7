"""Shape propagation over a parsed architecture, and encoder construction."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import nn
from .parser import ArchExpr, Unit, expand, parse, render_unit

GRID_UNITS = ("C", "ResCNN", "ResConvLSTM", "ConvLSTM")


@dataclass(frozen=True)
class InputSpec:
    """Per-frame feature layout: ``dims`` values, viewed as ``channels`` x (dims/channels) for conv graphs."""

    dims: int = 24
    channels: int = 3

    @property
    def freq(self) -> int:
        return self.dims // self.channels


@dataclass(frozen=True)
class ElabConfig:
    hidden: int = 256  # LSTM units per direction
    channels: int = 32  # conv output channels where a unit omits them
    convlstm_kf: int = 3
    baseline_subsample: bool = False
    baseline_reductions: int = 2
    # give a leading run of unstrided convs a time stride of 2, for strings that leave it implicit
    stride_front_convs: bool = False


@dataclass
class LayerDesc:
    kind: str
    label: str
    in_shape: tuple
    out_shape: tuple
    params: int
    counted: int  # contribution to the encoder layer count
    reduction: int = 1
    opts: dict = field(default_factory=dict)


@dataclass
class ArchGraph:
    text: str
    input_spec: InputSpec
    config: ElabConfig
    layers: list[LayerDesc]

    @property
    def input_layout(self) -> str:
        return self.layers[0].in_shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_shape[1]

    @property
    def num_layers(self) -> int:
        return sum(d.counted for d in self.layers)

    @property
    def num_params(self) -> int:
        return sum(d.params for d in self.layers)

    @property
    def time_reduction(self) -> int:
        return int(np.prod([d.reduction for d in self.layers]))

    def reduced_length(self, T: int) -> int:
        for d in self.layers:
            T //= d.reduction
        return T

    def table(self) -> str:
        rows = [f"{'#':>5}  {'layer':<18} {'in':<16} {'out':<16} {'params':>9}  time/"]
        idx = 0
        for d in self.layers:
            tag = ""
            if d.counted:
                idx += d.counted
                tag = str(idx) if d.counted == 1 else f"{idx - d.counted + 1}-{idx}"
            rows.append(f"{tag:>5}  {d.label:<18} {_fmt(d.in_shape):<16} {_fmt(d.out_shape):<16} "
                        f"{d.params:>9}  {d.reduction}")
        rows.append(f"layers={self.num_layers} params={self.num_params} time_reduction={self.time_reduction}")
        return "\n".join(rows)


class ElaborationError(ValueError):
    pass


def _fmt(shape):
    if shape[0] == "seq":
        return f"seq[{shape[1]}]"
    return f"grid[{shape[1]}x{shape[2]}]"


def _lstm_params(d, h):
    return 2 * (d * 4 * h + h * 4 * h + 4 * h)


def _convlstm_params(cin, c, kf):
    return 2 * (4 * c * cin * kf + 4 * c * c * kf + 4 * c)


def _baseline_units(units: list[Unit], n: int) -> list[Unit]:
    out: list[Unit] = []
    left = n
    for i, u in enumerate(units):
        out.append(u)
        if left and u.kind == "L" and i + 1 < len(units) and units[i + 1].kind == "L":
            out.append(Unit("S", stride=2))
            left -= 1
    return out


def _stride_front(units: list[Unit]) -> list[Unit]:
    out = list(units)
    for i, u in enumerate(out):
        if u.kind != "C":
            break
        if u.stride == 1:
            out[i] = replace(u, stride=2)
    return out


def elaborate(expr: ArchExpr | str, input_spec: InputSpec = InputSpec(), config: ElabConfig = ElabConfig(),
              min_length: int | None = None) -> ArchGraph:
    """Resolve shapes, parameter counts, layer counts and the time-reduction factor.

    Counted layers: every conv (including those inside residual blocks), 1x1
    conv, LSTM/ConvLSTM layer and projection; BN and relu count zero.
    """
    text = expr if isinstance(expr, str) else None
    if isinstance(expr, str):
        expr = parse(expr)
    units = expand(expr)
    if config.baseline_subsample:
        units = _baseline_units(units, config.baseline_reductions)
    if config.stride_front_convs:
        units = _stride_front(units)
    if not units:
        raise ElaborationError("empty architecture")
    if input_spec.dims % input_spec.channels:
        raise ElaborationError(f"input dims {input_spec.dims} not divisible by channels {input_spec.channels}")
    H, CH = config.hidden, config.channels
    shape = ("grid", input_spec.channels, input_spec.freq) if units[0].kind in GRID_UNITS else ("seq", input_spec.dims)
    layers: list[LayerDesc] = []

    def flatten():
        nonlocal shape
        if shape[0] == "grid":
            out = ("seq", shape[1] * shape[2])
            layers.append(LayerDesc("Flatten", "flatten", shape, out, 0, 0))
            shape = out

    def need_grid(u):
        if shape[0] != "grid":
            raise ElaborationError(f"{render_unit(u)} needs a (channels x freq) input, got {_fmt(shape)}")

    for u in units:
        label = render_unit(u)
        if u.kind == "L":
            flatten()
            out = ("seq", 2 * H)
            layers.append(LayerDesc("L", label, shape, out, _lstm_params(shape[1], H), 1))
        elif u.kind == "ResLSTM":
            flatten()
            D = shape[1]
            layers.append(LayerDesc("ResLSTM", label, shape, shape, _lstm_params(D, H) + 2 * H * D, 1))
        elif u.kind == "P":
            flatten()
            D = shape[1]
            layers.append(LayerDesc("P", label, shape, shape, 2 * D * D + D, 1, reduction=2))
        elif u.kind == "S":
            layers.append(LayerDesc("S", label, shape, shape, 0, 0, reduction=2))
        elif u.kind == "B":
            layers.append(LayerDesc("B", label, shape, shape, 2 * shape[1], 0))
        elif u.kind == "R":
            layers.append(LayerDesc("R", label, shape, shape, 0, 0))
        elif u.kind == "C":
            if shape[0] == "grid":
                out = ("grid", CH, shape[2])
            else:
                out = shape  # per-frame conv over the feature axis keeps the width
            cin = shape[1]
            layers.append(LayerDesc("C", label, shape, out, out[1] * cin * u.kf * u.kt + out[1], 1,
                                    reduction=u.stride, opts={"kf": u.kf, "kt": u.kt}))
        elif u.kind == "ResCNN":
            need_grid(u)
            if shape[1] != CH:
                raise ElaborationError(
                    f"ResCNN residual shape mismatch: input has {shape[1]} channels, inner convs produce {CH}")
            p = 2 * (CH * CH * 9 + CH) + 2 * 2 * CH
            layers.append(LayerDesc("ResCNN", label, shape, shape, p, 2))
        elif u.kind == "ResConvLSTM":
            need_grid(u)
            if u.kt != 1:
                raise ElaborationError(f"{label}: recurrent filters must have time extent 1")
            if shape[1] != CH:
                raise ElaborationError(
                    f"ResConvLSTM residual shape mismatch: input has {shape[1]} channels, block produces {CH}")
            p = _convlstm_params(CH, CH, u.kf) + (CH * 2 * CH * 9 + CH) + 2 * CH
            layers.append(LayerDesc("ResConvLSTM", label, shape, shape, p, 2, opts={"kf": u.kf}))
        elif u.kind == "ConvLSTM":
            need_grid(u)
            kf = u.kf or config.convlstm_kf
            if (u.kt or 1) != 1:
                raise ElaborationError(f"{label}: recurrent filters must have time extent 1")
            out = ("grid", 2 * CH, shape[2])
            layers.append(LayerDesc("ConvLSTM", label, shape, out, _convlstm_params(shape[1], CH, kf), 1,
                                    opts={"kf": kf}))
        else:  # pragma: no cover - parser guarantees the kinds
            raise ElaborationError(f"unknown unit {u.kind}")
        shape = layers[-1].out_shape
    flatten()
    graph = ArchGraph(text or "", input_spec, config, layers)
    if min_length is not None and graph.reduced_length(min_length) < 1:
        raise ElaborationError(f"subsampling below length 1: {min_length} frames reduced by {graph.time_reduction}")
    return graph


def build_encoder(graph: ArchGraph, rng: np.random.Generator) -> nn.Sequential:
    """Instantiate the layers described by ``graph``."""
    mods = []
    H = graph.config.hidden
    for d in graph.layers:
        k, s_in = d.kind, d.in_shape
        if k == "Flatten":
            mods.append(nn.Flatten())
        elif k == "L":
            mods.append(nn.BLSTM(s_in[1], H, rng))
        elif k == "ResLSTM":
            mods.append(nn.res_lstm(s_in[1], H, rng))
        elif k == "P":
            mods.append(nn.PairProject(s_in[1], d.out_shape[1], rng))
        elif k == "S":
            mods.append(nn.SkipSubsample())
        elif k == "B":
            mods.append(nn.BatchNorm(s_in[1]))
        elif k == "R":
            mods.append(nn.ReLU())
        elif k == "C":
            mods.append(nn.Conv(s_in[1], d.out_shape[1], d.opts["kf"], d.opts["kt"], rng, stride_t=d.reduction))
        elif k == "ResCNN":
            mods.append(nn.res_cnn(s_in[1], rng))
        elif k == "ResConvLSTM":
            mods.append(nn.res_convlstm(s_in[1], rng, kf=d.opts["kf"]))
        elif k == "ConvLSTM":
            mods.append(nn.BiConvLSTM(s_in[1], d.out_shape[1] // 2, rng, kf=d.opts["kf"]))
    return nn.Sequential(mods)
