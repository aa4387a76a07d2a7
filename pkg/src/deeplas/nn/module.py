"""Parameter containers and the batched-sequence carrier shared by all layers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..tensor import Tensor, tensor_init
from ..tensor.ops import masked_fill

# parameter kinds: "weight" gets weight noise and L2, "bias" and "bn" do not
WEIGHT, BIAS, BN = "weight", "bias", "bn"


class Parameter(Tensor):
    __slots__ = ("kind",)

    def __init__(self, data, kind: str = WEIGHT, name=None):
        super().__init__(data, requires_grad=True, name=name)
        self.kind = kind


class Module:
    """Minimal parameter-holding layer base; children are discovered from attributes."""

    training = True
    _order: tuple = ()

    def __init__(self):
        self._order = []

    def __setattr__(self, key, value):
        if isinstance(value, (Parameter, Module)) or (isinstance(value, list) and value and isinstance(value[0], Module)):
            order = self.__dict__.setdefault("_order", [])
            if key not in order:
                order.append(key)
        object.__setattr__(self, key, value)

    def make_param(self, shape, scheme, rng: np.random.Generator, kind=WEIGHT) -> Parameter:
        seed = int(rng.integers(0, 2**31 - 1))
        t = tensor_init(shape, scheme, seed)
        return Parameter(t.data, kind=kind)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key in self._order:
            v = getattr(self, key)
            if isinstance(v, Parameter):
                yield prefix + key, v
            elif isinstance(v, Module):
                yield from v.named_parameters(f"{prefix}{key}.")
            elif isinstance(v, list):
                for i, m in enumerate(v):
                    yield from m.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for key in self._order:
            v = getattr(self, key)
            if isinstance(v, Module):
                yield from v.modules()
            elif isinstance(v, list):
                for m in v:
                    yield from m.modules()

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key in self._order:
            v = getattr(self, key)
            if isinstance(v, Module):
                yield from v.named_buffers(f"{prefix}{key}.")
            elif isinstance(v, list):
                for i, m in enumerate(v):
                    yield from m.named_buffers(f"{prefix}{key}.{i}.")
        for key in getattr(self, "_buffers", ()):
            yield prefix + key, getattr(self, key)

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def to_dtype(self, dtype):
        """Cast parameters and buffers in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            for key in getattr(m, "_buffers", ()):
                setattr(m, key, getattr(m, key).astype(dtype))
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


@dataclass
class Seq:
    """A padded minibatch of sequences.

    ``x`` is (batch, time, dims) for layout "seq" or (batch, channels, freq, time)
    for layout "grid"; ``lengths`` holds each utterance's valid frame count.
    Frames past an utterance's length are kept at zero by every layer.
    """

    x: Tensor
    lengths: np.ndarray
    layout: str = "seq"

    @property
    def time_axis(self) -> int:
        return 1 if self.layout == "seq" else 3

    @property
    def T(self) -> int:
        return self.x.shape[self.time_axis]

    def valid(self) -> np.ndarray:
        """Boolean (batch, time) mask of real frames."""
        return np.arange(self.T)[None, :] < np.asarray(self.lengths)[:, None]

    def pad_mask(self) -> np.ndarray:
        """Boolean mask broadcastable to ``x``, true on padded frames."""
        pad = ~self.valid()
        if self.layout == "seq":
            return pad[:, :, None]
        return pad[:, None, None, :]

    def zero_pad(self) -> "Seq":
        return Seq(masked_fill(self.x, self.pad_mask(), 0.0), self.lengths, self.layout)

    def with_x(self, x: Tensor, lengths=None, layout=None) -> "Seq":
        return Seq(x, self.lengths if lengths is None else lengths, layout or self.layout)
