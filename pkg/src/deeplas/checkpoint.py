"""Checkpoint files: magic, JSON header, then little-endian float32 tensors.

Layout: ``DLCK`` | u32 header length | UTF-8 JSON header | payload. The header
records the format version, the training config, the input width and, per
tensor, its name, shape and byte offset into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .train.config import TrainConfig, build_model, config_from_dict

MAGIC = b"DLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _collect(model, optimizer=None) -> list[tuple[str, np.ndarray]]:
    items = [(f"param/{n}", p.data) for n, p in model.named_parameters()]
    items += [(f"buffer/{n}", b) for n, b in model.named_buffers()]
    if optimizer is not None:
        names = [n for n, _ in model.named_parameters()]
        items += [(f"adam_m/{n}", m) for n, m in zip(names, optimizer.state.m)]
        items += [(f"adam_v/{n}", v) for n, v in zip(names, optimizer.state.v)]
    return items


def save_checkpoint(path, model, cfg: TrainConfig, optimizer=None, extra: dict | None = None) -> None:
    items = _collect(model, optimizer)
    tensors, chunks, off = [], [], 0
    for name, arr in items:
        b = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": off})
        chunks.append(b)
        off += len(b)
    header = {
        "version": VERSION,
        "config": cfg.to_dict(),
        "input_dims": model.graph.input_spec.dims,
        "tensors": tensors,
        "extra": extra or {},
    }
    if optimizer is not None:
        header["optimizer"] = {"lr": optimizer.state.lr, "step": optimizer.state.step}
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(chunks))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    buf = p.read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{p}: not a checkpoint (bad magic)")
    if len(buf) < 8:
        raise CheckpointError(f"{p}: truncated header")
    (hlen,) = struct.unpack("<I", buf[4:8])
    try:
        header = json.loads(buf[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{p}: corrupt header: {e}") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"{p}: unsupported version {header.get('version')}")
    payload = memoryview(buf)[8 + hlen:]
    arrays = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64)) * 4
        if t["offset"] + n > len(payload):
            raise CheckpointError(f"{p}: payload truncated at tensor {t['name']}")
        raw = np.frombuffer(payload[t["offset"]:t["offset"] + n], dtype="<f4")
        arrays[t["name"]] = raw.reshape(t["shape"]).astype(np.float32)
    return header, arrays


def load_into(model, arrays: dict[str, np.ndarray], optimizer=None) -> None:
    """Copy stored values into ``model``; every parameter and buffer must be present exactly once."""
    params = dict(model.named_parameters())
    expected = {f"param/{n}" for n in params} | {f"buffer/{n}" for n, _ in model.named_buffers()}
    stored = {k for k in arrays if k.startswith(("param/", "buffer/"))}
    if expected != stored:
        missing, unexpected = sorted(expected - stored), sorted(stored - expected)
        raise CheckpointError(f"checkpoint mismatch: missing {missing[:3]}, unexpected {unexpected[:3]}")
    for n, p in params.items():
        a = arrays[f"param/{n}"]
        if a.shape != p.data.shape:
            raise CheckpointError(f"{n}: shape {a.shape} != model {p.data.shape}")
        p.data = a.astype(p.data.dtype)
    owners = {}
    for m_prefix, mod in _module_paths(model):
        for key in getattr(mod, "_buffers", ()):
            owners[m_prefix + key] = (mod, key)
    for name, (mod, key) in owners.items():
        setattr(mod, key, arrays[f"buffer/{name}"].astype(getattr(mod, key).dtype))
    if optimizer is not None:
        for i, n in enumerate(params):
            if f"adam_m/{n}" in arrays:
                optimizer.state.m[i] = arrays[f"adam_m/{n}"].astype(optimizer.state.m[i].dtype)
                optimizer.state.v[i] = arrays[f"adam_v/{n}"].astype(optimizer.state.v[i].dtype)


def _module_paths(mod, prefix=""):
    yield prefix, mod
    for key in mod._order:
        v = getattr(mod, key)
        if isinstance(v, list):
            for i, m in enumerate(v):
                yield from _module_paths(m, f"{prefix}{key}.{i}.")
        elif hasattr(v, "_order"):
            yield from _module_paths(v, f"{prefix}{key}.")


def load_checkpoint(path):
    """Rebuild the model described by the checkpoint and load its values: (model, config, header)."""
    header, arrays = read_checkpoint(path)
    cfg = config_from_dict(header["config"])
    model = build_model(cfg, header["input_dims"])
    load_into(model, arrays)
    model.eval()
    return model, cfg, header
