"""``FBK1`` feature files: a small little-endian container for utterances."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .features import Utterance

MAGIC = b"FBK1"


class FeatureFileError(ValueError):
    pass


class BadMagicError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class DuplicateIdError(FeatureFileError):
    pass


def _text(s: str, width: str) -> bytes:
    b = s.encode("utf-8")
    limit = 0xFFFF if width == "<H" else 0xFFFFFFFF
    if len(b) > limit:
        raise FeatureFileError(f"string of {len(b)} bytes too long for field")
    return struct.pack(width, len(b)) + b


def dumps(dataset: list[Utterance]) -> bytes:
    seen = set()
    parts = [MAGIC, struct.pack("<I", len(dataset))]
    for u in dataset:
        if u.id in seen:
            raise DuplicateIdError(f"duplicate utterance id {u.id!r}")
        seen.add(u.id)
        feats = np.ascontiguousarray(u.features, dtype="<f4")
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise FeatureFileError(f"{u.id}: features must be (T >= 1, D)")
        parts += [_text(u.id, "<H"), _text(u.speaker, "<H"), struct.pack("<II", *feats.shape),
                  feats.tobytes(), _text(u.transcript, "<I")]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes, where: str):
        self.buf, self.pos, self.where = buf, 0, where

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"{self.where}: truncated while reading {what} "
                                     f"(need {n} bytes at offset {self.pos}, file has {len(self.buf)})")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def text(self, width: str, what: str) -> str:
        (n,) = self.unpack(width, what + " length")
        return self.take(n, what).decode("utf-8")


def loads(buf: bytes, where: str = "<bytes>") -> list[Utterance]:
    r = _Reader(buf, where)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"{where}: bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}")
    r.pos = 4
    (count,) = r.unpack("<I", "utterance count")
    out, seen = [], set()
    for _ in range(count):
        uid = r.text("<H", "id")
        if uid in seen:
            raise DuplicateIdError(f"{where}: duplicate utterance id {uid!r}")
        seen.add(uid)
        spk = r.text("<H", "speaker")
        T, D = r.unpack("<II", "shape")
        if T < 1 or D < 1:
            raise FeatureFileError(f"{where}: utterance {uid!r} has empty shape {T}x{D}")
        feats = np.frombuffer(r.take(4 * T * D, f"{uid} payload"), dtype="<f4").reshape(T, D).astype(np.float32)
        text = r.text("<I", "transcript")
        out.append(Utterance(uid, spk, feats, text))
    if r.pos != len(buf):
        raise FeatureFileError(f"{where}: {len(buf) - r.pos} trailing bytes after {count} utterances")
    return out


def write_features(path, dataset: list[Utterance]) -> None:
    Path(path).write_bytes(dumps(dataset))


def read_features(path) -> list[Utterance]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"feature file not found: {p}")
    return loads(p.read_bytes(), str(p))


def read_transcripts(path) -> dict[str, str]:
    """``id<TAB>text`` lines; blank lines are skipped."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"transcript file not found: {p}")
    out = {}
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise FeatureFileError(f"{p}:{n}: expected id<TAB>text")
        uid, text = line.split("\t", 1)
        if uid in out:
            raise DuplicateIdError(f"{p}:{n}: duplicate id {uid!r}")
        out[uid] = text
    return out


def attach_transcripts(dataset: list[Utterance], transcripts: dict[str, str]) -> list[Utterance]:
    missing = [u.id for u in dataset if u.id not in transcripts]
    if missing:
        raise KeyError(f"no transcript for utterance {missing[0]!r}")
    return [Utterance(u.id, u.speaker, u.features, transcripts[u.id]) for u in dataset]
