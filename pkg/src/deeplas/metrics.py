"""Levenshtein alignment counts and character/word error rates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class EditCounts:
    distance: int
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(self.distance + other.distance, self.substitutions + other.substitutions,
                          self.insertions + other.insertions, self.deletions + other.deletions,
                          self.ref_len + other.ref_len)

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            raise ValueError("error rate undefined for an empty reference")
        return self.distance / self.ref_len


def _as_ids(ref: Sequence[Hashable], hyp: Sequence[Hashable]):
    table: dict = {}
    r = np.array([table.setdefault(t, len(table)) for t in ref], dtype=np.int64)
    h = np.array([table.setdefault(t, len(table)) for t in hyp], dtype=np.int64)
    return r, h


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> tuple[int, int, int, int]:
    """Unit-cost Levenshtein distance as (distance, substitutions, insertions, deletions)."""
    r, h = _as_ids(ref, hyp)
    return tuple(int(v) for v in _kernels.edit_ops(r, h))


def words(text: str) -> list[str]:
    return [w for w in text.split(" ") if w]


def counts(ref: Sequence, hyp: Sequence) -> EditCounts:
    d, s, i, de = edit_distance(ref, hyp)
    return EditCounts(d, s, i, de, len(ref))


def cer(ref: str, hyp: str) -> float:
    return counts(list(ref), list(hyp)).rate


def wer(ref: str, hyp: str) -> float:
    return counts(words(ref), words(hyp)).rate


def corpus_rates(refs: Sequence[str], hyps: Sequence[str]) -> tuple[float, float]:
    """(CER, WER) with errors and reference lengths summed over the corpus."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    c = EditCounts(0, 0, 0, 0, 0)
    w = EditCounts(0, 0, 0, 0, 0)
    for r, h in zip(refs, hyps):
        c = c + counts(list(r), list(h))
        w = w + counts(words(r), words(h))
    return c.rate, w.rate
