"""Greedy and beam-search decoding for a trained LAS model."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .data.features import pad_batch
from .model.las import LAS, DecoderState, EncoderOutput
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]  # emitted ids, including the final <eos> when finished
    log_prob: float
    finished: bool

    def text_ids(self, eos: int) -> tuple[int, ...]:
        return self.tokens[:-1] if self.finished and self.tokens and self.tokens[-1] == eos else self.tokens


@contextmanager
def inference(model: LAS):
    """Eval mode and no tape for the duration; the previous mode is restored."""
    was = model.training
    model.eval()
    try:
        with no_grad():
            yield
    finally:
        model.train(was)


def _as_batch(model: LAS, features):
    feats = [np.asarray(f, dtype=model.embed.dtype) for f in features]
    return pad_batch(feats)


def greedy_decode(model: LAS, features, max_len: int) -> list[list[int]]:
    """Argmax decoding of a list of (T, D) inputs; ties go to the lowest token id.

    Returned id lists exclude the terminating <eos>.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    x, lengths = _as_batch(model, features)
    eos = model.vocab.eos
    with inference(model):
        enc = model.listen(x, lengths)
        state = model.initial_state(enc)
        B = x.shape[0]
        prev = np.full(B, model.vocab.sos)
        out = [[] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            state, logp, _ = model.decode_step(prev, state, enc)
            prev = np.argmax(logp.data, axis=1)  # first maximum = lowest id
            for b in np.nonzero(~done)[0]:
                if prev[b] == eos:
                    done[b] = True
                else:
                    out[b].append(int(prev[b]))
            if done.all():
                break
    return out


def _rows(t: Tensor, idx) -> Tensor:
    return Tensor(t.data[idx])


def _select(state: DecoderState, idx) -> DecoderState:
    return DecoderState(_rows(state.h, idx), _rows(state.c, idx), _rows(state.context, idx), state.step)


def _tile(enc: EncoderOutput, k: int) -> EncoderOutput:
    idx = np.zeros(k, dtype=np.int64)
    return EncoderOutput(_rows(enc.h, idx), enc.lengths[idx], _rows(enc.keys, idx))


def _rank_key(score: float, tokens: tuple[int, ...]):
    return (-score, tokens)


def beam_decode(model: LAS, features, width: int, max_len: int, length_norm: bool = False) -> Hypothesis:
    """Beam search over total log-probabilities for one (T, D) utterance.

    Candidates are ranked by log-prob, then by token ids lexicographically.
    A candidate ending in <eos> leaves the beam and joins the finished pool;
    hypotheses still open at ``max_len`` compete with the finished ones.
    With ``length_norm`` the final choice uses log-prob per emitted token.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    x, lengths = _as_batch(model, [features])
    eos, V = model.vocab.eos, len(model.vocab)
    finished: list[Hypothesis] = []
    with inference(model):
        enc1 = model.listen(x, lengths)
        live = [Hypothesis((), 0.0, False)]
        state = model.initial_state(enc1)
        enc = enc1
        for _ in range(max_len):
            prev = np.array([h.tokens[-1] if h.tokens else model.vocab.sos for h in live])
            state, logp, _ = model.decode_step(prev, state, enc)
            lp = logp.data.astype(np.float64)
            cands = []
            for r, h in enumerate(live):
                for v in range(V):
                    cands.append((h.log_prob + float(lp[r, v]), h.tokens + (v,), r))
            cands.sort(key=lambda c: _rank_key(c[0], c[1]))
            keep, rows = [], []
            for score, toks, r in cands[:width]:
                if toks[-1] == eos:
                    finished.append(Hypothesis(toks, score, True))
                else:
                    keep.append(Hypothesis(toks, score, False))
                    rows.append(r)
            if not keep:
                live = []
                break
            live = keep
            if len(rows) != enc.h.shape[0]:
                enc = _tile(enc1, len(rows))
            state = _select(state, np.array(rows))
            if not length_norm and finished:
                best_done = max(f.log_prob for f in finished)
                if best_done > live[0].log_prob:
                    break  # scores only decrease, nothing open can win
    pool = finished + live

    def final_score(h: Hypothesis) -> float:
        return h.log_prob / max(1, len(h.tokens)) if length_norm else h.log_prob

    return min(pool, key=lambda h: _rank_key(final_score(h), h.tokens))


def brute_force_decode(model: LAS, features, max_len: int) -> Hypothesis:
    """Exhaustive search over every token sequence up to ``max_len``; for tiny vocabularies only."""
    x, lengths = _as_batch(model, [features])
    eos, V = model.vocab.eos, len(model.vocab)
    pool: list[Hypothesis] = []
    with inference(model):
        enc1 = model.listen(x, lengths)
        frontier = [((), 0.0, model.initial_state(enc1))]
        for _ in range(max_len):
            nxt = []
            for toks, score, st in frontier:
                prev = [toks[-1] if toks else model.vocab.sos]
                st2, logp, _ = model.decode_step(prev, st, enc1)
                for v in range(V):
                    s = score + float(logp.data[0, v])
                    if v == eos:
                        pool.append(Hypothesis(toks + (v,), s, True))
                    else:
                        nxt.append((toks + (v,), s, st2))
            frontier = nxt
        pool += [Hypothesis(t, s, False) for t, s, _ in frontier]
    return min(pool, key=lambda h: _rank_key(h.log_prob, h.tokens))
