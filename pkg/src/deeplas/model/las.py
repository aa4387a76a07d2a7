"""Listen, Attend and Spell: deep acoustic encoder plus attention-based character decoder."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..arch import ArchGraph, ElabConfig, InputSpec, build_encoder, elaborate
from ..nn import BIAS, Module, Seq
from ..nn.layers import WEIGHT_INIT
from ..tensor import Tensor, Zeros
from ..tensor.ops import (
    concat,
    log_softmax,
    lstm_sequence,
    masked_fill,
    matmul,
    reshape,
    softmax,
    take,
    tanh,
)
from ..tensor.ops import sum as reduce_sum

SOS, EOS = "<sos>", "<eos>"


class Vocabulary:
    """Token inventory: ``<sos>``, ``<eos>``, space, then the given characters."""

    def __init__(self, chars: str):
        chars = "".join(dict.fromkeys(c for c in chars if c != " "))
        self.tokens = [SOS, EOS, " "] + list(chars)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.chars = chars

    @property
    def sos(self) -> int:
        return 0

    @property
    def eos(self) -> int:
        return 1

    def __len__(self):
        return len(self.tokens)

    def encode(self, text: str, eos: bool = True) -> list[int]:
        try:
            ids = [self.index[c] for c in text]
        except KeyError as e:
            raise ValueError(f"character {e.args[0]!r} is not in the vocabulary") from None
        return ids + [self.eos] if eos else ids

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == self.eos:
                break
            if i == self.sos:
                continue
            out.append(self.tokens[i])
        return "".join(out)


@dataclass
class EncoderOutput:
    h: Tensor  # (batch, U, dims)
    lengths: np.ndarray
    keys: Tensor | None = None  # attention projection of h

    def pad_mask(self) -> np.ndarray:
        return np.arange(self.h.shape[1])[None, :] >= self.lengths[:, None]


@dataclass
class DecoderState:
    h: Tensor  # decoder LSTM output (batch, Hd)
    c: Tensor  # decoder LSTM cell (batch, Hd)
    context: Tensor  # previous attention context (batch, dims)
    step: int = 0


def attention_context(s, enc: EncoderOutput, w_s, b, v):
    """Content-based MLP attention: e_u = v . tanh(W_s s + W_h h_u + b), softmax over valid u."""
    mask = enc.pad_mask()
    if mask.all(axis=1).any():
        raise ValueError("attention: an utterance has no valid encoder positions")
    B, U, _ = enc.h.shape
    q = s @ w_s + b
    e = tanh(enc.keys + reshape(q, (B, 1, q.shape[-1])))
    scores = reshape(e @ reshape(v, (v.shape[0], 1)), (B, U))
    alpha = softmax(masked_fill(scores, mask, -np.inf), axis=1)
    ctx = reshape(matmul(reshape(alpha, (B, 1, U)), enc.h), (B, enc.h.shape[2]))
    return ctx, alpha


class LAS(Module):
    def __init__(self, arch, vocab: Vocabulary, input_spec: InputSpec = InputSpec(),
                 elab: ElabConfig = ElabConfig(), dec_hidden: int = 256, seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.graph: ArchGraph = arch if isinstance(arch, ArchGraph) else elaborate(arch, input_spec, elab)
        self.vocab = vocab
        self.encoder = build_encoder(self.graph, rng)
        D, Hd, V = self.graph.output_dim, dec_hidden, len(vocab)
        E = A = Hd
        self.enc_dim, self.dec_hidden, self.emb_dim = D, Hd, E
        self.embed = self.make_param((V, E), WEIGHT_INIT, rng)
        self.dec_wx = self.make_param((E + D, 4 * Hd), WEIGHT_INIT, rng)
        self.dec_wh = self.make_param((Hd, 4 * Hd), WEIGHT_INIT, rng)
        self.dec_b = self.make_param((4 * Hd,), Zeros(), rng, kind=BIAS)
        self.att_ws = self.make_param((Hd, A), WEIGHT_INIT, rng)
        self.att_wh = self.make_param((D, A), WEIGHT_INIT, rng)
        self.att_b = self.make_param((A,), Zeros(), rng, kind=BIAS)
        self.att_v = self.make_param((A,), WEIGHT_INIT, rng)
        self.out_w = self.make_param((Hd + D, V), WEIGHT_INIT, rng)
        self.out_b = self.make_param((V,), Zeros(), rng, kind=BIAS)

    # -- encoder ---------------------------------------------------------------

    def _input_seq(self, features, lengths) -> Seq:
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=self.embed.dtype))
        lengths = np.asarray(lengths, dtype=np.int64)
        if x.ndim != 3:
            raise ValueError(f"listen: features must be (batch, time, dims), got {x.shape}")
        if self.graph.input_layout == "grid":
            spec = self.graph.input_spec
            B, T, _ = x.shape
            x = reshape(x, (B, T, spec.channels, spec.freq)).transpose(0, 2, 3, 1)
            return Seq(x, lengths, "grid").zero_pad()
        return Seq(x, lengths, "seq").zero_pad()

    def listen(self, features, lengths) -> EncoderOutput:
        """Encode (batch, time, dims) features; U is T after the graph's time reduction."""
        lengths = np.asarray(lengths, dtype=np.int64)
        shortest = int(lengths.min())
        if self.graph.reduced_length(shortest) < 1:
            raise ValueError(f"listen: utterance of {shortest} frames is shorter than the time-reduction "
                             f"factor {self.graph.time_reduction}")
        out = self.encoder(self._input_seq(features, lengths))
        return EncoderOutput(out.x, np.asarray(out.lengths), out.x @ self.att_wh)

    # -- decoder ---------------------------------------------------------------

    def initial_state(self, enc: EncoderOutput) -> DecoderState:
        B = enc.h.shape[0]
        dt = enc.h.dtype
        z = Tensor(np.zeros((B, self.dec_hidden), dtype=dt))
        return DecoderState(z, z, Tensor(np.zeros((B, self.enc_dim), dtype=dt)), 0)

    def attend(self, s, enc: EncoderOutput):
        return attention_context(s, enc, self.att_ws, self.att_b, self.att_v)

    def _cell(self, xg, state: DecoderState):
        B = xg.shape[0]
        hs, c = lstm_sequence(reshape(xg, (B, 1, xg.shape[-1])), self.dec_wh, state.h, state.c)
        return reshape(hs, (B, self.dec_hidden)), c

    def decode_step(self, y_prev, state: DecoderState, enc: EncoderOutput):
        """One decoder step from token ids ``y_prev``; returns (new state, log-probs, attention)."""
        ids = np.asarray(y_prev, dtype=np.int64).reshape(-1)
        if ids.min() < 0 or ids.max() >= len(self.vocab):
            raise ValueError(f"decode_step: token id outside vocabulary of {len(self.vocab)}")
        x = concat([take(self.embed, ids), state.context], axis=1)
        h, c = self._cell(x @ self.dec_wx + self.dec_b, state)
        ctx, alpha = self.attend(h, enc)
        logp = log_softmax(concat([h, ctx], axis=1) @ self.out_w + self.out_b, axis=1)
        return DecoderState(h, c, ctx, state.step + 1), logp, alpha

    def teacher_forced(self, enc: EncoderOutput, targets: np.ndarray) -> Tensor:
        """Log-probs (batch, S, V) for every step, feeding ground-truth previous tokens."""
        targets = np.asarray(targets, dtype=np.int64)
        B, S = targets.shape
        prev = np.concatenate([np.full((B, 1), self.vocab.sos), targets[:, :-1]], axis=1)
        E = self.emb_dim
        emb_proj = take(self.embed, prev) @ self.dec_wx[:E] + self.dec_b  # (B, S, 4Hd)
        w_ctx = self.dec_wx[E:]
        state = self.initial_state(enc)
        outs = []
        for i in range(S):
            xg = emb_proj[:, i] + state.context @ w_ctx
            h, c = self._cell(xg, state)
            ctx, _ = self.attend(h, enc)
            state = DecoderState(h, c, ctx, i + 1)
            outs.append(concat([h, ctx], axis=1))
        feats = reshape(concat(outs, axis=1), (B, S, self.dec_hidden + self.enc_dim))
        return log_softmax(feats @ self.out_w + self.out_b, axis=2)

    def token_log_probs(self, features, lengths, targets, target_lengths) -> Tensor:
        """Per-utterance sums of log P(y_i | x, y_<i) over the valid target steps, shape (batch,)."""
        targets = np.asarray(targets, dtype=np.int64)
        if targets.min() < 0 or targets.max() >= len(self.vocab):
            raise ValueError("token outside vocabulary")
        logp = self.teacher_forced(self.listen(features, lengths), targets)
        B, S = targets.shape
        pick = np.zeros(logp.shape, dtype=bool)
        valid = np.arange(S)[None, :] < np.asarray(target_lengths)[:, None]
        bi, si = np.nonzero(valid)
        pick[bi, si, targets[bi, si]] = True
        return reduce_sum(masked_fill(logp, ~pick, 0.0), axis=(1, 2))

    def loss(self, features, lengths, targets, target_lengths) -> Tensor:
        """Cross-entropy averaged over the non-pad target tokens in the batch."""
        n = int(np.sum(target_lengths))
        return reduce_sum(self.token_log_probs(features, lengths, targets, target_lengths)) * (-1.0 / n)

    def sequence_log_prob(self, features, transcript) -> float:
        """log P(y|x) for one utterance; ``transcript`` is text or ids ending in <eos>."""
        ids = self.vocab.encode(transcript) if isinstance(transcript, str) else list(transcript)
        if not ids or ids[-1] != self.vocab.eos:
            raise ValueError("target sequence must end with <eos>")
        feats = np.asarray(features.data if isinstance(features, Tensor) else features)[None]
        out = self.token_log_probs(feats, [feats.shape[1]], np.asarray([ids]), [len(ids)])
        return float(out.data[0])

