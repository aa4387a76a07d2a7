"""Teacher-forced training with dev monitoring, a one-shot LR decay and CSV logging."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.features import Utterance, pad_batch
from ..decode import greedy_decode
from ..metrics import corpus_rates
from ..tensor import backward, current_tape
from .config import TrainConfig, build_model
from .optim import (
    Adam,
    NonFiniteGradient,
    add_l2_grads,
    clip_by_global_norm,
    global_norm,
    l2_penalty,
    weight_noise,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["step", "train_loss", "dev_cer", "dev_wer", "lr"]


class TrainingAborted(RuntimeError):
    pass


class Batcher:
    """Length-bucketed minibatches; the batch for a step is a pure function of (seed, step)."""

    def __init__(self, data: list[Utterance], batch_size: int, seed: int):
        self.data = data
        self.batch_size = min(batch_size, len(data))
        self.seed = seed
        self.lengths = np.array([u.num_frames for u in data])
        self.per_epoch = -(-len(data) // self.batch_size)
        self._cache: tuple[int, list] | None = None

    def _epoch(self, epoch: int) -> list[np.ndarray]:
        if self._cache and self._cache[0] == epoch:
            return self._cache[1]
        rng = np.random.default_rng([self.seed, epoch, 0xBA7C])
        order = np.lexsort((rng.random(len(self.data)), self.lengths))
        chunks = [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)]
        chunks = [chunks[i] for i in rng.permutation(len(chunks))]
        self._cache = (epoch, chunks)
        return chunks

    def indices(self, step: int) -> np.ndarray:
        return self._epoch(step // self.per_epoch)[step % self.per_epoch]

    def batch(self, step: int, vocab):
        return make_batch([self.data[i] for i in self.indices(step)], vocab)


def make_batch(utts: list[Utterance], vocab):
    """(features, lengths, targets, target_lengths); targets end in <eos> and are 0-padded."""
    x, lengths = pad_batch([u.features for u in utts])
    ys = [vocab.encode(u.transcript) for u in utts]
    tl = np.array([len(y) for y in ys])
    targets = np.zeros((len(ys), tl.max()), dtype=np.int64)
    for i, y in enumerate(ys):
        targets[i, : len(y)] = y
    return x, lengths, targets, tl


def evaluate(model, data: list[Utterance], max_len: int, batch_size: int = 50):
    """Greedy-decode ``data`` with clean parameters: (CER, WER, hypotheses)."""
    order = np.argsort([u.num_frames for u in data], kind="stable")
    out: dict[int, str] = {}
    for i in range(0, len(order), batch_size):
        idx = order[i:i + batch_size]
        ids = greedy_decode(model, [data[j].features for j in idx], max_len)
        for j, seq in zip(idx, ids):
            out[int(j)] = model.vocab.decode(seq)
    hyps = [out[i] for i in range(len(data))]
    cer, wer = corpus_rates([u.transcript for u in data], hyps)
    return cer, wer, hyps


@dataclass
class History:
    step_loss: list = field(default_factory=list)  # (step, loss incl. L2) for applied steps
    grad_norm: list = field(default_factory=list)  # (step, pre-clip norm, post-clip norm)
    evals: list = field(default_factory=list)  # dicts mirroring the CSV rows
    skipped: list = field(default_factory=list)
    decay_steps: list = field(default_factory=list)
    best_cer: float = float("inf")
    best_step: int = 0
    stopped_early: bool = False
    seconds: float = 0.0

    @property
    def final(self) -> dict:
        return self.evals[-1] if self.evals else {}


def train_step(model, opt: Adam, cfg: TrainConfig, batch, step: int):
    """One update; returns (reported loss, pre-clip norm, post-clip norm) or None when skipped."""
    params = opt.params
    x, lengths, targets, tl = batch
    with weight_noise(params, cfg.weight_noise, cfg.seed, step):
        try:
            loss = model.loss(x, lengths, targets, tl)
            ce = float(loss.data)
            if not np.isfinite(ce):
                return None
            backward(loss)
        finally:
            current_tape().clear()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.grad = None
    reported = ce + (l2_penalty(params, cfg.l2) if cfg.l2 else 0.0)
    grads = add_l2_grads(params, grads, cfg.l2)
    try:
        grads, pre = clip_by_global_norm(grads, cfg.clip_norm)
    except NonFiniteGradient:
        return None
    post = global_norm(grads)
    opt.step(grads)
    return reported, pre, post


def train(cfg: TrainConfig, train_data: list[Utterance], dev_data: list[Utterance], out_dir=None,
          model=None, on_eval=None) -> tuple[object, History]:
    """Run the full recipe; writes ``metrics.csv``, ``best.ckpt`` and ``last.ckpt`` under ``out_dir``."""
    from ..checkpoint import save_checkpoint

    if not train_data or not dev_data:
        raise ValueError("train and dev sets must be non-empty")
    model = model or build_model(cfg, train_data[0].features.shape[1])
    model.train()
    opt = Adam(model.parameters(), lr=cfg.lr)
    batcher = Batcher(train_data, cfg.batch_size, cfg.seed)
    hist = History()
    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
    t0 = time.perf_counter()
    bad, decayed, streak = 0, False, 0
    window: list[float] = []
    try:
        for step in range(1, cfg.max_steps + 1):
            res = train_step(model, opt, cfg, batcher.batch(step - 1, model.vocab), step)
            if res is None:
                streak += 1
                hist.skipped.append(step)
                log.warning("step %d: non-finite loss or gradient, update skipped", step)
                if streak >= 3:
                    raise TrainingAborted(f"three consecutive non-finite steps ending at step {step}")
                continue
            streak = 0
            loss, pre, post = res
            hist.step_loss.append((step, loss))
            hist.grad_norm.append((step, pre, post))
            window.append(loss)
            if step % cfg.eval_every and step != cfg.max_steps:
                continue
            cer, wer, _ = evaluate(model, dev_data, cfg.max_decode_len, cfg.eval_batch_size)
            model.train()
            row = {"step": step, "train_loss": float(np.mean(window)), "dev_cer": cer, "dev_wer": wer,
                   "lr": opt.lr}
            window = []
            hist.evals.append(row)
            if writer:
                writer.writerow([step, f"{row['train_loss']:.6f}", f"{cer:.6f}", f"{wer:.6f}", f"{opt.lr:g}"])
                fh.flush()
            log.info("step %d loss %.4f dev cer %.4f wer %.4f lr %g", step, row["train_loss"], cer, wer, opt.lr)
            if on_eval:
                on_eval(row)
            if cer < hist.best_cer:
                hist.best_cer, hist.best_step, bad = cer, step, 0
                if out is not None:
                    save_checkpoint(out / "best.ckpt", model, cfg, extra={"step": step, "dev_cer": cer})
            elif step >= cfg.decay_warmup:
                bad += 1
            if bad >= cfg.patience:
                if not decayed:
                    opt.lr = cfg.lr_decayed
                    decayed, bad = True, 0
                    hist.decay_steps.append(step)
                    log.info("step %d: learning rate decayed to %g", step, cfg.lr_decayed)
                elif cfg.early_stop:
                    hist.stopped_early = True
                    break
    finally:
        if fh:
            fh.close()
    hist.seconds = time.perf_counter() - t0
    if out is not None:
        save_checkpoint(out / "last.ckpt", model, cfg, optimizer=opt, extra={"step": step})
    return model, hist
