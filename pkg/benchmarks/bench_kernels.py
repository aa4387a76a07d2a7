"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs through both backends; the table lists
the median wall time per call and the speedup of the compiled build.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from deeplas._kernels import _fallback

try:
    from deeplas._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, repeat):
    fn()  # warm-up
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def _cases(rng):
    T, B, H = 40, 8, 64
    xg = rng.normal(size=(T, B, 4 * H)).astype(np.float32)
    w_h = rng.uniform(-0.1, 0.1, size=(H, 4 * H)).astype(np.float32)
    h0 = np.zeros((B, H), np.float32)
    c0 = np.zeros((B, H), np.float32)
    fwd = _fallback.lstm_forward(xg, w_h, h0, c0)
    dh = rng.normal(size=(T, B, H)).astype(np.float32)
    dc = np.zeros((B, H), np.float32)
    dcols = rng.normal(size=(8, 8, 20, 16, 3, 3)).astype(np.float32)
    ref = rng.integers(0, 11, size=60)
    hyp = rng.integers(0, 11, size=55)
    return {
        f"lstm_forward T={T} B={B} H={H}": lambda k: k.lstm_forward(xg, w_h, h0, c0),
        f"lstm_backward T={T} B={B} H={H}": lambda k: k.lstm_backward(dh, dc, w_h, *fwd),
        "col2im B8 C16 10x41 k3x3 s(1,2)": lambda k: k.col2im(dcols, (8, 16, 10, 41), 3, 3, 1, 2),
        "edit_ops 60x55": lambda k: k.edit_ops(ref, hyp),
    }


def _train_step_time(repeat):
    """Full training step of the toy model under whichever backend is active."""
    from deeplas.data import SynthSpec, make_splits
    from deeplas.train import Adam, Batcher, TrainConfig, build_model, train_step

    train_set, _ = make_splits(SynthSpec(), 64, 8, 0)
    cfg = TrainConfig(hidden=64, dec_hidden=64)
    model = build_model(cfg, 24)
    opt = Adam(model.parameters())
    batcher = Batcher(train_set, 8, 0)
    step = iter(range(1, 10**6))
    return _time(lambda: train_step(model, opt, cfg, batcher.batch(next(step), model.vocab), 1), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, fn in _cases(rng).items():
        tp = _time(lambda: fn(_fallback), args.repeat)
        tc = _time(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<34} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>7.1f}x")

    import deeplas._kernels as K

    saved = {n: getattr(K, n) for n in ("lstm_forward", "lstm_backward", "col2im", "edit_ops")}
    tc = _train_step_time(max(3, args.repeat // 4))
    try:
        for n in saved:
            setattr(K, n, getattr(_fallback, n))
        tp = _train_step_time(max(3, args.repeat // 4))
    finally:
        for n, f in saved.items():
            setattr(K, n, f)
    print(f"{'train step (toy model, batch 8)':<34} {tp * 1e3:>10.3f} {tc * 1e3:>10.3f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
