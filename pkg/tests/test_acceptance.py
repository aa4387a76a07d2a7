"""End-to-end acceptance checks, one test group per criterion.

The training criteria (7 to 10) share a cache of full toy-task runs, so the
module takes a while: expect roughly a quarter of an hour on one CPU core.
"""
import csv
import itertools
import time
from functools import lru_cache

import numpy as np
import pytest

from deeplas import nn
from deeplas.arch import ElabConfig, InputSpec, build_encoder, elaborate, parse, render
from deeplas.data import SynthSpec, make_splits
from deeplas.decode import beam_decode, brute_force_decode, greedy_decode
from deeplas.gradsuite import CASES, TOLERANCE, run_all
from deeplas.metrics import edit_distance
from deeplas.nn import Seq
from deeplas.tensor import Tensor, no_grad, precision
from deeplas.train import TrainConfig, train

from conftest import make_micro

BASELINE = "(L + P/2 + B + R) x 2 + L"
DEEP = "(C(3x3)/2) x 2 + ResConvLSTM(3x1) x 2 + NiN"
CONVLSTM_ONLY = "ConvLSTM x 3"
SEEDS = (0, 1, 2)

TABLE_STRINGS = [
    "L x 3",
    "L x 8",
    "(L + P / 2 + B + R) x 2 + L",
    "(L + P / 2 + B + R + C(1x1) + BN + R) x 2 + L",
    "NiN",
    "ResLSTM x 8",
    "(C (3 x 3) / 2) x 2 + NiN",
    "(C (3 x 3) / 2) x 2 + ResCNN x 4 + NiN",
    "(C (3 x 3) / 2) x 2 + ResCNN x 8 + NiN",
    "ConvLSTM x 3",
    "(C (3x3)) x 2 + ResCNN x 4 + NiN",
    "(C (3x3)) x 2 + ResConvLSTM (3x1) x 4 + NiN",
]


def _detail(record_property, text):
    record_property("detail", text)
    print(text)


# -- 1: gradient suite ---------------------------------------------------------


@pytest.mark.criterion(1)
def test_gradient_suite(record_property):
    t0 = time.process_time()
    results = run_all()
    cpu = time.process_time() - t0
    worst = max(results, key=lambda r: r["max_rel_err"])
    _detail(record_property, f"{len(results)} cases, worst {worst['case']} {worst['max_rel_err']:.2e}, "
                             f"{cpu:.1f}s CPU")
    assert {r["case"] for r in results} == set(CASES)
    assert all(r["max_rel_err"] < TOLERANCE for r in results), [(r["case"], r["max_rel_err"]) for r in results]
    assert cpu < 120


# -- 2: batch norm ---------------------------------------------------------------


def _padded(rng, shape, lengths, layout):
    x = rng.normal(size=shape) * 4.0 + 3.0
    s = Seq(Tensor(x), np.array(lengths), layout)
    return s.zero_pad()


def _valid(seq):
    x = seq.x.data
    if seq.layout == "seq":
        return x[seq.valid()]
    return np.concatenate([x[b, :, :, :n].transpose(1, 2, 0).reshape(-1, x.shape[1])
                           for b, n in enumerate(seq.lengths)])


@pytest.mark.criterion(2)
@pytest.mark.parametrize("layout,shape", [("seq", (4, 9, 5)), ("grid", (4, 3, 6, 9))])
def test_bn_normalises_valid_frames(layout, shape, record_property):
    rng = np.random.default_rng(0)
    C = shape[-1] if layout == "seq" else shape[1]
    with precision(np.float64):
        out = nn.batchnorm_seq(_padded(rng, shape, [9, 6, 3, 2], layout), Tensor(np.ones(C)),
                               Tensor(np.zeros(C)), training=True)
    v = _valid(out)
    mean_err, var_err = np.abs(v.mean(0)).max(), np.abs(v.var(0) - 1).max()
    _detail(record_property, f"{layout}: |mean| {mean_err:.1e}, |var-1| {var_err:.1e}")
    assert mean_err < 1e-6 and var_err < 1e-5


@pytest.mark.criterion(2)
@pytest.mark.parametrize("layout,shape", [("seq", (3, 8, 4)), ("grid", (3, 2, 5, 8))])
def test_bn_padding_independence(layout, shape):
    rng = np.random.default_rng(1)
    a = _padded(rng, shape, [8, 5, 2], layout)
    x = a.x.data.copy()
    pad = np.broadcast_to(a.pad_mask(), x.shape)
    x[pad] = rng.normal(size=pad.sum()) * 1e3
    b = Seq(Tensor(x), a.lengths, layout)
    C = shape[-1] if layout == "seq" else shape[1]
    bn_a, bn_b = nn.BatchNorm(C), nn.BatchNorm(C)
    assert np.array_equal(bn_a(a).x.data, bn_b(b).x.data)
    assert np.array_equal(bn_a.running_mean, bn_b.running_mean)
    assert np.array_equal(bn_a.running_var, bn_b.running_var)


# -- 3: residual identity --------------------------------------------------------


@pytest.mark.criterion(3)
@pytest.mark.parametrize("name,make,shape,layout", [
    ("ResCNN", lambda r: nn.res_cnn(4, r), (2, 4, 6, 7), "grid"),
    ("ResConvLSTM", lambda r: nn.res_convlstm(4, r), (2, 4, 6, 7), "grid"),
    ("ResLSTM", lambda r: nn.res_lstm(6, 5, r), (2, 7, 6), "seq"),
])
def test_residual_identity(name, make, shape, layout, record_property):
    rng = np.random.default_rng(2)
    block = make(rng)
    for _, p in block.named_parameters():
        p.data = np.zeros_like(p.data)
    seq = Seq(Tensor(rng.normal(size=shape).astype(np.float32)), np.array([7, 4]), layout).zero_pad()
    for training in (True, False):
        block.train(training)
        assert np.array_equal(block(seq).x.data, seq.x.data), (name, training)
    _detail(record_property, f"{name} identity bit-exact")


# -- 4: time reduction -----------------------------------------------------------


@pytest.mark.criterion(4)
def test_baseline_reduces_100_frames_to_25(record_property):
    g = elaborate("L x 3", config=ElabConfig(hidden=8, baseline_subsample=True))
    _detail(record_property, f"baseline: T=100 -> U={g.reduced_length(100)}, factor {g.time_reduction}")
    assert g.time_reduction == 4 and g.reduced_length(100) == 25
    assert elaborate(BASELINE, config=ElabConfig(hidden=8)).reduced_length(100) == 25


@pytest.mark.criterion(4)
@pytest.mark.parametrize("text", [BASELINE, DEEP, "C(3x3)/2 + S/2 + L", "L + P/2 + L x 2 + P/2 + P/2 + L"])
def test_each_halving_floors_in_shape_propagation(text):
    g = elaborate(text, InputSpec(24, 3), ElabConfig(hidden=4, channels=2))
    halvings = sum(d.reduction == 2 for d in g.layers)
    enc = build_encoder(g, np.random.default_rng(0))
    enc.eval()
    for T in range(2 ** halvings, 41):
        want = T
        for _ in range(halvings):
            want //= 2
        assert g.reduced_length(T) == want
        x = np.random.default_rng(T).normal(size=(1, T, 24)).astype(np.float32)
        if g.input_layout == "grid":
            seq = Seq(Tensor(x.reshape(1, T, 3, 8).transpose(0, 2, 3, 1)), np.array([T]), "grid")
        else:
            seq = Seq(Tensor(x), np.array([T]))
        with no_grad():
            out = enc(seq)
        assert out.T == want and out.lengths.tolist() == [want], (text, T)


# -- 5: architecture language ----------------------------------------------------


@pytest.mark.criterion(5)
@pytest.mark.parametrize("text", TABLE_STRINGS)
def test_table_architectures(text):
    expr = parse(text)
    assert parse(render(expr)) == expr
    assert render(parse(render(expr))) == render(expr)
    g = elaborate(expr, InputSpec(24, 3), ElabConfig(hidden=8, channels=4))
    assert build_encoder(g, np.random.default_rng(0)).num_params() == g.num_params


@pytest.mark.criterion(5)
def test_deep_conv_encoder_has_23_layers(record_property):
    g = elaborate("(C(3x3)/2) x 2 + ResCNN x 8 + NiN")
    _detail(record_property, f"{len(TABLE_STRINGS)} table strings round-trip; deep conv encoder "
                             f"= {g.num_layers} layers")
    assert g.num_layers == 23


# -- 6: oracle equivalences ------------------------------------------------------


def _lev_oracle():
    @lru_cache(maxsize=None)
    def lev(a, b):
        if not a:
            return len(b)
        if not b:
            return len(a)
        return min(lev(a[1:], b) + 1, lev(a, b[1:]) + 1, lev(a[1:], b[1:]) + (a[0] != b[0]))

    return lev


@pytest.mark.criterion(6)
def test_edit_distance_exhaustive(record_property):
    strings = ["".join(t) for n in range(7) for t in itertools.product("abc", repeat=n)]
    mismatches = 0
    for a in strings:
        lev = _lev_oracle()  # fresh cache per reference keeps memory flat
        for b in strings:
            d, s, i, de = edit_distance(a, b)
            mismatches += d != lev(a, b) or d != s + i + de
    _detail(record_property, f"edit distance: {len(strings) ** 2} pairs, {mismatches} mismatches")
    assert mismatches == 0


def _diverse_micro(seed):
    m = make_micro(seed)
    m.out_b.data[m.vocab.eos] -= (seed % 4) * 0.75  # vary how early <eos> wins
    return m


@pytest.mark.criterion(6)
def test_unbounded_beam_equals_brute_force(record_property):
    mismatches, lengths = 0, set()
    for seed in range(60):
        m = _diverse_micro(seed)
        assert len(m.vocab) == 3
        f = np.random.default_rng([seed, 1]).normal(size=(6, 4))
        a = beam_decode(m, f, width=3 ** 4, max_len=4)
        b = brute_force_decode(m, f, max_len=4)
        lengths.add(len(b.tokens))
        mismatches += (a.tokens, a.finished) != (b.tokens, b.finished) or abs(a.log_prob - b.log_prob) > 1e-9
    _detail(record_property, f"beam vs brute force: 60 models, best lengths {sorted(lengths)}, "
                             f"{mismatches} mismatches")
    assert mismatches == 0
    assert len(lengths) > 1


@pytest.mark.criterion(6)
def test_beam_one_equals_greedy(record_property):
    mismatches = 0
    for seed in range(200):
        m = make_micro(seed, chars="ab")
        f = np.random.default_rng([seed, 2]).normal(size=(4 + seed % 5, 4))
        h = beam_decode(m, f, width=1, max_len=8)
        mismatches += list(h.text_ids(m.vocab.eos)) != greedy_decode(m, [f], max_len=8)[0]
    _detail(record_property, f"beam(1) vs greedy: 200 models, {mismatches} mismatches")
    assert mismatches == 0


# -- 7 to 10: training runs ------------------------------------------------------


@pytest.fixture(scope="module")
def toy():
    return make_splits(SynthSpec(), 2000, 200, seed=0)


def _config(arch, seed, **kw):
    return TrainConfig(arch=arch, hidden=64, dec_hidden=64, channels=8, batch_size=8, seed=seed, **kw)


@pytest.fixture(scope="module")
def runs(toy, tmp_path_factory):
    cache = {}

    def get(arch, seed):
        if (arch, seed) not in cache:
            out = tmp_path_factory.mktemp("run")
            t0 = time.process_time()
            _, hist = train(_config(arch, seed), *toy, out_dir=out)
            cache[arch, seed] = (hist, time.process_time() - t0, out / "metrics.csv")
        return cache[arch, seed]

    return get


@pytest.mark.criterion(7)
def test_toy_task_convergence(runs, toy, record_property):
    train_data, dev = toy
    assert len(train_data) == 2000 and len(dev) == 200
    assert train_data[0].features.shape[1] == 24 and len(SynthSpec().symbols) == 11
    hits, parts = 0, []
    for seed in SEEDS:
        hist, cpu, _ = runs(BASELINE, seed)
        ok = hist.best_cer < 0.10 and hist.best_step <= 5000 and cpu < 1800
        hits += ok
        parts.append(f"seed {seed}: CER {100 * hist.best_cer:.2f}% @ {hist.best_step}, {cpu / 60:.1f} min")
    _detail(record_property, "; ".join(parts))
    assert hits >= 2


@pytest.mark.criterion(8)
def test_depth_ordering(runs, record_property):
    base, _, _ = runs(BASELINE, 0)
    deep, _, _ = runs(DEEP, 0)
    flat, _, _ = runs(CONVLSTM_ONLY, 0)
    _detail(record_property, f"baseline {100 * base.best_cer:.2f}%, conv+ResConvLSTM {100 * deep.best_cer:.2f}%, "
                             f"ConvLSTM x 3 {100 * flat.best_cer:.2f}%")
    stable = not deep.skipped and all(np.isfinite(loss) for _, loss in deep.step_loss)
    b, d, f = base.best_cer, deep.best_cer, flat.best_cer
    failed = [name for name, ok in (("deep diverged", stable), ("deep > baseline + 1 point", d <= b + 0.01),
                                    ("ConvLSTM x 3 not worse than baseline", f > b)) if not ok]
    assert not failed, f"{failed}: baseline {b:.4f}, deep {d:.4f}, ConvLSTM x 3 {f:.4f}"


@pytest.mark.criterion(9)
def test_determinism(toy, runs, tmp_path, record_property):
    cfg = _config(BASELINE, 0, max_steps=10, eval_every=10)
    _, a = train(cfg, *toy, out_dir=tmp_path / "a")
    _, b = train(cfg, *toy, out_dir=tmp_path / "b")
    assert [loss for _, loss in a.step_loss] == [loss for _, loss in b.step_loss]
    assert len(a.step_loss) == 10
    assert a.final["dev_wer"] == b.final["dev_wer"]
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    long_run, _, _ = runs(BASELINE, 0)
    assert long_run.step_loss[:10] == a.step_loss
    _detail(record_property, f"10-step traces identical, final dev WER {a.final['dev_wer']:.4f} twice")


@pytest.mark.criterion(10)
def test_training_hygiene(runs, record_property):
    parts = []
    for seed in SEEDS:
        hist, _, path = runs(BASELINE, seed)
        worst = max(post for _, _, post in hist.grad_norm)
        assert len(hist.grad_norm) == len(hist.step_loss)
        assert worst <= 1 + 1e-6
        with open(path) as fh:
            lrs = [float(r["lr"]) for r in csv.DictReader(fh)]
        changes = [(a, b) for a, b in zip(lrs, lrs[1:]) if a != b]
        assert lrs[0] == 1e-3 and changes == [(1e-3, 1e-4)], changes
        parts.append(f"seed {seed}: max post-clip {worst:.7f}, decay at {hist.decay_steps[0]}")
    _detail(record_property, "; ".join(parts))
