"""Command-line entry point: ``deeplas <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .arch import ElabConfig, InputSpec, elaborate, parse, render
from .data import SynthSpec, prepare, read_features, synthesize, write_features
from .train.config import ConfigError, load_config, parse_kv


def _cmd_train(args) -> int:
    from .train import train

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    for key in ("train_data", "dev_data"):
        if not getattr(cfg, key):
            raise ConfigError(f"config is missing {key}")
    train_set = read_features(cfg.train_data)
    dev_set = read_features(cfg.dev_data)
    out = Path(args.out or Path(args.config).with_suffix("").name + "_run")
    _, hist = train(cfg, train_set, dev_set, out_dir=out)
    summary = {"best_dev_cer": hist.best_cer, "best_step": hist.best_step,
               "final": hist.final, "decay_steps": hist.decay_steps, "out": str(out)}
    print(json.dumps(summary, sort_keys=True))
    return 0


def _load(args):
    from .checkpoint import load_checkpoint

    model, cfg, _ = load_checkpoint(args.ckpt)
    return model, cfg


def _decode_all(model, cfg, data, beam, max_len):
    from .decode import beam_decode
    from .train import evaluate

    if beam and beam > 1:
        hyps = []
        for u in data:
            best = beam_decode(model, u.features, beam, max_len)
            hyps.append(model.vocab.decode(best.text_ids(model.vocab.eos)))
        return hyps
    return evaluate(model, data, max_len, cfg.eval_batch_size)[2]


def _cmd_eval(args) -> int:
    from .metrics import corpus_rates

    model, cfg = _load(args)
    data = read_features(args.data)
    max_len = args.max_len or cfg.max_decode_len
    hyps = _decode_all(model, cfg, data, args.beam, max_len)
    cer, wer = corpus_rates([u.transcript for u in data], hyps)
    print(json.dumps({"utterances": len(data), "cer": cer, "wer": wer, "beam": args.beam or 1}, sort_keys=True))
    return 0


def _cmd_decode(args) -> int:
    model, cfg = _load(args)
    data = read_features(args.features)
    hyps = _decode_all(model, cfg, data, args.beam, args.max_len or cfg.max_decode_len)
    for u, h in zip(data, hyps):
        print(f"{u.id}\t{h}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradsuite import CASES, TOLERANCE, run_case

    names = [args.module] if args.module else list(CASES)
    ok = True
    for name in names:
        r = run_case(name)
        passed = r["max_rel_err"] < TOLERANCE
        ok &= passed
        print(f"{name}\t{r['max_rel_err']:.3e}\t{'PASS' if passed else 'FAIL'}")
    return 0 if ok else 1


def _cmd_arch(args) -> int:
    if args.action == "parse":
        print(render(parse(args.text)))
        return 0
    spec = InputSpec(args.dims, args.input_channels)
    cfg = ElabConfig(hidden=args.hidden, channels=args.channels, baseline_subsample=args.baseline_subsample,
                     stride_front_convs=args.stride_front_convs)
    print(elaborate(args.text, spec, cfg).table())
    return 0


def _cmd_synth(args) -> int:
    path = Path(args.spec)
    if not path.exists():
        raise FileNotFoundError(f"synth spec not found: {path}")
    kv = parse_kv(path.read_text(encoding="utf-8"), str(path))
    n = int(kv.pop("n_utts", "100"))
    seed = int(kv.pop("seed", "0"))
    prefix = kv.pop("prefix", "utt")
    raw = kv.pop("raw", "false").lower() in ("1", "true", "yes")
    spec = SynthSpec.from_dict(kv)
    data = synthesize(spec, n, seed, prefix=prefix)
    if not raw:
        data = prepare(data)
    write_features(args.out, data)
    print(json.dumps({"utterances": len(data), "dims": int(data[0].features.shape[1]),
                      "frames": int(np.sum([u.num_frames for u in data])), "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deeplas", description="Deep convolutional/recurrent LAS speech recognizer")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a key=value config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (default: <config name>_run)")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="CER/WER of a checkpoint on an FBK1 file")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--beam", type=int, default=1)
    e.add_argument("--max-len", type=int)
    e.set_defaults(func=_cmd_eval)

    d = sub.add_parser("decode", help="print id<TAB>hypothesis for each utterance")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--features", required=True)
    d.add_argument("--beam", type=int, default=1)
    d.add_argument("--max-len", type=int)
    d.set_defaults(func=_cmd_decode)

    g = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    g.add_argument("--module")
    g.set_defaults(func=_cmd_gradcheck)

    a = sub.add_parser("arch", help="parse or elaborate an architecture string")
    a.add_argument("action", choices=["parse", "elaborate"])
    a.add_argument("text")
    a.add_argument("--hidden", type=int, default=256)
    a.add_argument("--channels", type=int, default=32)
    a.add_argument("--dims", type=int, default=24)
    a.add_argument("--input-channels", type=int, default=3)
    a.add_argument("--baseline-subsample", action="store_true")
    a.add_argument("--stride-front-convs", action="store_true",
                   help="give leading unstrided convs a time stride of 2")
    a.set_defaults(func=_cmd_arch)

    s = sub.add_parser("synth", help="write a synthetic FBK1 dataset")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, RuntimeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
