import json

import pytest

from deeplas.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "train.spec").write_text("n_utts=24\nseed=0\nprefix=tr\n")
    (d / "dev.spec").write_text("n_utts=6\nseed=1\nprefix=dv\n")
    assert main(["synth", "--spec", str(d / "train.spec"), "--out", str(d / "train.fbk")]) == 0
    assert main(["synth", "--spec", str(d / "dev.spec"), "--out", str(d / "dev.fbk")]) == 0
    (d / "run.cfg").write_text(
        f"arch=L + P/2 + L\nhidden=8\ndec_hidden=8\nbatch_size=4\neval_every=5\nmax_steps=10\n"
        f"max_decode_len=20\ntrain_data={d / 'train.fbk'}\ndev_data={d / 'dev.fbk'}\n")
    return d


def test_synth_reports_dims(workdir, capsys):
    assert main(["synth", "--spec", str(workdir / "dev.spec"), "--out", str(workdir / "x.fbk")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["utterances"] == 6 and out["dims"] == 24


def test_train_eval_decode(workdir, capsys):
    capsys.readouterr()
    assert main(["train", "--config", str(workdir / "run.cfg"), "--out", str(workdir / "run")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["final"]["step"] == 10
    csv_text = (workdir / "run" / "metrics.csv").read_text()
    assert csv_text.startswith("step,train_loss,dev_cer,dev_wer,lr\n")

    ckpt = str(workdir / "run" / "best.ckpt")
    runs = []
    for _ in range(2):
        assert main(["eval", "--ckpt", ckpt, "--data", str(workdir / "dev.fbk")]) == 0
        runs.append(json.loads(capsys.readouterr().out))
    assert runs[0] == runs[1]
    assert 0 <= runs[0]["cer"]

    assert main(["eval", "--ckpt", ckpt, "--data", str(workdir / "dev.fbk"), "--beam", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["beam"] == 3

    assert main(["decode", "--ckpt", ckpt, "--features", str(workdir / "dev.fbk")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(line.startswith("dv0000") and "\t" in line for line in lines)


def test_same_config_and_seed_give_identical_csv(workdir):
    cfg = str(workdir / "run.cfg")
    for name in ("a", "b"):
        assert main(["train", "--config", cfg, "--seed", "5", "--out", str(workdir / name)]) == 0
    assert (workdir / "a" / "metrics.csv").read_bytes() == (workdir / "b" / "metrics.csv").read_bytes()


def test_arch_elaborate_prints_23_layers(capsys):
    assert main(["arch", "elaborate", "(C(3x3)/2) x 2 + ResCNN x 8 + NiN"]) == 0
    assert "layers=23" in capsys.readouterr().out


def test_arch_parse_canonicalises(capsys):
    assert main(["arch", "parse", "(L+P/2+B+R)x2+L"]) == 0
    assert capsys.readouterr().out.strip() == "(L + P/2 + B + R) x 2 + L"


def test_gradcheck_single_module(capsys):
    assert main(["gradcheck", "--module", "lstm_step"]) == 0
    name, err, verdict = capsys.readouterr().out.split()
    assert name == "lstm_step" and float(err) < 1e-4 and verdict == "PASS"


def test_errors_exit_2_with_message(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("arch=L\nlearning_rate=3\n")
    assert main(["train", "--config", str(bad)]) == 2
    assert "unknown config key: learning_rate" in capsys.readouterr().err
    assert main(["train", "--config", str(tmp_path / "absent.cfg")]) == 2
    assert "absent.cfg" in capsys.readouterr().err
    assert main(["eval", "--ckpt", str(tmp_path / "none.ckpt"), "--data", str(workdir / "dev.fbk")]) == 2
    assert "none.ckpt" in capsys.readouterr().err
    assert main(["arch", "parse", "L +"]) == 2
    assert "error:" in capsys.readouterr().err
    (tmp_path / "s.spec").write_text("colour=red\n")
    assert main(["synth", "--spec", str(tmp_path / "s.spec"), "--out", str(tmp_path / "o.fbk")]) == 2
    assert "colour" in capsys.readouterr().err
