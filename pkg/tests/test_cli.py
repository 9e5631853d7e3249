import subprocess
import sys

import pytest

from lsrnet.cli import main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("synth", "--classes", 3, "--per-class", 10, "--length", 512, "--fs", 64000, "--seed", 1,
               "--out", d / "raw.lsrd") == 0
    assert run("prepare", "--in", d / "raw.lsrd", "--noise", "gaussian", "--snr-db", -4, "--seed", 2,
               "--out", d / "noisy.lsrd") == 0
    assert run("split", "--in", d / "noisy.lsrd", "--seed", 0, "--out-train", d / "t.lsrd",
               "--out-val", d / "v.lsrd", "--out-test", d / "x.lsrd") == 0
    return d


def test_train_eval_analyze(workdir, capsys):
    d = workdir
    assert run("train", "--train", d / "t.lsrd", "--val", d / "v.lsrd", "--snr-db", -4, "--prune-fraction", 0.1,
               "--epochs", 2, "--batch", 8, "--lr", 1e-3, "--weight-decay", 1e-5, "--seed", 0,
               "--out", d / "m.lsrw") == 0
    out = capsys.readouterr().out
    assert "adaptive pruning: armed" in out and out.count("epoch ") >= 2
    assert run("eval", "--model", d / "m.lsrw", "--data", d / "x.lsrd") == 0
    assert "confusion" in capsys.readouterr().out
    assert run("analyze", "--model", d / "m.lsrw", "--tsv") == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("total\t")


def test_bench_emits_raw_samples(capsys):
    assert run("bench", "--default-config", "--repeats", 5, "--warmup", 1) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("run ") for line in lines) == 5
    assert lines[-1].startswith("mean ") and "±" in lines[-1]


def test_exit_codes(workdir, tmp_path, capsys):
    bad = tmp_path / "bad.lsrd"
    bad.write_bytes(b"not a container at all")
    assert run("eval", "--model", bad, "--data", workdir / "x.lsrd") == 3
    assert run("prepare", "--in", bad, "--noise", "none", "--out", tmp_path / "o") == 3
    assert run("synth", "--length", 1000, "--per-class", 2, "--out", tmp_path / "o") == 4
    assert run("eval", "--model", tmp_path / "missing.lsrw", "--data", workdir / "x.lsrd") == 2
    with pytest.raises(SystemExit) as exc:
        run("train")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("analyze", "--model", "a", "--default-config")
    assert exc.value.code == 2


def test_contract_violation_on_mismatched_model(workdir, tmp_path):
    other = tmp_path / "long.lsrd"
    assert run("synth", "--per-class", 1, "--length", 1024, "--out", other) == 0
    assert run("train", "--train", workdir / "t.lsrd", "--val", other, "--epochs", 1, "--out", tmp_path / "m") == 4


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lsrnet", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "bench" in proc.stdout
