import json
import time

import numpy as np
import pytest

from neuralbp.cli import main, parse_snr_range
from neuralbp.codes import bch, code_from_spec
from neuralbp.params import load_params
from neuralbp.training import TrainConfig, _streams, initial_params


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def data_lines(path):
    return [ln for ln in open(path).read().splitlines() if not ln.startswith("#")]


def test_code_info(capsys):
    rc, out, _ = run(capsys, "code-info", "--bch", 63, 36, "--kv")
    assert rc == 0
    kv = dict(line.split("=", 1) for line in out.splitlines())
    code = bch(63, 36)
    assert kv["n"] == "63" and kv["k"] == "36"
    assert kv["E"] == str(int(code.h.sum()))
    degrees = dict(p.split(":") for p in kv["cn_degrees"].split(","))
    assert sum(int(d) * int(c) for d, c in degrees.items()) == int(kv["E"])
    assert kv["noms_params_T5"] == str(5 * int(code.h.sum()))


def test_code_info_text(capsys):
    rc, out, _ = run(capsys, "code-info", "--code", "hamming74")
    assert rc == 0
    assert any(line.split()[:2] == ["E", "12"] for line in out.splitlines())


def test_code_info_alist(tmp_path, capsys):
    from neuralbp.codes import write_alist

    path = tmp_path / "h.alist"
    write_alist(bch(63, 45), path)
    rc, out, _ = run(capsys, "code-info", "--alist", path, "--kv")
    assert rc == 0 and "k=45" in out.splitlines()


def test_evaluate_smoke(tmp_path, capsys):
    out = tmp_path / "r.csv"
    t0 = time.perf_counter()
    rc, stdout, _ = run(capsys, "evaluate", "--code", "spc:3", "--snr", "3", "--min-frames", 10, "--min-frame-errors", 0, "--chunk-frames", 100, "--out", out)
    assert time.perf_counter() - t0 < 1.0
    assert rc == 0 and "3.00 dB" in stdout
    rows = data_lines(out)
    assert len(rows) == 2 and rows[1].endswith(",0")
    manifest = json.load(open(f"{out}.manifest.json"))
    assert manifest["command"] == "evaluate"
    assert manifest["code"]["h_checksum"] == code_from_spec("spc:3").checksum
    assert open(out).readline().strip() == "# manifest: r.csv.manifest.json"


def test_result_regenerates_from_manifest(tmp_path, capsys):
    out = tmp_path / "r.csv"
    argv = ["evaluate", "--bch", "63", "45", "--variant", "oms", "--beta", "0.6", "--snr", "3:4:0.5", "--min-frames", "500", "--min-frame-errors", "20", "--seed", "9", "--out", str(out)]
    assert run(capsys, *argv)[0] == 0
    first = data_lines(out)
    manifest = json.load(open(f"{out}.manifest.json"))
    assert manifest["argv"][1:] == argv
    assert run(capsys, *manifest["argv"][1:])[0] == 0
    assert data_lines(out) == first


def test_train_zero_minibatches_is_init(tmp_path, capsys):
    ck = tmp_path / "c.npz"
    rc, _, _ = run(capsys, "train", "--code", "hamming74", "--minibatches", 0, "--seed", 3, "--out", ck)
    assert rc == 0
    params, extra = load_params(ck)
    cfg = TrainConfig(minibatches=0, seed=3)
    want = initial_params(code_from_spec("hamming74"), "noms", cfg, _streams(3)[0])
    assert np.array_equal(params.values, want.values)
    assert str(extra["code_spec"]) == "hamming74"
    assert str(extra["manifest"]) == "c.npz.manifest.json"


def test_train_then_evaluate_and_histogram(tmp_path, capsys):
    ck = tmp_path / "c.npz"
    rc, out, _ = run(capsys, "train", "--code", "hamming74", "--minibatches", 30, "--eval-every", 10, "--snr-set", "2,4", "--out", ck)
    assert rc == 0 and "held-out loss" in out
    assert len(data_lines(tmp_path / "c.log.csv")) == 31
    # the code is recovered from the checkpoint
    rc, _, _ = run(capsys, "evaluate", "--params", ck, "--snr", "4", "--min-frames", 200, "--min-frame-errors", 5, "--out", tmp_path / "n.csv")
    assert rc == 0
    rc, _, _ = run(capsys, "histogram", "--params", ck, "--bins", 5, "--stage", 30, "--out", tmp_path / "h")
    assert rc == 0
    assert sorted(p.name for p in (tmp_path / "h").iterdir()) == [
        "histograms.manifest.json", *[f"iteration_{t}_30.csv" for t in range(1, 6)]
    ]


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"code": "spc:4", "minibatches": 5, "lr": 0.05, "snr-set": "1:2:1", "batch_size": 12, "seed": 7}))
    ck = tmp_path / "c.npz"
    rc, _, _ = run(capsys, "train", "--config", cfg, "--minibatches", 3, "--out", ck)
    assert rc == 0
    conf = json.load(open(f"{ck}.manifest.json"))["config"]
    assert conf["minibatches"] == 3  # flag wins
    assert conf["learning_rate"] == 0.05 and conf["seed"] == 7
    assert conf["snr_set_db"] == [1.0, 2.0] and conf["batch_size"] == 12


def test_compare(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["--bch", 63, 45, "--snr", "5:6:1", "--min-frames", 2000, "--min-frame-errors", 20]
    run(capsys, "evaluate", *base, "--out", a)
    run(capsys, "evaluate", *base, "--variant", "ms", "--out", b)
    rc, out, _ = run(capsys, "compare", a, b, "--targets", 1e-3, "--out", tmp_path / "gap.csv")
    assert rc == 0
    assert out.startswith("reference: spa")
    lines = data_lines(tmp_path / "gap.csv")
    assert lines[0] == "kind,label,ebn0_db,ber,ratio,target,gap_db"
    assert sum(ln.startswith("ratio,") for ln in lines) == 4


@pytest.mark.parametrize(
    "argv,message",
    [
        (["evaluate", "--code", "missing.alist", "--out", "x.csv"], "not found"),
        (["evaluate", "--code", "spc:3", "--bch", "63", "36", "--out", "x.csv"], "only one"),
        (["train", "--code", "spc:3", "--out", "/nonexistent/dir/c.npz"], "does not exist"),
        (["train", "--code", "spc:3", "--batch-size", "100", "--snr-set", "1,2,3", "--out", "c.npz"], "divisible"),
        (["train", "--code", "spc:3", "--config", "nope.json", "--out", "c.npz"], "not found"),
        (["histogram", "--params", "nope.npz", "--out", "h"], "not found"),
        (["compare", "only_one.csv"], "not found"),
    ],
)
def test_usage_errors(argv, message, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    rc, _, err = run(capsys, *argv)
    assert rc == 2
    assert message in err


def test_unknown_flag(capsys):
    rc, _, err = run(capsys, "evaluate", "--frobnicate", "--out", "x.csv")
    assert rc == 2 and "unrecognized arguments" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"learning_rate_typo": 1}')
    rc, _, err = run(capsys, "train", "--config", cfg, "--code", "spc:3", "--out", tmp_path / "c.npz")
    assert rc == 2 and "learning_rate_typo" in err


def test_snr_range_parsing():
    assert parse_snr_range("1:8:1") == tuple(float(i) for i in range(1, 9))
    assert parse_snr_range("4,6") == (4.0, 6.0)
    assert parse_snr_range("0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)
