import csv
import json
import struct

import numpy as np
import pytest

from ranksieve.cli import main, read_matrix, write_matrix
from ranksieve.tuning import LambdaSpec, rank_lambda, sqrt_lasso_lambda


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def instance(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "-e", "E1", "--n", 40, "--p", 80, "--seed", 3, "--out-dir", tmp_path)
    assert code == 0
    return tmp_path


def test_rsmx_layout(tmp_path):
    M = np.arange(6.0).reshape(2, 3)
    path = tmp_path / "m.rsmx"
    write_matrix(path, M)
    raw = path.read_bytes()
    assert raw[:4] == b"RSMX"
    assert struct.unpack("<III", raw[4:16]) == (2, 3, 0)
    assert len(raw) == 16 + 6 * 8
    assert np.frombuffer(raw[16:], "<f8").tolist() == M.ravel().tolist()
    np.testing.assert_array_equal(read_matrix(path), M)


def test_csv_round_trip_exact(tmp_path, rng):
    M = rng.standard_normal((4, 3))
    write_matrix(tmp_path / "m.csv", M)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.csv"), M)


def test_truncated_rsmx_is_usage_error(tmp_path, capsys):
    (tmp_path / "bad.rsmx").write_bytes(b"RSMX" + struct.pack("<III", 3, 3, 0) + b"\0" * 8)
    code, _, err = run(capsys, "solve", tmp_path / "bad.rsmx", tmp_path / "bad.rsmx")
    assert code == 2 and "expected" in err


def test_synth_deterministic_bytes(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "synth", "-e", "E1", "--n", 100, "--p", 400, "--seed", 1, "--out-dir", tmp_path / d)[0] == 0
    for name in ("X.csv", "b.csv", "x_true.csv", "spec.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_e2_and_e5(tmp_path, capsys):
    run(capsys, "synth", "-e", "E2", "--n", 20, "--p", 40, "--out-dir", tmp_path / "e2")
    assert np.count_nonzero(read_matrix(tmp_path / "e2" / "x_true.csv")) == 25
    run(capsys, "synth", "-e", "E5", "--n", 20, "--p", 40, "--out-dir", tmp_path / "e5", "--format", "rsmx")
    spec = json.loads((tmp_path / "e5" / "spec.json").read_text())
    assert spec["covariance"]["kind"] == "toeplitz"
    assert read_matrix(tmp_path / "e5" / "X.rsmx").shape == (20, 40)


def test_synth_invalid_spec(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "-e", "E9", "--n", 20, "--p", 40, "--out-dir", tmp_path)
    assert code == 2 and "E9" in err


def test_solve_sieve_vs_full(instance, capsys):
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv")
    assert code == 0
    a = json.loads(out)
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--no-sieve")
    b = json.loads(out)
    assert a["val"] == pytest.approx(b["val"], rel=1e-5)
    assert a["eta_kkt"] <= 1e-6


def test_solve_auto_lambda_uses_seed(instance, capsys):
    X = read_matrix(instance / "X.csv")
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--seed", 7)
    rep = json.loads(out)
    assert rep["lambda"] == rank_lambda(X, LambdaSpec(seed=7))
    assert rep["seed"] == 7 and rep["lambda_source"] == "auto"


def test_solve_reference_and_trace(instance, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    out_path = tmp_path / "rep.json"
    code, _, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--trace", trace, "--out", out_path)
    assert code == 0
    rows = list(csv.DictReader(trace.open()))
    assert list(rows[0]) == ["round", "support", "res", "eta_kkt", "val", "ssn_time", "added"]
    sieve_val = json.loads(out_path.read_text())["val"]
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--reference")
    ref = json.loads(out)
    assert code == 0 and ref["solver"] == "splitting"
    assert ref["val"] == pytest.approx(sieve_val, rel=1e-6)


def test_config_file_and_override(instance, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"loss": "sqrt", "lambda": 2.0}))
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--config", cfg)
    rep = json.loads(out)
    assert (rep["loss"], rep["lambda"]) == ("sqrt", 2.0)
    code, out, _ = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--config", cfg, "--lambda", "1.5")
    assert json.loads(out)["lambda"] == 1.5


@pytest.mark.parametrize("argv", [
    ["solve", "missing.csv", "missing.csv"],
    ["solve", "{X}", "{b}", "--lambda", "-1"],
    ["solve", "{X}", "{b}", "--loss", "huber"],
    ["solve", "{X}", "{X}"],
    ["solve", "{X}", "{b}", "--config", "missing.json"],
    ["solve", "{X}", "{b}", "--config", "{bad}"],
    ["frobnicate"],
    ["bench", "-e", "E1", "--n", "20"],
])
def test_usage_errors_exit_2(instance, capsys, argv):
    bad = instance / "bad.json"
    bad.write_text(json.dumps({"solver": {"warp": 9}}))
    argv = [a.format(X=instance / "X.csv", b=instance / "b.csv", bad=bad) for a in argv]
    assert run(capsys, *argv)[0] == 2


def test_nonconvergence_exit_3(instance, capsys):
    cfg = instance / "tight.json"
    cfg.write_text(json.dumps({"solver": {"max_ppa_iter": 1, "max_alm_iter": 2}}))
    code, out, err = run(capsys, "solve", instance / "X.csv", instance / "b.csv", "--config", cfg, "--no-sieve")
    assert code == 3
    assert json.loads(out)["converged"] is False


def test_tune(instance, capsys):
    code, out, _ = run(capsys, "tune", instance / "X.csv", "--seed", 2)
    assert json.loads(out)["lambda"] == rank_lambda(read_matrix(instance / "X.csv"), LambdaSpec(seed=2))
    code, out, _ = run(capsys, "tune", instance / "X.csv", "--loss", "sqrt")
    assert json.loads(out)["lambda"] == sqrt_lasso_lambda(40)


def test_bench_rows_and_reproducibility(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RANKSIEVE_THREADS", "1")
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (out1, out2):
        code, _, _ = run(capsys, "bench", "-e", "E1", "--n", 30, "--p", 60, "--reps", 2, "--seed", 5,
                         "--with-cr", "--out", out)
        assert code == 0
    rows = list(csv.DictReader(out1.open()))
    assert [r["rep"] for r in rows] == ["0", "1", "mean"]
    for col in ("eta_kkt", "val", "L1", "L2", "ME", "FP", "FN", "t", "It-AS", "It-PPA",
                "It-ALM", "It-SSN", "t_ssn", "CR"):
        assert col in rows[0]
        for r in rows:
            assert r[col] == "NA" or np.isfinite(float(r[col]))
    drop = ("t", "t_ssn")
    strip = lambda rs: [{k: v for k, v in r.items() if k not in drop} for r in rs]
    assert strip(rows) == strip(list(csv.DictReader(out2.open())))


def test_bench_failed_reps_exit_3(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RANKSIEVE_THREADS", "1")
    cfg = tmp_path / "caps.json"
    cfg.write_text(json.dumps({"solver": {"max_ppa_iter": 1, "max_alm_iter": 2}}))
    code, out, err = run(capsys, "bench", "-e", "E1", "--n", 20, "--p", 30, "--reps", 2,
                         "--config", cfg, "--no-sieve")
    assert code == 3
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[0]["status"] == "nonconverged" and rows[-1]["status"] == "0/2"


def test_bad_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("RANKSIEVE_THREADS", "zero")
    assert run(capsys, "bench", "-e", "E1", "--n", 20, "--p", 30, "--reps", 1)[0] == 2


def test_worker_pool_keeps_order(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RANKSIEVE_THREADS", "2")
    code, out, _ = run(capsys, "bench", "-e", "E5", "--n", 20, "--p", 30, "--reps", 3)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["seed"] for r in rows[:3]] == ["0", "1", "2"]
