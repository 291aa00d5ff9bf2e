import json
import subprocess
import sys

import pytest

from fewjumps.cli import main

BIV = {"family": "bivariate-gauss-power", "rho": 0.5, "q": 3}
TWO = {"family": "two-jump", "epsilon": 0.1}
QUICK = {"random_restarts": 8}


def run(tmp_path, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return main(["--config", str(path), "--out", str(tmp_path / "out"), *extra])


def test_rate_eval_axis_value(tmp_path, capsys):
    cfg = {"version": 1, "command": "rate-eval", "model": BIV, "targets": [[1.0, 1e-6]]}
    assert run(tmp_path, cfg, "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["status"] == 0
    assert doc["results"][0]["value"] == pytest.approx(0.5, abs=1e-3)
    assert (tmp_path / "out" / "rate_eval.csv").exists()


def test_decompose_two_jump(tmp_path, capsys):
    cfg = {"version": 1, "command": "decompose", "model": TWO, "targets": [[1.0, 1.0]]}
    assert run(tmp_path, cfg, "--json") == 0
    res = json.loads(capsys.readouterr().out)["results"][0]
    assert res["value"] <= 2 + 1e-6
    assert len(res["parts"]) == 2


def test_dimension_mismatch_exits_2_without_artifacts(tmp_path, capsys):
    cfg = {"version": 1, "command": "rate-eval", "model": TWO, "targets": [[1.0, 1.0, 1.0]]}
    assert run(tmp_path, cfg) == 2
    assert "k=2" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("cfg", [
    {"version": 2, "command": "rate-eval", "model": TWO, "targets": [[1.0, 1.0]]},
    {"version": 1, "command": "rate-eval", "model": TWO},
    {"version": 1, "command": "nope"},
    {"version": 1, "command": "rate-eval", "model": {"family": "cauchy"}, "targets": [[1.0]]},
    {"version": 1, "command": "stiefel-check", "m": 3, "N": 2, "samples": 2, "q": 3},
])
def test_invalid_configs(tmp_path, cfg):
    assert run(tmp_path, cfg) == 2


def test_unreadable_config(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["--config", str(tmp_path / "bad.json")]) == 2
    assert main(["--config", str(tmp_path / "missing.json")]) == 2


def test_csv_byte_identical_on_rerun(tmp_path):
    cfg = {"version": 1, "command": "decompose", "model": TWO, "tolerances": QUICK,
           "targets": [[1.0, 1.0], [0.5, 2.0]], "seed": 5}
    assert run(tmp_path, cfg) == 0
    first = (tmp_path / "out" / "decomposition.csv").read_bytes()
    assert run(tmp_path, cfg) == 0
    assert (tmp_path / "out" / "decomposition.csv").read_bytes() == first
    assert b"\r\n" in first


def test_oracle_check_pass_and_fail(tmp_path):
    cfg = {"version": 1, "command": "oracle-check", "model": BIV, "grid_n": 60,
           "targets": [[1.0, 0.5]], "tolerances": QUICK}
    assert run(tmp_path, cfg) == 0
    # a coarse grid with zero tolerance cannot match the continuous optimum
    cfg["model"] = TWO
    cfg["grid_n"] = 3
    cfg["targets"] = [[2.0, 1.0]]
    cfg["tolerances"] = {"oracle_abs": 0.0, "oracle_rel": 0.0, "random_restarts": 8}
    assert run(tmp_path, cfg) == 4


def test_stiefel_check_pass_and_fail(tmp_path, capsys):
    cfg = {"version": 1, "command": "stiefel-check", "m": 3, "N": 50, "samples": 50, "q": 3}
    assert run(tmp_path, cfg) == 0
    cfg["tolerances"] = {"stiefel_frobenius": 1e-30}
    assert run(tmp_path, cfg) == 4
    assert "CHECK FAILED" in capsys.readouterr().out
    assert (tmp_path / "out" / "stiefel.csv").exists()


def test_convexity_probe(tmp_path, capsys):
    cfg = {"version": 1, "command": "convexity-probe", "model": BIV, "tolerances": QUICK,
           "t_a": [1.0, 1e-6], "t_b": [1e-6, 1e-6], "lambdas": [0.5]}
    assert run(tmp_path, cfg, "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["mixed"][0] == pytest.approx(2 ** (-(1 + 2 / 3)), abs=1e-4)
    assert len(doc["convexity_violations"]) == 1


def test_mdp_rate(tmp_path, capsys):
    cfg = {"version": 1, "command": "mdp-rate",
           "model": {"family": "mdp-gauss", "Sigma": [[1.0, 0.0], [0.0, 1.0]]},
           "targets": [[1.0, 1.0]]}
    assert run(tmp_path, cfg, "--json") == 0
    assert json.loads(capsys.readouterr().out)["results"][0]["value"] == pytest.approx(1.0)
    cfg["model"] = TWO
    assert run(tmp_path, cfg) == 2


def test_lpball_rate(tmp_path, capsys):
    cfg = {"version": 1, "command": "lpball-rate", "q": 3, "m": 2,
           "directions": [[1.0, 0.0], [0.0, 1.0]], "f": 1.5, "k_max": 2, "tolerances": QUICK}
    assert run(tmp_path, cfg, "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["J_seq"][1] == pytest.approx(2 * doc["J_seq"][0], rel=1e-6)
    cfg["directions"] = {"spiral": 4}
    cfg["f"] = [1.5, 1.5]
    assert run(tmp_path, cfg) == 2


def test_mc_verify_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = {"version": 1, "command": "mc-verify",
           "model": {"family": "weibull", "alpha": 0.5, "lambda0": 1.0, "lambdas": [1.0, 1.0]},
           "targets": [[0.25, 0.25]], "scales": [1.0, 4.0], "n": 20000, "seed": 3}
    assert run(tmp_path, cfg) == 0
    one = (tmp_path / "out" / "rate_curve.csv").read_bytes()
    monkeypatch.setenv("FEWJUMPS_THREADS", "3")
    assert run(tmp_path, cfg) == 0
    assert (tmp_path / "out" / "rate_curve.csv").read_bytes() == one
    assert run(tmp_path, cfg, "--seed", "4") == 0
    assert (tmp_path / "out" / "rate_curve.csv").read_bytes() != one


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "command": "rate-eval", "model": TWO,
                               "targets": [[1.0, 0.5]], "tolerances": QUICK}))
    out = subprocess.run([sys.executable, "-m", "fewjumps.cli", "--config", str(cfg),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0
    assert "I(1, 0.5)" in out.stdout
