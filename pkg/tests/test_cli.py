import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from subgeo.cli import fixture_path, main
from subgeo.wpi_calculus import WpiCertificate


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def test_convert_round_trip_and_gamma_table(tmp_path, capsys):
    kstar = tmp_path / "kstar.json"
    beta = tmp_path / "beta.json"
    code, rep, _ = run(capsys, "convert", "--in", fixture_path("poly_beta.json"), "--to", "kstar", "--out", kstar)
    assert code == 0 and rep["to"] == "kstar"
    code, _, _ = run(capsys, "convert", "--in", kstar, "--to", "beta", "--out", beta)
    assert code == 0
    orig = WpiCertificate.load(fixture_path("poly_beta.json"))
    back = WpiCertificate.load(str(beta))
    s = np.asarray(orig.fn.knots(), float)
    s = s[s > 0] if s.size else np.geomspace(0.1, 100, 20)
    np.testing.assert_allclose(back.fn(s), orig.fn(s), rtol=1e-6)
    with open(tmp_path / "kstar.gamma.csv") as fh:
        rows = list(csv.DictReader(fh))
    gamma = np.array([float(r["gamma"]) for r in rows])
    assert rows[0]["n"] == "1" and np.all(np.diff(gamma) <= 0)


def test_convert_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "convert", "--in", bad, "--to", "beta", "--out", tmp_path / "o.json")
    assert code == 2 and "malformed JSON" in err
    bad.write_text(json.dumps({"param": "gamma"}))
    code, _, err = run(capsys, "convert", "--in", bad, "--to", "beta", "--out", tmp_path / "o.json")
    assert code == 2 and "invalid certificate" in err
    code, _, _ = run(capsys, "convert", "--in", bad, "--to", "delta", "--out", tmp_path / "o.json")
    assert code == 2
    code, _, err = run(capsys, "convert", "--in", tmp_path / "missing.json", "--to", "beta", "--out", tmp_path / "o.json")
    assert code == 2 and "no such file" in err


def test_chain_rupi_counterexample(capsys):
    code, rep, _ = run(capsys, "chain", "--in", fixture_path("counterexample_k8.json"), "--report", "rupi")
    assert code == 0
    assert rep["verdict"].startswith("not RUPI for (P*)^2P^2")
    assert [5, 5] in rep["(P*)^2P^2"]["absorbing"]
    assert "(5, 5)" in rep["verdict"]


def test_chain_two_state_exact_beta(tmp_path, capsys):
    code, rep, _ = run(capsys, "chain", "--in", fixture_path("two_state.json"), "--report", "beta-lower",
                       "--out", tmp_path)
    assert code == 0
    exact, sticky = np.array(rep["exact"], float), np.array(rep["sticky"], float)
    assert np.all(sticky <= exact * (1 + 1e-9) + 1e-15)
    assert (tmp_path / "beta_lower.csv").exists()


def test_chain_circle_walk_decay(tmp_path, capsys):
    code, rep, _ = run(capsys, "chain", "--in", fixture_path("circle_walk5.json"), "--report", "decay",
                       "--n", 200, "--out", tmp_path)
    assert code == 0
    assert rep["S"]["convergent"] and not rep["P"]["convergent"]
    assert (tmp_path / "decay_P.csv").exists() and (tmp_path / "decay_S.csv").exists()


def test_chain_conductance_and_duality(capsys):
    code, rep, _ = run(capsys, "chain", "--in", fixture_path("two_state.json"), "--report", "conductance")
    assert code == 0 and rep["n_states"] == 2
    code, rep, _ = run(capsys, "chain", "--in", fixture_path("circle_walk5.json"), "--report", "duality")
    assert code == 0


def test_chain_bad_vector(tmp_path, capsys):
    f = tmp_path / "f.json"
    f.write_text("[1, 2, 3]")
    code, _, err = run(capsys, "chain", "--in", fixture_path("two_state.json"), "--report", "decay", "--f", f)
    assert code == 2 and "--f" in err


def test_chain_state_cap_guidance(tmp_path, capsys):
    from subgeo import finite_chain as fc
    big = tmp_path / "big.json"
    fc.random_reversible_chain(30, 0).save(str(big))
    code, _, err = run(capsys, "chain", "--in", big, "--report", "conductance")
    assert code == 2 and "reduce the chain" in err


def test_rwm_bound_report(capsys):
    code, rep, _ = run(capsys, "rwm-bound", "--family", "student_t", "--d", 10, "--tau", 5,
                       "--varsigma", 1, "--eps", 0.01, "--u", 1)
    assert code == 0
    side = rep["side_by_side"]
    assert side["relative_difference"] < 0.05
    assert rep["constant_unresolved"] is True
    ns = []
    for u in (1, 10, 100):
        code, r, _ = run(capsys, "rwm-bound", "--d", 10, "--tau", 5, "--eps", 0.01, "--u", u)
        ns.append(r["n_bound"])
    assert ns == sorted(ns)


def test_rwm_bound_errors(capsys):
    code, _, err = run(capsys, "rwm-bound", "--d", 2, "--tau", 2, "--eps", 0.01)
    assert code == 2 and "xi" in err
    code, _, err = run(capsys, "rwm-bound", "--family", "cauchy_type", "--d", 2, "--eta", 1, "--eps", 0.01)
    assert code == 2
    code, _, err = run(capsys, "rwm-bound", "--d", 10, "--tau", 5, "--eps", 0.01, "--varsigma", 1000)
    assert code == 2 and "precondition" in err
    # precondition holds here but exp(2 varsigma^2) overflows
    code, _, err = run(capsys, "rwm-bound", "--d", 10, "--tau", 5, "--eps", 0.01, "--varsigma", 50)
    assert code == 3 and "numerical failure" in err


def test_simulate_rwm_and_determinism(tmp_path, capsys):
    cfg = fixture_path("sim_rwm_student_t.json")
    code, rep, _ = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a")
    assert code == 0
    assert rep["bound_holds_within_3se"]
    assert rep["acceptance_lower_bound"] == pytest.approx(0.5 * np.exp(-0.5))
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "b")
    names = sorted(q.name for q in (tmp_path / "a").iterdir())
    assert names == sorted(q.name for q in (tmp_path / "b").iterdir())
    assert {"summary.json", "diagnostics.json"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_jump_preset(tmp_path, capsys):
    cfg = json.loads(open(fixture_path("sim_jump_a4_b1.json")).read())
    cfg["diagnostics"] = {"decay": {"n_max": 16, "n_outer": 32, "n_inner": 16}, "tv": {"n_max": 32, "n_replicas": 2048}}
    path = tmp_path / "jump.json"
    path.write_text(json.dumps(cfg))
    code, rep, _ = run(capsys, "simulate", "--config", path, "--out", tmp_path / "o")
    assert code == 0
    assert rep["predicted_tv_exponent"] == 2.0
    for key in ("squared_norm_exponent", "tv_proxy_exponent", "jump_frequency"):
        assert key in rep
    assert (tmp_path / "o" / "decay.csv").exists() and (tmp_path / "o" / "tv_proxy.csv").exists()


def test_simulate_errors(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"target": {}, "kernel": {"type": "rwm"}, "surprise": 1}))
    code, _, err = run(capsys, "simulate", "--config", path, "--out", tmp_path / "o")
    assert code == 2 and "unknown config keys" in err
    path.write_text("[1]")
    code, _, _ = run(capsys, "simulate", "--config", path, "--out", tmp_path / "o")
    assert code == 2
    path.write_text(json.dumps({"target": {"family": "subexp_radial", "d": 1, "eta": 0.5, "tau": 1.0},
                                "kernel": {"type": "rwm", "sigma": 1.0}, "n_steps": 2,
                                "init": {"type": "point", "x": ["inf"]}}))
    with np.errstate(over="ignore"):
        code, _, err = run(capsys, "simulate", "--config", path, "--out", tmp_path / "o")
    assert code == 3 and "numerical failure" in err


def test_console_script_entry_point():
    exe = shutil.which("subgeo")
    cmd = [exe] if exe else [sys.executable, "-m", "subgeo.cli"]
    res = subprocess.run(cmd + ["--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "convert" in res.stdout
    res = subprocess.run(cmd + ["nope"], capture_output=True, text=True)
    assert res.returncode == 2
