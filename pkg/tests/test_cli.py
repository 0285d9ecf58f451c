import json

import numpy as np
import pytest

from starkzeeman.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, dumps, main, resolve_system, run
from starkzeeman.errors import ConfigError
from starkzeeman.loops import smooth_random_loop, write_loop_csv

KEPLER_Q = (4 * np.pi**2) ** (-1 / 3)


def test_check_invariants_ksgeom():
    code, out = run(["check-invariants", "--module", "ksgeom"])
    assert code == EXIT_OK
    assert out["passed"] == out["total"] > 0


def test_find_orbit_kepler_and_verify(tmp_path):
    path = tmp_path / "orbit.json"
    code, out = run(["find-orbit", "--system", "kepler", "--seed", "circle:R=0.6,noise=0.01",
                     "--samples", "64", "--out", str(path)])
    assert code == EXIT_OK
    assert out["summary"]["converged"] and out["verification"]["passed"]
    assert out["summary"]["norm2"] == pytest.approx(KEPLER_Q, abs=1e-6)
    assert path.exists() and (tmp_path / "orbit.q.csv").exists()
    code, ver = run(["verify", "--system", "kepler", "--loop", str(path)])
    assert code == EXIT_OK and ver["passed"]
    assert ver["legendre"]["identity_gap"] < 1e-8


def test_verify_rejects_random_loop(tmp_path, rng):
    path = tmp_path / "z.csv"
    write_loop_csv(path, smooth_random_loop(rng, 32, 3, 0.5, 4, np.pi))
    code, out = run(["verify", "--system", "kepler", "--loop", str(path), "--twist", str(np.pi)])
    assert code == EXIT_NUMERICAL and not out["passed"]


def test_simulate_writes_csv(tmp_path):
    path = tmp_path / "traj.csv"
    code, out = run(["simulate", "--system", "cr3bp", "mu=0.01", "--q0", "0.1", "0", "0",
                     "--v0", "0", "0.1", "0.02", "--tspan", "0", "2", "--samples", "21", "--out", str(path)])
    assert code == EXIT_OK
    assert out["energy_drift"] < 1e-8
    assert len(path.read_text(encoding="utf-8").splitlines()) == 22


@pytest.mark.parametrize("cmd", ["ks", "moser"])
def test_regularized_commands(cmd):
    code, out = run([cmd, "--system", "kepler", "--q0", "1", "0", "0", "--v0", "0", "1", "0",
                     "--span", "0", "5", "--samples", "11"])
    assert code == EXIT_OK
    assert out["energy"] == pytest.approx(-0.5)
    code, out = run([cmd, "--system", "bcr4bp"])
    assert code == EXIT_CONFIG


def test_config_errors(tmp_path, capsys):
    assert run(["simulate", "--system", "nosuch"])[0] == EXIT_CONFIG
    assert run(["simulate", "--system", "cr3bp", "mu=abc"])[0] == EXIT_CONFIG
    assert run(["simulate", "--system", "kepler", "--tol", "-1"])[0] == EXIT_CONFIG
    assert run(["simulate"])[0] == EXIT_CONFIG
    assert run(["frobnicate"])[0] == EXIT_CONFIG
    assert run(["find-orbit", "--system", "kepler", "--seed", "blob"])[0] == EXIT_CONFIG
    assert main(["simulate", "--system", "nosuch"]) == EXIT_CONFIG
    assert "starkzeeman:" in capsys.readouterr().err


def test_resolve_system(tmp_path):
    assert resolve_system(["cr3bp", "mu=0.02"]).params["mu"] == 0.02
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"name": "rkp"}), encoding="utf-8")
    assert resolve_system([str(path)]).name == "rkp"
    with pytest.raises(ConfigError):
        resolve_system(["cr3bp", "mu"])


def test_sweep(tmp_path, monkeypatch):
    monkeypatch.setenv("STARKZEEMAN_THREADS", "4")
    jobs = [["find-orbit", "--system", "kepler", "--samples", "64",
             "--seed", "circle:R=0.6,noise=0.01", "--rng-seed", str(k)] for k in range(8)]
    path = tmp_path / "jobs.json"
    path.write_text(json.dumps(jobs), encoding="utf-8")
    code, out = run(["sweep", "--jobs", str(path)])
    assert code == EXIT_OK
    vals = [j["result"]["summary"]["norm2"] for j in out["jobs"]]
    assert np.ptp(vals) < 1e-9

    path.write_text("[]", encoding="utf-8")
    assert run(["sweep", "--jobs", str(path)])[0] == EXIT_CONFIG
    path.write_text(json.dumps([jobs[0], ["simulate", "--system", "nosuch"]]), encoding="utf-8")
    code, out = run(["sweep", "--jobs", str(path)])
    assert code == EXIT_CONFIG and [j["exit"] for j in out["jobs"]] == [EXIT_OK, EXIT_CONFIG]
    monkeypatch.setenv("STARKZEEMAN_THREADS", "zero")
    assert run(["sweep", "--jobs", str(path)])[0] == EXIT_CONFIG


def test_config_precedence(tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"tspan": [0.0, 0.5], "samples": 5}), encoding="utf-8")
    base = ["--config", str(conf), "simulate", "--system", "kepler", "--q0", "1", "0", "0"]
    code, out = run(base)
    assert code == EXIT_OK and out["t_end"] == 0.5 and out["samples"] == 5
    code, out = run(base + ["--samples", "7"])
    assert out["samples"] == 7
    conf.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
    assert run(base)[0] == EXIT_CONFIG


def test_output_is_deterministic():
    argv = ["find-orbit", "--system", "rkp", "--seed", "circle:R=0.6,plane=1k,noise=0.01",
            "--samples", "32", "--rng-seed", "5"]
    a = dumps(run(argv)[1])
    b = dumps(run(argv)[1])
    assert a == b
    assert "NaN" not in a and "Infinity" not in a
