import csv
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ordex.cli import EXIT_BREAKDOWN, EXIT_OK, EXIT_USAGE, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, name="p.json", **cfg):
    base = {"schema": 1, "interval": [0, 1], "n": 101, "m": 2}
    base.update(cfg)
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


CONST = {"model": {"type": "builtin", "builtin": "constant"}}
JORDAN = {"model": {"type": "builtin", "builtin": "jordan"}}


# ---- tridiag ---------------------------------------------------------------------

def test_tridiag_jordan_breakdown(tmp_path):
    assert run("tridiag", write_cfg(tmp_path, **JORDAN), tmp_path) == EXIT_BREAKDOWN
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["breakdown"] and rep["breakdown_step"] == 1 and rep["completed"] == 1


def test_tridiag_constant_beta_corner(tmp_path):
    assert run("tridiag", write_cfg(tmp_path, **CONST), tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "betas.csv")
    assert list(rows[0]) == ["k", "i", "j", "t_prime", "t", "re", "im"]
    corner = [r for r in rows if float(r["t_prime"]) == 1.0 and float(r["t"]) == 0.0]
    assert len(corner) == 1 and abs(float(corner[0]["re"]) - 6.0) < 1e-9
    # row-major over the lower triangle
    assert len(rows) == 101 * 102 // 2
    assert [(int(r["i"]), int(r["j"])) for r in rows[:4]] == [(0, 0), (1, 0), (1, 1), (2, 0)]


def test_tridiag_theta_form(tmp_path):
    assert run("tridiag", write_cfg(tmp_path, **CONST), tmp_path, "--theta-form") == EXIT_OK
    res = np.array([float(r["re"]) for r in read_csv(tmp_path / "betas.csv")])
    assert np.max(np.abs(res - 6)) < 1e-8
    assert json.loads((tmp_path / "report.json").read_text())["form"] == "theta"


def test_tridiag_scalar_cos_alphas(tmp_path):
    assert run("tridiag", CONFIGS / "scalar_cos.json", tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "alphas.csv")
    tp = np.array([float(r["t_prime"]) for r in rows])
    re = np.array([float(r["re"]) for r in rows])
    assert np.array_equal(re, np.cos(tp))
    assert read_csv(tmp_path / "betas.csv") == []


# ---- evolve ----------------------------------------------------------------------

def test_evolve_rotation(tmp_path):
    cfg = write_cfg(tmp_path, model={"type": "builtin", "builtin": "rotation"}, n=401)
    assert run("evolve", cfg, tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "evolve.csv")
    assert list(rows[0]) == ["t", "u_re", "u_im", "oracle_re", "oracle_im", "abs_err"]
    t = np.array([float(r["t"]) for r in rows])
    u = np.array([float(r["u_re"]) for r in rows])
    assert np.max(np.abs(u - np.cos(t))) <= 1e-4
    assert max(float(r["abs_err"]) for r in rows) <= 1e-4


def test_evolve_commuting_second_order(tmp_path):
    errs = []
    for n in (101, 201):
        cfg = write_cfg(tmp_path, model={"type": "builtin", "builtin": "commuting"}, n=n, m=3)
        assert run("evolve", cfg, tmp_path / str(n)) == EXIT_OK
        errs.append(max(float(r["abs_err"]) for r in read_csv(tmp_path / str(n) / "evolve.csv")))
    assert errs[1] < 1e-3
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_evolve_airy_relative(tmp_path, capsys):
    assert run("evolve", CONFIGS / "airy.json", tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "evolve.csv")
    ref = np.array([complex(float(r["oracle_re"]), float(r["oracle_im"])) for r in rows])
    err = np.array([float(r["abs_err"]) for r in rows])
    assert err.max() / np.abs(ref).max() <= 1e-3
    out = capsys.readouterr().out
    assert "max_rel_err" in out and "runtime" in out


def test_evolve_jordan_truncated(tmp_path, capsys):
    assert run("evolve", write_cfg(tmp_path, **JORDAN), tmp_path) == EXIT_BREAKDOWN
    assert "truncated" in capsys.readouterr().err


# ---- moments ---------------------------------------------------------------------

def test_moments_constant(tmp_path):
    cfg = write_cfg(tmp_path, interval=[0, 0.5], **CONST)
    assert run("moments", cfg, tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "moments.csv")
    assert [r["j"] for r in rows] == ["0", "1", "2", "3", "4"]
    assert float(rows[0]["tri_mismatch"]) == 0 and float(rows[0]["brute_mismatch"]) == 0
    assert float(rows[0]["moment_norm"]) == float(rows[0]["tri_moment_norm"]) == 1
    for r in rows[:4]:
        assert r["guaranteed"] == "yes" and r["status"] == "pass"
    assert rows[4]["guaranteed"] == "no"


def test_moments_jmax(tmp_path):
    cfg = write_cfg(tmp_path, **CONST)
    assert run("moments", cfg, tmp_path, "--jmax", "6") == EXIT_OK
    assert len(read_csv(tmp_path / "moments.csv")) == 7
    assert run("moments", cfg, tmp_path, "--jmax", "-1") == EXIT_USAGE


def test_moments_beyond_guarantee_reported_not_failed(tmp_path):
    coeffs = (np.random.default_rng(3).standard_normal((4, 4, 3)) * 0.7).tolist()
    cfg = write_cfg(tmp_path, model={"type": "polynomial", "coeffs": coeffs})
    assert run("moments", cfg, tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "moments.csv")
    assert all(r["status"] == "pass" for r in rows[:4])
    assert rows[4]["status"] == "mismatch" and rows[4]["guaranteed"] == "no"


# ---- probe -----------------------------------------------------------------------

def probe_rows(tmp_path, cfg, *extra):
    assert run("probe", cfg, tmp_path, *extra) == EXIT_OK
    return read_csv(tmp_path / "probe.csv")


def test_probe_jordan(tmp_path):
    rows = probe_rows(tmp_path, write_cfg(tmp_path, **JORDAN))
    assert len(rows) == 11
    assert all(r["depth"] == "1" and r["breakdown_step"] == "1" for r in rows)


def test_probe_constant_full_depth(tmp_path):
    rows = probe_rows(tmp_path, write_cfg(tmp_path, **CONST), "--samples", "5")
    assert len(rows) == 5 and all(r["depth"] == "2" and r["kind"] == "complete" for r in rows)


def test_probe_mixed_depths(tmp_path):
    cfg = write_cfg(tmp_path, model={"type": "polynomial",
                                     "coeffs": [[[0, 0], [0, 1]], [[1, 0], [0, 0]]]})
    rows = probe_rows(tmp_path, cfg)
    assert rows[0]["depth"] == "1" and float(rows[0]["rho"]) == 0
    assert {r["depth"] for r in rows[1:]} == {"2"}


def test_probe_bad_samples(tmp_path):
    assert run("probe", write_cfg(tmp_path, **CONST), tmp_path, "--samples", "0") == EXIT_USAGE


# ---- converge --------------------------------------------------------------------

@pytest.mark.parametrize("cfg", ["scalar_exp.json", "rotation.json"])
def test_converge_order(tmp_path, cfg):
    assert run("converge", CONFIGS / cfg, tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "converge.csv")
    assert [r["n"] for r in rows] == ["101", "201", "401", "801"]
    assert rows[0]["observed_order"] == ""
    assert 1.8 <= float(rows[-1]["observed_order"]) <= 2.2


def test_converge_jordan(tmp_path, capsys):
    assert run("converge", write_cfg(tmp_path, n=21, **JORDAN), tmp_path,
               "--levels", "2") == EXIT_BREAKDOWN
    rows = read_csv(tmp_path / "converge.csv")
    assert all(r["max_err"] == "" and r["note"] for r in rows)
    assert "breakdown" in capsys.readouterr().err


def test_converge_levels_checked(tmp_path):
    assert run("converge", write_cfg(tmp_path, **CONST), tmp_path, "--levels", "1") == EXIT_USAGE


def test_threads_env_checked(tmp_path, monkeypatch):
    monkeypatch.setenv("ORDEX_THREADS", "many")
    assert run("converge", write_cfg(tmp_path, n=21, **CONST), tmp_path,
               "--levels", "2") == EXIT_USAGE


# ---- general ---------------------------------------------------------------------

def test_deterministic_output(tmp_path):
    cfg = write_cfg(tmp_path, **CONST)
    for d in ("a", "b"):
        assert run("tridiag", cfg, tmp_path / d) == EXIT_OK
        assert run("moments", cfg, tmp_path / d) == EXIT_OK
    for f in ("alphas.csv", "betas.csv", "report.json", "moments.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, n=3, **CONST)
    assert run("evolve", cfg, tmp_path) == EXIT_USAGE
    assert "$.n" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert run("evolve", tmp_path / "none.json", tmp_path) == EXIT_USAGE


def test_bad_usage():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["evolve"])
    assert exc.value.code == EXIT_USAGE


def test_run_failure_exit_code(tmp_path, capsys):
    # e^{300 t} overflows the resolvent bound long before t = 1
    cfg = write_cfg(tmp_path, model={"type": "polynomial", "coeffs": [[[300.0]]]}, m=1, n=401)
    assert run("evolve", cfg, tmp_path) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "run failed" in err and "ODE" not in err


def test_full_precision_numbers(tmp_path):
    cfg = write_cfg(tmp_path, model={"type": "builtin", "builtin": "airy"}, n=21, m=1,
                    w=[1, 0], v=[1, 0])
    assert run("tridiag", cfg, tmp_path) == EXIT_OK
    rows = read_csv(tmp_path / "alphas.csv")
    assert float(rows[-1]["re"]) == 0.0
    t = [float(r["t_prime"]) for r in rows]
    assert 0.05 in t and "0.050000000000000003" in (tmp_path / "alphas.csv").read_text()


@pytest.mark.skipif(shutil.which("ordex") is None, reason="console script not installed")
def test_console_script(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run(["ordex", "tridiag", "--config", str(CONFIGS / "jordan.json"),
                           "--out", str(tmp_path)], capture_output=True, text=True, env=env)
    assert proc.returncode == EXIT_BREAKDOWN


def test_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ordex.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("ordex ")
