import json

import numpy as np
import pytest
from click.testing import CliRunner

from sktlimit.cli import load_config, main
from sktlimit.errors import ConfigError


def run(args, env=None):
    return CliRunner().invoke(main, args, env=env or {"SKT_LIMIT_QUIET": "1"})


def test_regime_reports_rationals():
    res = run(["--preset", "weak", "regime"])
    assert res.exit_code == 0, res.output
    assert "WeakCompetition" in res.output
    assert "(= 17/64)" in res.output and "(= 207/392)" in res.output
    res = run(["--preset", "strong", "regime"])
    assert "StrongCompetition" in res.output and "(= 1/9)" in res.output


def test_regime_from_config_file(tmp_path):
    cfg = tmp_path / "m.ini"
    cfg.write_text("[model]\na1 = 1\na2 = 1\nb1 = 1\nb2 = 2\nc1 = 2\nc2 = 1\n[run]\nJ = 2\n")
    res = run(["--config", str(cfg), "regime"])
    assert res.exit_code == 0
    assert "d^(2)" in res.output and "d^(3)" not in res.output


@pytest.mark.parametrize("args", [
    ["--set", "model.a1=1", "regime"],
    ["--preset", "strong", "--set", "model.b1=1", "--set", "model.b2=1", "--set", "model.c1=1",
     "--set", "model.c2=1", "--set", "model.a2=1", "regime"],
    ["--preset", "strong", "--set", "model.colour=3", "regime"],
    ["--preset", "strong", "--set", "nosection", "regime"],
    ["--preset", "strong", "--set", "model.a1=-2", "regime"],
    ["--preset", "strong", "--set", "model.a1=abc", "regime"],
    ["--preset", "strong", "solve", "--d", "1.0"],
])
def test_configuration_errors_exit_2(args):
    assert run(args).exit_code == 2


def test_numerical_failure_exit_3(tmp_path):
    # above tau_tilde the WEAK_EXAMPLE nonlinearity has a single zero
    res = run(["--preset", "weak", "--out", str(tmp_path), "timemap", "--tau", "0.58", "--d", "0.01"])
    assert res.exit_code == 3


def test_load_config_rejects_unknown_section(tmp_path):
    cfg = tmp_path / "x.ini"
    cfg.write_text("[mystery]\nk = 1\n")
    with pytest.raises(ConfigError):
        load_config(cfg)
    assert load_config(None, ["model.preset=weak"]).model.a1 == 7.5


def test_hprofile_files_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        res = run(["--preset", "strong", "--out", str(out), "hprofile", "--tau", "0.05,0.5"])
        assert res.exit_code == 0
    for name in ("hprofile_tau_0.05.csv", "hprofile_tau_0.5.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    data = np.genfromtxt(a / "hprofile_tau_0.05.csv", delimiter=",", names=True)
    assert np.max(np.abs(data["h"][-3:])) < 1e-12
    man = json.loads((a / "hprofile_manifest.json").read_text())
    assert [p["zero_rows"] for p in man["profiles"]] == [3, 1]


def test_timemap_csv(tmp_path):
    res = run(["--preset", "strong", "--out", str(tmp_path), "--set", "timemap.n_points=40",
               "timemap", "--tau", "0.05", "--d", "0.001"])
    assert res.exit_code == 0
    data = np.genfromtxt(tmp_path / "timemap_tau_0.05_d_0.001.csv", delimiter=",", names=True)
    assert len(data) > 30
    assert data["X"][-2] == pytest.approx(data["X"][-1], rel=1e-5)


def test_solve_writes_both_orientations(tmp_path):
    res = run(["--preset", "weak", "--out", str(tmp_path), "solve", "--j", "1", "--d", "0.03",
               "--orientation", "both"])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "solve_j1_d_0.03.json").read_text())
    assert [s["orientation"] for s in rep["solutions"]] == ["+", "-"]
    assert all(s["constraint_ok"] for s in rep["solutions"])
    plus = np.genfromtxt(tmp_path / "profile_j1_plus_d_0.03.csv", delimiter=",", names=True)
    minus = np.genfromtxt(tmp_path / "profile_j1_minus_d_0.03.csv", delimiter=",", names=True)
    assert plus["u"][0] == pytest.approx(minus["u"][-1], rel=1e-12)


def test_branch_serial_and_parallel_agree(tmp_path):
    common = ["--preset", "strong", "--set", "branch.d_min_factor=0.3",
              "--set", "branch.n_geometric=3"]
    r1 = run(common + ["--out", str(tmp_path / "s"), "branch", "--j", "1,2", "--jobs", "1"])
    r2 = run(common + ["--out", str(tmp_path / "p"), "branch", "--j", "1,2", "--jobs", "2"])
    assert r1.exit_code == 0 and r2.exit_code == 0, r1.output + r2.output
    for name in ("branch_j1_plus.csv", "branch_j1_minus.csv", "branch_j2_plus.csv"):
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()
    man = json.loads((tmp_path / "s" / "branch_manifest.json").read_text())
    assert len(man["branches"]) == 4
    assert man["bifurcation_points"]["1"] == pytest.approx(0.0337737, abs=5e-8)


def test_quiet_switch(tmp_path):
    args = ["--preset", "strong", "--set", "branch.d_min_factor=0.5", "--set", "branch.n_geometric=2",
            "--out", str(tmp_path), "branch", "--j", "1"]
    loud = CliRunner().invoke(main, args, env={"SKT_LIMIT_QUIET": ""})
    quiet = CliRunner().invoke(main, args, env={"SKT_LIMIT_QUIET": "1"})
    assert "onset" in loud.stderr
    assert quiet.stderr == ""


def test_validate_sweep(tmp_path):
    res = run(["--preset", "weak", "--out", str(tmp_path), "--set", "validate.N=200", "validate",
               "--d", "0.02", "--betas", "100,400,1600"])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "validate_j1_d_0.02.json").read_text())
    assert rep["uv_decreasing"] and rep["u_distance_decreasing"]
    assert [r["beta"] for r in rep["sweep"]] == [100.0, 400.0, 1600.0]
