import shutil
from pathlib import Path

import numpy as np
import pytest

from habitpolicy.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "base.cfg"


def _read_summary(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        key, value = line.split("=", 1)
        out[key] = value
    return out


@pytest.fixture(scope="module")
def solve_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    rc = main(["solve", "--config", str(CONFIG), "--out", str(out)])
    assert rc == 0
    return out


def test_solve_writes_artifacts(solve_dir):
    for name in ("phi_H.csv", "bracket_history.csv", "dual.csv", "policy.csv",
                 "summary.txt"):
        assert (solve_dir / name).exists(), name


def test_solve_summary_contents(solve_dir):
    summary = _read_summary(solve_dir / "summary.txt")
    for key in ("y_star", "x_star", "x_floor", "beta_hat", "x0", "c0",
                "max_hjb_residual", "max_dual_residual", "bisection_iterations",
                "wall_time_s"):
        assert key in summary, key
    assert 2.7 <= float(summary["x_star"]) <= 3.3
    assert 0.258144 < float(summary["y_star"]) < 0.470588
    assert abs(float(summary["x0"]) - 3.8) <= 0.3
    assert float(summary["max_hjb_residual"]) < 1e-6
    assert float(summary["max_dual_residual"]) < 1e-6


def test_csv_headers_and_shape(solve_dir):
    header = (solve_dir / "policy.csv").read_text().splitlines()[0]
    assert header == "x,c_star,theta_star,v,ce"
    assert (solve_dir / "dual.csv").read_text().splitlines()[0] == \
        "y,u,u_prime,u_second,residual"
    assert (solve_dir / "phi_H.csv").read_text().splitlines()[0] == "y,phi,H"
    data = np.genfromtxt(solve_dir / "policy.csv", delimiter=",", names=True)
    assert data.shape[0] == 400
    assert data["x"][0] >= 2.777 and data["x"][-1] <= 50.0


def test_reruns_byte_identical(solve_dir, tmp_path):
    out2 = tmp_path / "again"
    rc = main(["solve", "--config", str(CONFIG), "--out", str(out2)])
    assert rc == 0
    for name in ("phi_H.csv", "bracket_history.csv", "dual.csv", "policy.csv"):
        assert (solve_dir / name).read_bytes() == (out2 / name).read_bytes(), name


def test_missing_config_key_exits_usage(tmp_path):
    cfg = tmp_path / "partial.cfg"
    cfg.write_text("r=0.02\nmu=0.12\nsigma=0.2\nrho=1\nalpha=0.75\ndelta=0.3\n")
    out = tmp_path / "out"
    rc = main(["solve", "--config", str(cfg), "--out", str(out)])
    assert rc == 1
    assert not out.exists() or not any(out.iterdir())  # no partial artifacts


def test_invalid_override_exits_usage(tmp_path):
    rc = main(["solve", "--config", str(CONFIG), "--out", str(tmp_path),
               "--set", "alpha=0"])
    assert rc == 1


def test_missing_config_file(tmp_path):
    rc = main(["solve", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)])
    assert rc == 1


def test_flag_overrides_model_params(tmp_path):
    # alpha override moves the wealth floor to 1/r
    rc = main(["solve", "--config", str(CONFIG), "--out", str(tmp_path),
               "--alpha", "1.0"])
    assert rc == 0
    summary = _read_summary(tmp_path / "summary.txt")
    assert float(summary["x_floor"]) == pytest.approx(50.0, rel=1e-12)
    assert float(summary["x_star"]) > 50.0


def test_sweep_rows_and_isolation(tmp_path):
    rc = main(["sweep", "--config", str(CONFIG), "--out", str(tmp_path),
               "--parameter", "alpha", "--values", "0.75,1.5,0.9"])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "param,value,y_star,x_star,beta_hat,max_residual,status"
    assert len(lines) == 4
    rows = [line.split(",") for line in lines[1:]]
    assert rows[0][-1] == "ok"
    assert rows[1][-1].startswith("error:")  # alpha = 1.5 is invalid
    assert rows[2][-1] == "ok"  # later rows unaffected by the failure
    assert float(rows[2][3]) > float(rows[0][3])  # x* grows with alpha here


def test_sweep_bad_parameter_usage_error(tmp_path):
    rc = main(["sweep", "--config", str(CONFIG), "--out", str(tmp_path),
               "--parameter", "banana", "--values", "1,2"])
    assert rc == 1


def test_sweep_threads_match_serial(tmp_path):
    import habitpolicy as hp
    from habitpolicy.sweep import run_sweep

    serial = run_sweep(hp.BASE_PARAMS, "delta", [0.3, 0.35], threads=1)
    parallel = run_sweep(hp.BASE_PARAMS, "delta", [0.3, 0.35], threads=2)
    for a, b in zip(serial, parallel):
        assert a["status"] == b["status"] == "ok"
        assert a["x_star"] == b["x_star"]
        assert a["y_star"] == b["y_star"]


def test_verify_passes_and_writes_report(tmp_path):
    rc = main(["verify", "--config", str(CONFIG), "--out", str(tmp_path),
               "--skip-mc"])
    assert rc == 0
    report = (tmp_path / "verify_report.txt").read_text()
    assert "PASS" in report and "FAIL" not in report


def test_verify_corrupted_fails_with_exit_3(tmp_path, capsys):
    rc = main(["verify", "--config", str(CONFIG), "--out", str(tmp_path),
               "--skip-mc", "--corrupt-y-star", "0.01"])
    assert rc == 3
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "hjb_optimal_residual" in out


def test_simulate_quick(tmp_path):
    rc = main([
        "simulate", "--config", str(CONFIG), "--out", str(tmp_path),
        "--set", "sim.dt=5e-3", "--set", "sim.horizon_T=20",
        "--set", "sim.n_paths=200", "--set", "sim.x0=5", "--seed", "42",
        "--paths-csv", "2",
    ])
    assert rc == 0
    assert (tmp_path / "path_0.csv").exists()
    assert (tmp_path / "path_1.csv").exists()
    header = (tmp_path / "path_0.csv").read_text().splitlines()[0]
    assert header == "t,x,c,theta,w,z"
    summary = _read_summary(tmp_path / "summary.txt")
    assert "mc_mean" in summary and summary["mc_check"] == "pass"


def test_simulate_requires_sim_section(tmp_path):
    rc = main(["simulate", "--config", str(CONFIG), "--out", str(tmp_path)])
    assert rc == 1
