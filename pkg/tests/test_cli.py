import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from imuscale import cli, ingest, kinematics


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--outdir", str(out), "--seed", "0", "--report", str(out / "sim.json")]) == 0
    return out


def streams(d):
    return ["--trajectory", str(d / "trajectory.txt"), "--imu", str(d / "imu.csv")]


def load(path):
    return json.loads(path.read_text())


def test_simulate_writes_files(sim_dir):
    truth = load(sim_dir / "truth.json")
    assert truth["scale"] == 0.37
    assert len(ingest.parse_imu(sim_dir / "imu.csv")) == 6000
    assert len(ingest.parse_trajectory(sim_dir / "trajectory.txt")) == 1800


def test_simulate_is_byte_identical(sim_dir, tmp_path):
    assert cli.main(["simulate", "--outdir", str(tmp_path), "--seed", "0", "--report", str(tmp_path / "r.json")]) == 0
    for name in ("trajectory.txt", "imu.csv", "truth.json"):
        assert (tmp_path / name).read_bytes() == (sim_dir / name).read_bytes()


def test_simulate_custom_duration(tmp_path):
    assert cli.main(["simulate", "--outdir", str(tmp_path), "--duration", "10", "--report",
                     str(tmp_path / "r.json")]) == 0
    assert len(ingest.parse_imu(tmp_path / "imu.csv")) == 1000


def test_simulate_invalid_spec(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"imu_rate": -100.0}))
    rc = cli.main(["simulate", "--outdir", str(tmp_path / "o"), "--scenario", str(tmp_path / "bad.json")])
    assert rc == cli.USAGE_EXIT
    assert "positive" in capsys.readouterr().err


def test_estimate_within_two_percent(sim_dir, tmp_path):
    report = tmp_path / "est.json"
    assert cli.main(["estimate", *streams(sim_dir), "--report", str(report), "--record-timings"]) == 0
    rep = cli.Report.from_json(report.read_text())
    s_true = load(sim_dir / "truth.json")["scale"]
    assert abs(rep.solution["s"] - s_true) / s_true < 0.02
    assert rep.config["f_max"] == 1.2 and rep.config["g_norm"] == 9.81
    assert rep.config["search_halfwidth"] == 0.5
    assert set(rep.inputs) == {str(sim_dir / "trajectory.txt"), str(sim_dir / "imu.csv")}
    assert sum(rep.timings_ms.values()) < 1000.0


def test_report_round_trip(sim_dir, tmp_path):
    report = tmp_path / "est.json"
    cli.main(["estimate", *streams(sim_dir), "--report", str(report)])
    text = report.read_text()
    rep = cli.Report.from_json(text)
    assert rep.to_json() == text
    assert rep.scale_solution().to_dict() == rep.solution
    assert rep.alignment_result().to_dict() == rep.alignment
    assert cli.RunConfig.from_dict(rep.config).to_dict() == rep.config


def test_estimate_is_deterministic(sim_dir, tmp_path):
    # identical config (including the report path) on both runs
    path = tmp_path / "r.json"
    cli.main(["estimate", *streams(sim_dir), "--report", str(path)])
    first = path.read_bytes()
    cli.main(["estimate", *streams(sim_dir), "--report", str(path)])
    assert path.read_bytes() == first


def test_missing_imu_is_ingest_failure(sim_dir, tmp_path, capsys):
    rc = cli.main(["estimate", "--trajectory", str(sim_dir / "trajectory.txt"),
                   "--imu", str(tmp_path / "nope.csv")])
    assert rc == 2
    assert "ingest" in capsys.readouterr().err


def test_align_offset_within_two_ms(sim_dir, tmp_path):
    report = tmp_path / "al.json"
    assert cli.main(["align", *streams(sim_dir), "--report", str(report)]) == 0
    rep = load(report)
    assert rep["solution"] is None
    assert abs(rep["alignment"]["t_d"] - load(sim_dir / "truth.json")["t_d"]) < 2e-3


def test_evaluate_writes_four_row_curve(sim_dir, tmp_path):
    curve = tmp_path / "curve.csv"
    rc = cli.main(["evaluate", *streams(sim_dir), "--truth", str(sim_dir / "truth.json"),
                   "--checkpoints", "1,2,6,14", "--curve", str(curve), "--report", str(tmp_path / "ev.json")])
    assert rc == 0
    rows = list(csv.reader(open(curve)))
    assert rows[0] == ["distance_m", "error_percent"]
    assert [float(r[0]) for r in rows[1:]] == [1.0, 2.0, 6.0, 14.0]
    ev = load(tmp_path / "ev.json")["evaluation"]
    assert ev["truth_source"] == "sidecar" and ev["full_error_percent"] < 2.0


def test_evaluate_without_truth_source(sim_dir, capsys):
    assert cli.main(["evaluate", *streams(sim_dir)]) == 6
    assert "truth" in capsys.readouterr().err


def test_evaluate_with_ground_points(sim_dir, tmp_path):
    rng = np.random.default_rng(0)
    metric = rng.uniform(-3, 3, (6, 3))
    R = kinematics.exp_so3(np.array([0.1, 0.4, -0.2]))
    sfm = (metric - [1.0, 0.0, 2.0]) @ R / 0.37
    lines = ["x,y,z,X,Y,Z"] + [",".join(repr(float(v)) for v in row) for row in np.hstack([sfm, metric])]
    (tmp_path / "gcp.csv").write_text("\n".join(lines) + "\n")
    rc = cli.main(["evaluate", *streams(sim_dir), "--ground-points", str(tmp_path / "gcp.csv"),
                   "--checkpoints", "14", "--report", str(tmp_path / "ev.json")])
    assert rc == 0
    ev = load(tmp_path / "ev.json")["evaluation"]
    assert ev["truth_scale"] == pytest.approx(0.37, rel=1e-12)
    # the residual of the registered points reflects only the scale error
    assert ev["ground_fit"]["rmse"] < 0.02 * np.sqrt(np.mean(np.sum((metric - metric.mean(0)) ** 2, axis=1)))


def test_gravity_aligned_export(sim_dir, tmp_path):
    out = tmp_path / "metric.txt"
    report = tmp_path / "est.json"
    assert cli.main(["estimate", *streams(sim_dir), "--report", str(report),
                     "--scaled-trajectory", str(out), "--gravity-aligned"]) == 0
    sol = load(report)["solution"]
    A = cli.gravity_alignment(sol["g_W"])
    g_new = A @ np.array(sol["g_W"])
    # the gravity reaction points up, so "down" lands on -y
    assert np.allclose(g_new, [0.0, np.linalg.norm(sol["g_W"]), 0.0], atol=1e-9)
    metric = ingest.parse_trajectory(out)
    orig = ingest.parse_trajectory(sim_dir / "trajectory.txt")
    p0 = np.array([p.position for p in orig])
    p1 = np.array([p.position for p in metric])
    assert np.allclose(p1, sol["s"] * p0 @ A.T, atol=1e-9)
    # a gravity direction seen by the camera is unchanged by re-expressing the world
    Rc0 = kinematics.quat_to_matrix(orig[10].orientation)
    Rc1 = kinematics.quat_to_matrix(metric[10].orientation)
    assert np.allclose(Rc1 @ g_new, Rc0 @ np.array(sol["g_W"]), atol=1e-9)


def test_config_file_from_environment(sim_dir, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"f_max": 0.9, "skip_frequency": True}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    report = tmp_path / "r.json"
    assert cli.main(["estimate", *streams(sim_dir), "--report", str(report), "--f-max", "1.0"]) == 0
    rep = load(report)
    assert rep["config"]["f_max"] == 1.0  # flag beats file
    assert rep["config"]["skip_frequency"] is True
    assert rep["solution"]["s"] == rep["time_solution"]["s"]


def test_unknown_config_key(sim_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"fmax": 0.9}))
    assert cli.main(["estimate", *streams(sim_dir), "--config", str(cfg)]) == cli.USAGE_EXIT


def test_run_config_defaults():
    cfg = cli.RunConfig()
    assert (cfg.f_max, cfg.g_norm, cfg.search_halfwidth) == (1.2, 9.81, 0.5)
    assert cfg.checkpoints == [1.0, 2.0, 6.0, 14.0] or cfg.checkpoints == [1, 2, 6, 14]
    assert cli.RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        cli.RunConfig(f_max=-1.0).validate()


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.USAGE_EXIT


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "imuscale", "simulate", "--outdir", str(tmp_path),
                           "--duration", "3"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "simulate"
    assert math.isclose(json.loads(proc.stdout)["truth"]["scale"], 0.37)
