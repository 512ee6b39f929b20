import math
import warnings

import numpy as np
import pytest

from imuscale import ingest, kinematics, oracle, pipeline


def test_stationary_scenario():
    spec = oracle.ScenarioSpec(duration=5.0, b_gyro=[0.01, 0.0, -0.02])
    data = oracle.generate(spec, 0)
    _, gyro, acc = ingest.imu_arrays(data.imu)
    assert np.allclose(np.linalg.norm(acc, axis=1), 9.81, atol=1e-12)
    # R_S = I, so the sensor reads the negated bias while at rest
    assert np.allclose(gyro, [-0.01, 0.0, 0.02], atol=1e-15)


def test_single_axis_spin_reads_rotation_rate():
    # about one fixed axis the body rate is the derivative of the angle
    terms = [[], [], [[1.2, 0.3, 0.4]]]
    spec = oracle.ScenarioSpec(duration=4.0, rotation_terms=terms)
    data = oracle.generate(spec, 0)
    t, gyro, _ = ingest.imu_arrays(data.imu)
    w = 2 * math.pi * 0.3
    expected = 1.2 * w * np.cos(w * t + 0.4)
    assert np.allclose(gyro[:, :2], 0.0, atol=1e-12)
    assert np.allclose(gyro[:, 2], expected, atol=1e-12)


def test_body_rate_matches_orientation_differences():
    traj = oracle.Trajectory(oracle.default_scenario())
    t = np.arange(0, 10, 1e-3)
    R = traj.camera_to_world(t)
    # camera_to_world rates are spatial in world and body in camera; use the body form
    dR = np.einsum("nji,njk->nik", R[:-2], R[2:])
    fd = np.array([kinematics.vee(0.5 * (m - m.T)) for m in dR]) / 2e-3
    assert np.max(np.abs(fd - traj.body_rate(t[1:-1]))) < 1e-4


def test_default_scenario_counts_and_path():
    spec = oracle.default_scenario()
    data = oracle.generate(spec, 0)
    assert len(data.imu) == 6000
    assert len(data.poses) == len(data.truth_poses) == 1800
    length = oracle.Trajectory(spec).path_length()
    assert 14.0 <= length <= 20.0
    # the same length measured on the emitted truth poses
    p = np.array([s.position for s in data.truth_poses])
    assert np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)) == pytest.approx(length, rel=1e-3)


def test_default_scenario_truth_values():
    spec = oracle.default_scenario()
    assert spec.scale == 0.37 and spec.t_d == 0.15
    assert spec.b_acc == [0.1, -0.05, 0.2]
    R = np.array(spec.R_S)
    assert math.degrees(kinematics.rotation_angle(R, np.eye(3))) > 80
    assert np.linalg.norm(spec.g_W) == pytest.approx(9.81, abs=1e-12)
    rates = oracle.Trajectory(spec).body_rate(np.arange(0, 60, 0.01))
    assert np.all(np.std(rates, axis=0) > 0.05)  # every axis is exercised


def test_acceleration_is_second_difference_of_position():
    traj = oracle.Trajectory(oracle.default_scenario())
    errs = []
    for h in (1e-2, 5e-3):
        t = np.arange(0, 20, h)
        p = traj.position(t)
        fd = (p[2:] - 2 * p[1:-1] + p[:-2]) / h**2
        errs.append(np.max(np.abs(fd - traj.acceleration(t[1:-1]))))
    assert 3.5 < errs[0] / errs[1] < 4.5  # halving h quarters the error


def test_generate_is_deterministic():
    spec = oracle.default_scenario()
    a, b = oracle.generate(spec, 5), oracle.generate(spec, 5)
    c = oracle.generate(spec, 6)
    ta = np.array([s.accel for s in a.imu])
    assert np.array_equal(ta, np.array([s.accel for s in b.imu]))
    assert np.array_equal(np.array([s.position for s in a.poses]), np.array([s.position for s in b.poses]))
    assert not np.array_equal(ta, np.array([s.accel for s in c.imu]))


def test_poses_are_in_sfm_units():
    spec = oracle.default_scenario().noise_free()
    data = oracle.generate(spec, 0)
    p_true = np.array([s.position for s in data.truth_poses])
    p = np.array([s.position for s in data.poses])
    assert np.allclose(p * spec.scale, p_true, atol=1e-12)


def test_imu_timestamps_carry_offset_and_jitter():
    spec = oracle.default_scenario().replace(jitter_amplitude=0.015, jitter_frequency=0.5)
    t, _, _ = ingest.imu_arrays(oracle.generate(spec, 0).imu)
    base = np.arange(6000) / 100.0
    assert np.allclose(t - base - 0.15, 0.015 * np.sin(2 * math.pi * 0.5 * base))
    assert np.all(np.diff(t) > 0)


@pytest.mark.parametrize("change, match", [
    ({"imu_rate": -100.0}, "positive"),
    ({"scale": 0.0}, "scale"),
    ({"g_norm": 9.8}, "g_norm"),
    ({"R_S": np.diag([1.0, 1.0, -1.0]).tolist()}, "rotation"),
    ({"accel_sigma": -1.0}, "nonnegative"),
    ({"position_terms": [[[0.1, 8.0, 0.0]], [], []]}, "frequency"),
    ({"jitter_amplitude": 0.5, "jitter_frequency": 1.0}, "monotonic"),
])
def test_validate_rejects(change, match):
    with pytest.raises(ValueError, match=match):
        oracle.default_scenario().replace(**change).validate()


def test_unknown_spec_field_rejected():
    with pytest.raises(ValueError, match="unknown"):
        oracle.ScenarioSpec.from_dict({"durration": 3})


def test_truth_sidecar_contents():
    data = oracle.generate(oracle.default_scenario(), 3)
    truth = data.truth()
    assert truth["scale"] == 0.37 and truth["seed"] == 3
    assert oracle.ScenarioSpec.from_dict(truth["scenario"]) == data.spec


def test_identity_noise_free_pipeline_recovers_unit_scale():
    spec = oracle.default_scenario().noise_free().replace(
        scale=1.0, R_S=np.eye(3).tolist(), t_d=0.0, b_gyro=[0.0] * 3, b_acc=[0.0] * 3)
    data = oracle.generate(spec, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = pipeline.estimate(data.poses, data.imu)
    assert abs(res.solution.s - 1.0) < 1e-3


def test_written_files_parse_back(tmp_path):
    data = oracle.generate(oracle.default_scenario().replace(duration=2.0), 0)
    ingest.write_trajectory(tmp_path / "traj.txt", data.poses)
    ingest.write_imu(tmp_path / "imu.csv", data.imu)
    poses = ingest.parse_trajectory(tmp_path / "traj.txt")
    imu = ingest.parse_imu(tmp_path / "imu.csv")
    assert np.array_equal(np.array([p.position for p in poses]), np.array([p.position for p in data.poses]))
    assert np.array_equal(np.array([s.gyro for s in imu]), np.array([s.gyro for s in data.imu]))
