import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imuscale import kinematics as kin

from .conftest import random_rotation


def spin_z(w, rate, n):
    t = np.arange(n) / rate
    return kin.exp_so3(np.outer(t, [0.0, 0.0, w]))


def test_constant_orientation_has_zero_rate():
    R = np.repeat(random_rotation(np.random.default_rng(0))[None], 20, axis=0)
    assert np.allclose(kin.angular_velocity(R, 100.0), 0.0, atol=1e-15)


def test_constant_axis_spin():
    w = kin.angular_velocity(spin_z(0.5, 100.0, 200), 100.0)
    assert w.shape == (200, 3)
    assert np.max(np.abs(w[1:-1] - [0, 0, 0.5])) < 1e-5


def test_needs_three_samples():
    with pytest.raises(ValueError):
        kin.angular_velocity(spin_z(0.5, 100.0, 2), 100.0)


def _wobble(t):
    # rotation about a fixed axis by angle 0.8 sin(2 pi 0.7 t)
    axis = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    ang = 0.8 * np.sin(2 * np.pi * 0.7 * t)
    dang = 0.8 * 2 * np.pi * 0.7 * np.cos(2 * np.pi * 0.7 * t)
    return kin.exp_so3(np.outer(ang, axis)), np.outer(dang, axis)


def test_finite_difference_error_is_second_order():
    errs = []
    for rate in (50.0, 100.0, 200.0):
        t = np.arange(int(4 * rate)) / rate
        R, w_true = _wobble(t)
        w = kin.angular_velocity(R, rate)
        errs.append(np.max(np.abs(w[1:-1] - w_true[1:-1])))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < r < 4.5 for r in ratios), ratios


def test_camera_body_rate_is_negated_spatial_rate():
    R, _ = _wobble(np.arange(300) / 100.0)
    assert np.allclose(kin.camera_body_rate(R, 100.0), -kin.angular_velocity(R, 100.0))


def test_symmetric_part_vanishes_with_rate():
    norms = []
    for rate in (25.0, 50.0, 100.0, 200.0):
        R, _ = _wobble(np.arange(int(3 * rate)) / rate)
        norms.append(np.max(kin.discarded_symmetric_part(R, rate)[1:-1]))
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_angular_velocity_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    R, _ = _wobble(np.arange(60) / 30.0)
    R = R @ random_rotation(rng)[None]  # pre-existing orientation
    G = random_rotation(rng)
    w1 = kin.angular_velocity(R, 30.0)
    w2 = kin.angular_velocity(R @ G, 30.0)
    assert np.max(np.abs(w1 - w2)) < 1e-9


def test_quaternion_round_trip(rng):
    R = np.array([random_rotation(rng) for _ in range(50)])
    q = kin.matrix_to_quat(R)
    assert np.all(q[:, 3] >= 0)
    assert np.allclose(kin.quat_to_matrix(q), R, atol=1e-12)


def test_quaternion_convention_z_quarter_turn():
    h = np.sqrt(0.5)
    R = kin.quat_to_matrix(np.array([0, 0, h, h]))
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0])


def test_rotate_world_to_camera_identity_and_norm(rng):
    v = rng.standard_normal((10, 3))
    eye = np.repeat(np.eye(3)[None], 10, axis=0)
    assert np.allclose(kin.rotate_world_to_camera(eye, v), v)
    R = np.array([random_rotation(rng) for _ in range(10)])
    out = kin.rotate_world_to_camera(R, v)
    assert np.allclose(np.linalg.norm(out, axis=1), np.linalg.norm(v, axis=1))
    back = np.einsum("nji,nj->ni", R, out)
    assert np.allclose(back, v)


def test_rotate_world_to_camera_constant_vector():
    R = kin.exp_so3(np.array([[0, 0, np.pi / 2]]))
    assert np.allclose(kin.rotate_world_to_camera(R, np.array([1.0, 0, 0])), [[0, 1, 0]])


def test_rotate_world_to_camera_length_mismatch():
    with pytest.raises(ValueError):
        kin.rotate_world_to_camera(np.repeat(np.eye(3)[None], 3, axis=0), np.zeros((4, 3)))


def test_rotate_sensor_to_camera(rng):
    x = rng.standard_normal((20, 3))
    assert np.allclose(kin.rotate_sensor_to_camera(np.eye(3), x), x)
    R = random_rotation(rng)
    y = kin.rotate_sensor_to_camera(R, x)
    assert np.max(np.abs(kin.rotate_sensor_to_camera(R.T, y) - x)) < 1e-12
    assert np.allclose(np.linalg.norm(y, axis=1), np.linalg.norm(x, axis=1))


def test_rotate_sensor_to_camera_rejects_non_orthogonal():
    with pytest.raises(ValueError):
        kin.rotate_sensor_to_camera(np.diag([1.0, 1.0, 1.01]), np.zeros((3, 3)))


def test_exp_so3_matches_small_angle_and_vee_skew(rng):
    v = rng.standard_normal(3)
    assert np.allclose(kin.vee(kin.skew(v)), v)
    R = kin.exp_so3(v)
    assert kin.orthogonality_error(R) < 1e-12
    assert np.isclose(kin.rotation_angle(R, np.eye(3)), np.linalg.norm(v) % (2 * np.pi)
                      if np.linalg.norm(v) <= np.pi else 2 * np.pi - np.linalg.norm(v))
