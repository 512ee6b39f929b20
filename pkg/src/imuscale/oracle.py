"""Synthetic camera + IMU recordings with known ground truth.

Trajectories are sums of sinusoids, so positions, velocities,
accelerations, orientations and body rates all have closed forms; nothing
here differentiates numerically. The camera orientation is
``R_wc(t) = R0 @ exp([r(t)]_x)`` with a sinusoidal rotation vector
``r(t)``, whose body rate is ``J_r(r) r'(t)`` (right Jacobian of SO(3)).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import ImuSample, PoseSample
from .kinematics import exp_so3, matrix_to_quat, skew

TWO_PI = 2.0 * math.pi


def _rx(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def _rz(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


@dataclass
class ScenarioSpec:
    duration: float = 60.0
    imu_rate: float = 100.0
    cam_rate: float = 30.0
    # per-axis sums of sinusoids: lists of (amplitude, frequency Hz, phase rad)
    position_terms: list = field(default_factory=lambda: [[], [], []])
    rotation_terms: list = field(default_factory=lambda: [[], [], []])
    base_rotvec: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    # ground truth
    scale: float = 1.0
    R_S: list = field(default_factory=lambda: np.eye(3).tolist())
    t_d: float = 0.0
    b_gyro: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    b_acc: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    g_W: list = field(default_factory=lambda: [0.0, 0.0, 9.81])
    g_norm: float = 9.81
    # noise
    gyro_sigma: float = 0.0
    accel_sigma: float = 0.0
    pose_sigma: float = 0.0
    orientation_sigma: float = 0.0
    jitter_amplitude: float = 0.0
    jitter_frequency: float = 0.0

    def validate(self):
        if not (self.duration > 0 and self.imu_rate > 0 and self.cam_rate > 0):
            raise ValueError("duration and rates must be positive")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        f_lim = min(self.imu_rate, self.cam_rate) / 4.0
        for name in ("position_terms", "rotation_terms"):
            terms = getattr(self, name)
            if len(terms) != 3:
                raise ValueError(f"{name} needs one term list per axis")
            for axis in terms:
                for amp, freq, phase in axis:
                    if not 0 <= freq < f_lim:
                        raise ValueError(f"{name}: frequency {freq} Hz outside [0, {f_lim}) Hz")
        if abs(np.linalg.norm(self.g_W) - self.g_norm) > 1e-9 * self.g_norm:
            raise ValueError(f"|g_W| = {np.linalg.norm(self.g_W)} differs from g_norm = {self.g_norm}")
        R = np.asarray(self.R_S, dtype=float)
        if R.shape != (3, 3) or np.linalg.norm(R @ R.T - np.eye(3)) > 1e-9 or np.linalg.det(R) <= 0:
            raise ValueError("R_S must be a proper rotation matrix")
        for name in ("gyro_sigma", "accel_sigma", "pose_sigma", "orientation_sigma",
                     "jitter_amplitude", "jitter_frequency"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if TWO_PI * self.jitter_frequency * self.jitter_amplitude >= 1.0:
            raise ValueError("clock jitter would make IMU timestamps non-monotonic")
        return self

    def to_dict(self):
        d = asdict(self)
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**known)

    def noise_free(self):
        d = self.to_dict()
        for name in ("gyro_sigma", "accel_sigma", "pose_sigma", "orientation_sigma",
                     "jitter_amplitude"):
            d[name] = 0.0
        return ScenarioSpec.from_dict(d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ScenarioSpec.from_dict(d)


def _sinusoids(terms, t, order):
    """d^order/dt^order of sum A sin(2 pi f t + phi), per axis -> (N, 3)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros((len(t), 3))
    for axis, axis_terms in enumerate(terms):
        for amp, freq, phase in axis_terms:
            w = TWO_PI * freq
            arg = w * t + phase
            # derivatives of sin cycle through cos, -sin, -cos
            if order % 4 == 0:
                val = np.sin(arg)
            elif order % 4 == 1:
                val = np.cos(arg)
            elif order % 4 == 2:
                val = -np.sin(arg)
            else:
                val = -np.cos(arg)
            out[:, axis] += amp * w**order * val
    return out


def right_jacobian(rotvec):
    """J_r(phi) with R(phi)^T dR/dt = [J_r(phi) phi']_x, vectorised."""
    phi = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    K = skew(phi)
    small = theta < 1e-6
    t = np.where(small, 1.0, theta)
    a = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(t)) / t**2)
    b = np.where(small, 1.0 / 6.0 - theta**2 / 120.0, (t - np.sin(t)) / t**3)
    return np.eye(3) - a * K + b * (K @ K)


class Trajectory:
    """Closed-form motion of a scenario, in metric units."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.R0 = exp_so3(np.asarray(spec.base_rotvec, dtype=float))

    def position(self, t):
        return _sinusoids(self.spec.position_terms, t, 0)

    def velocity(self, t):
        return _sinusoids(self.spec.position_terms, t, 1)

    def acceleration(self, t):
        return _sinusoids(self.spec.position_terms, t, 2)

    def rotvec(self, t):
        return _sinusoids(self.spec.rotation_terms, t, 0)

    def camera_to_world(self, t):
        return self.R0 @ exp_so3(self.rotvec(t))

    def world_to_camera(self, t):
        """R^V_W(t)."""
        return np.swapaxes(self.camera_to_world(t), 1, 2)

    def body_rate(self, t):
        """Camera angular rate expressed in the camera frame."""
        r = self.rotvec(t)
        rdot = _sinusoids(self.spec.rotation_terms, t, 1)
        return np.einsum("nij,nj->ni", right_jacobian(r), rdot)

    def path_length(self, t_end=None, rate=1000.0):
        t_end = self.spec.duration if t_end is None else t_end
        t = np.arange(0.0, t_end, 1.0 / rate)
        speed = np.linalg.norm(self.velocity(t), axis=1)
        return float(np.trapezoid(speed, t)) if hasattr(np, "trapezoid") else float(np.trapz(speed, t))

    def specific_force(self, t):
        """Noise-free accelerometer reading in the camera frame, without bias."""
        R = self.world_to_camera(t)
        return np.einsum("nij,nj->ni", R, self.acceleration(t) + np.asarray(self.spec.g_W))


@dataclass
class SimulatedData:
    spec: ScenarioSpec
    seed: int
    truth_poses: list  # metric, noise-free
    poses: list  # SfM units, noisy
    imu: list

    def truth(self):
        s = self.spec
        return {
            "scale": s.scale,
            "R_S": np.asarray(s.R_S).tolist(),
            "t_d": s.t_d,
            "b_gyro": list(s.b_gyro),
            "b_acc": list(s.b_acc),
            "g_W": list(s.g_W),
            "g_norm": s.g_norm,
            "seed": self.seed,
            "path_length": Trajectory(s).path_length(),
            "scenario": s.to_dict(),
        }


def generate(spec: ScenarioSpec, rng_seed=0) -> SimulatedData:
    """Sample camera poses (SfM units) and IMU readings from a scenario.

    IMU model (sensor frame)::

        gyro  = R_S^T (w_C - b_gyro) + noise
        accel = R_S^T (R^V_W (a + g_W) + b_acc) + noise

    so that ``R_S gyro + b_gyro = w_C`` and ``R_S accel = R^V_W (a + g_W) + b_acc``.
    IMU samples taken at true time t carry the timestamp
    ``t + t_d + jitter_amplitude * sin(2 pi jitter_frequency t)``.
    """
    spec.validate()
    rng = np.random.default_rng(rng_seed)
    traj = Trajectory(spec)
    R_S = np.asarray(spec.R_S, dtype=float)

    n_cam = int(round(spec.duration * spec.cam_rate))
    t_cam = np.arange(n_cam) / spec.cam_rate
    p_true = traj.position(t_cam)
    R_vw = traj.world_to_camera(t_cam)
    q_true = matrix_to_quat(R_vw)
    p_sfm = p_true / spec.scale + spec.pose_sigma * rng.standard_normal((n_cam, 3))
    R_noisy = R_vw
    if spec.orientation_sigma > 0:
        R_noisy = exp_so3(spec.orientation_sigma * rng.standard_normal((n_cam, 3))) @ R_vw
    q_sfm = matrix_to_quat(R_noisy)

    n_imu = int(round(spec.duration * spec.imu_rate))
    t_imu = np.arange(n_imu) / spec.imu_rate
    w_C = traj.body_rate(t_imu)
    f_C = traj.specific_force(t_imu) + np.asarray(spec.b_acc)
    gyro = (w_C - np.asarray(spec.b_gyro)) @ R_S + spec.gyro_sigma * rng.standard_normal((n_imu, 3))
    accel = f_C @ R_S + spec.accel_sigma * rng.standard_normal((n_imu, 3))
    stamps = t_imu + spec.t_d
    if spec.jitter_amplitude > 0:
        stamps = stamps + spec.jitter_amplitude * np.sin(TWO_PI * spec.jitter_frequency * t_imu)

    truth_poses = [PoseSample(t, p, q) for t, p, q in zip(t_cam, p_true, q_true)]
    poses = [PoseSample(t, p, q) for t, p, q in zip(t_cam, p_sfm, q_sfm)]
    imu = [ImuSample(t, g, a) for t, g, a in zip(stamps, gyro, accel)]
    return SimulatedData(spec, int(rng_seed), truth_poses, poses, imu)


def _g_default():
    d = np.array([0.08, -0.15, 1.0])
    return (9.81 * d / np.linalg.norm(d)).tolist()


# amplitudes (m), frequencies (Hz), phases (rad) of the default hand-held sweep
_DEFAULT_POSITION = [
    [(0.343, 0.06, 0.3), (0.147, 0.17, 1.1), (0.049, 0.39, 2.0), (0.017, 0.83, 0.4)],
    [(0.245, 0.045, 1.7), (0.108, 0.21, 0.2), (0.039, 0.47, 2.9), (0.015, 0.71, 1.3)],
    [(0.172, 0.08, 2.4), (0.078, 0.26, 0.8), (0.029, 0.53, 1.6), (0.012, 0.97, 0.1)],
]
_DEFAULT_ROTATION = [
    [(0.35, 0.07, 0.5), (0.10, 0.29, 1.9)],
    [(0.30, 0.11, 2.2), (0.12, 0.37, 0.7)],
    [(0.50, 0.05, 1.0), (0.15, 0.33, 2.6)],
]


def default_scenario() -> ScenarioSpec:
    """60 s hand-held sweep, 100 Hz IMU, 30 Hz camera, ~15 m of travel."""
    R_S = _rx(90.0) @ _rz(10.0)
    return ScenarioSpec(
        duration=60.0,
        imu_rate=100.0,
        cam_rate=30.0,
        position_terms=[[list(t) for t in axis] for axis in _DEFAULT_POSITION],
        rotation_terms=[[list(t) for t in axis] for axis in _DEFAULT_ROTATION],
        base_rotvec=[0.2, -0.3, 0.1],
        scale=0.37,
        R_S=R_S.tolist(),
        t_d=0.15,
        b_gyro=[0.01, -0.02, 0.005],
        b_acc=[0.1, -0.05, 0.2],
        g_W=_g_default(),
        g_norm=9.81,
        gyro_sigma=0.005,
        accel_sigma=0.05,
        pose_sigma=0.002,
    ).validate()
