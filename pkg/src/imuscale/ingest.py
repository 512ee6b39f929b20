"""Reading trajectory/IMU files and resampling them onto a uniform time base.

Trajectory files are TUM-style text, one pose per line::

    t x y z qx qy qz qw

where the quaternion encodes the world-to-camera rotation. IMU files are
CSV with ``t,gx,gy,gz,ax,ay,az`` in SI units and an optional header row.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestError, IngestWarning

MIN_POSES = 10
ACCEL_SANITY = 200.0  # m/s^2
QUAT_TOL = 1e-9
FRAME_JITTER = 0.25  # fraction of the nominal frame interval


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        gyro = np.asarray(self.gyro, dtype=float).reshape(3)
        accel = np.asarray(self.accel, dtype=float).reshape(3)
        if not (math.isfinite(self.t) and np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
            raise IngestError(f"non-finite IMU sample at t={self.t}")
        if np.linalg.norm(accel) >= ACCEL_SANITY:
            raise IngestError(f"accelerometer magnitude {np.linalg.norm(accel):.1f} m/s^2 at t={self.t} "
                              f"exceeds sanity bound {ACCEL_SANITY}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "gyro", gyro)
        object.__setattr__(self, "accel", accel)


@dataclass(frozen=True)
class PoseSample:
    """Camera pose; ``orientation`` is a unit quaternion (x, y, z, w) of R^V_W."""

    t: float
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if not (math.isfinite(self.t) and np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            raise IngestError(f"non-finite pose at t={self.t}")
        norm = np.linalg.norm(q)
        if norm < 1e-6:
            raise IngestError(f"degenerate quaternion at t={self.t}")
        if abs(norm - 1.0) > QUAT_TOL:
            q = q / norm
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", q)


@dataclass
class UniformSeries:
    """Fixed-rate multi-channel series; sample k sits at ``t0 + k / rate``."""

    t0: float
    rate: float
    channels: dict = field(default_factory=dict)
    n: int | None = None

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        lengths = {len(v) for v in self.channels.values()}
        if self.n is None:
            if len(lengths) != 1:
                raise ValueError("cannot infer length of a series without channels")
            self.n = lengths.pop()
        elif lengths and lengths != {self.n}:
            raise ValueError(f"channel lengths {sorted(lengths)} differ from n={self.n}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n) / self.rate

    @property
    def duration(self) -> float:
        return (self.n - 1) / self.rate

    def __len__(self):
        return self.n

    def __getitem__(self, name):
        return self.channels[name]

    def grid(self) -> "UniformSeries":
        """Same time base with no channels."""
        return UniformSeries(self.t0, self.rate, {}, n=self.n)


def _fail(path, lineno, msg):
    raise IngestError(f"{path}:{lineno}: {msg}")


def parse_trajectory(path) -> list[PoseSample]:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"trajectory file not found: {path}")
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                _fail(path, lineno, f"expected 8 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                _fail(path, lineno, "non-numeric field")
            if not all(math.isfinite(v) for v in vals):
                _fail(path, lineno, "non-finite value")
            if poses and vals[0] <= poses[-1].t:
                kind = "duplicate" if vals[0] == poses[-1].t else "non-monotonic"
                _fail(path, lineno, f"{kind} timestamp {vals[0]!r}")
            try:
                poses.append(PoseSample(vals[0], vals[1:4], vals[4:8]))
            except IngestError as exc:
                _fail(path, lineno, exc.args[0])
    if len(poses) < MIN_POSES:
        raise IngestError(f"{path}: {len(poses)} poses, need at least {MIN_POSES}")
    return poses


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse_imu(path) -> list[ImuSample]:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"IMU file not found: {path}")
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if not samples and lineno == 1 and not _is_number(parts[0]):
                continue  # header row
            if len(parts) != 7:
                _fail(path, lineno, f"expected 7 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                _fail(path, lineno, "non-numeric field")
            if not all(math.isfinite(v) for v in vals):
                _fail(path, lineno, "non-finite value")
            try:
                samples.append(ImuSample(vals[0], vals[1:4], vals[4:7]))
            except IngestError as exc:
                _fail(path, lineno, exc.args[0])
    if not samples:
        raise IngestError(f"{path}: no IMU samples")
    samples.sort(key=lambda s: s.t)
    t = np.array([s.t for s in samples])
    if np.any(np.diff(t) == 0):
        raise IngestError(f"{path}: duplicate IMU timestamps")
    return samples


def _fmt(v):
    return repr(float(v))


def write_trajectory(path, poses: Sequence[PoseSample], header=None):
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for p in poses:
            vals = [p.t, *p.position, *p.orientation]
            fh.write(" ".join(_fmt(v) for v in vals) + "\n")


def write_imu(path, samples: Sequence[ImuSample]):
    with open(path, "w") as fh:
        fh.write("t,gx,gy,gz,ax,ay,az\n")
        for s in samples:
            vals = [s.t, *s.gyro, *s.accel]
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def pose_arrays(poses: Sequence[PoseSample]):
    """Stack poses into ``(t, positions, quaternions)`` arrays."""
    t = np.array([p.t for p in poses])
    pos = np.array([p.position for p in poses]).reshape(-1, 3)
    quat = np.array([p.orientation for p in poses]).reshape(-1, 4)
    return t, pos, quat


def imu_arrays(samples: Sequence[ImuSample]):
    t = np.array([s.t for s in samples])
    gyro = np.array([s.gyro for s in samples]).reshape(-1, 3)
    accel = np.array([s.accel for s in samples]).reshape(-1, 3)
    return t, gyro, accel


def _retimed(sample, t):
    # the sample was validated on construction; only its timestamp changes
    out = object.__new__(type(sample))
    out.__dict__.update(sample.__dict__)
    object.__setattr__(out, "t", float(t))
    return out


def shift_clock(poses, imu, origin=None):
    """Shift both streams so that ``origin`` (default: first pose time) becomes 0."""
    if origin is None:
        origin = poses[0].t
    poses = [_retimed(p, p.t - origin) for p in poses]
    imu = [_retimed(s, s.t - origin) for s in imu]
    return poses, imu


def slerp(q0, q1, u):
    """Vectorised shortest-arc spherical interpolation of (x, y, z, w) quaternions."""
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    q1 = np.atleast_2d(np.asarray(q1, dtype=float)).copy()
    u = np.asarray(u, dtype=float).reshape(-1, 1)
    dot = np.sum(q0 * q1, axis=1, keepdims=True)
    flip = dot < 0
    q1 = np.where(flip, -q1, q1)
    dot = np.clip(np.abs(dot), -1.0, 1.0)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    small = sin_theta < 1e-9
    safe = np.where(small, 1.0, sin_theta)
    w0 = np.where(small, 1.0 - u, np.sin((1.0 - u) * theta) / safe)
    w1 = np.where(small, u, np.sin(u * theta) / safe)
    out = w0 * q0 + w1 * q1
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _grid_count(t_first, t_last, rate):
    return int(math.floor((t_last - t_first) * rate + 1e-9)) + 1


def resample_poses(poses: Sequence[PoseSample], rate: float) -> UniformSeries:
    """Upsample poses onto a uniform grid spanning [first, last] pose time.

    Positions are interpolated linearly, orientations by slerp between the
    bracketing poses.
    """
    if len(poses) < 2:
        raise IngestError("need at least two poses to resample")
    if not rate > 0:
        raise IngestError("resampling rate must be positive")
    t, pos, quat = pose_arrays(poses)
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise IngestError("pose timestamps must be strictly increasing")
    nominal = float(np.median(dt))
    if rate < 1.0 / nominal:
        warnings.warn(f"resampling rate {rate} Hz is below the pose rate {1 / nominal:.3g} Hz",
                      IngestWarning, stacklevel=2)
    big = np.abs(dt - nominal) > FRAME_JITTER * nominal
    if np.any(big):
        warnings.warn(f"{int(big.sum())} pose intervals deviate from the nominal {nominal:.4g} s "
                      f"by more than {FRAME_JITTER:.0%} (largest gap {dt.max():.4g} s)",
                      IngestWarning, stacklevel=2)

    n = _grid_count(t[0], t[-1], rate)
    grid_t = t[0] + np.arange(n) / rate
    idx = np.clip(np.searchsorted(t, grid_t, side="right") - 1, 0, len(t) - 2)
    u = np.clip((grid_t - t[idx]) / dt[idx], 0.0, 1.0)
    position = pos[idx] + u[:, None] * (pos[idx + 1] - pos[idx])
    orientation = slerp(quat[idx], quat[idx + 1], u)
    return UniformSeries(float(t[0]), float(rate),
                         {"position": position, "orientation": orientation})


def covering_grid(t_first, t_last, rate, phase=0.0) -> UniformSeries:
    """Largest grid ``phase + k / rate`` that lies inside [t_first, t_last]."""
    k0 = math.ceil((t_first - phase) * rate - 1e-9)
    k1 = math.floor((t_last - phase) * rate + 1e-9)
    if k1 < k0:
        raise IngestError(f"interval [{t_first}, {t_last}] holds no grid point at {rate} Hz")
    return UniformSeries(phase + k0 / rate, float(rate), {}, n=k1 - k0 + 1)


def resample_imu(samples: Sequence[ImuSample], grid: UniformSeries) -> UniformSeries:
    """Linearly interpolate gyro and accelerometer readings onto ``grid``."""
    t, gyro, accel = imu_arrays(samples)
    gt = grid.times
    eps = 1e-9
    if gt[0] < t[0] - eps or gt[-1] > t[-1] + eps:
        lo = (gt[0], t[0]) if gt[0] < t[0] - eps else None
        hi = (t[-1], gt[-1]) if gt[-1] > t[-1] + eps else None
        gaps = ", ".join(f"[{g[0]:.6g}, {g[1]:.6g}] s" for g in (lo, hi) if g is not None)
        raise IngestError(f"grid extends beyond IMU coverage [{t[0]:.6g}, {t[-1]:.6g}] s; "
                          f"uncovered: {gaps}")
    gt = np.clip(gt, t[0], t[-1])
    g = np.column_stack([np.interp(gt, t, gyro[:, i]) for i in range(3)])
    a = np.column_stack([np.interp(gt, t, accel[:, i]) for i in range(3)])
    return UniformSeries(grid.t0, grid.rate, {"gyro": g, "accel": a}, n=grid.n)


def nominal_rate(times) -> float:
    return 1.0 / float(np.median(np.diff(times)))
