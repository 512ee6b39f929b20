"""Temporal and spatial alignment of gyroscope and visual angular rates.

The model is ``w_vis(t) = R_S w_imu(t + t_d) + b``. For a fixed ``t_d`` the
rotation and bias have a closed-form least-squares solution (Arun et al.),
so the offset is found with a golden-section search whose objective is the
residual of that closed-form fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import AlignmentError, AlignmentWarning

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...
DEGENERATE_RATIO = 1e-12
MIN_OVERLAP = 5.0  # seconds


class RotationFit(NamedTuple):
    R: np.ndarray
    b: np.ndarray
    rms: float
    degenerate: bool


@dataclass
class AlignmentResult:
    R_S: np.ndarray
    b_gyro: np.ndarray
    t_d: float
    rms_residual: float
    iterations: int
    t_d_coarse: float = 0.0
    degenerate: bool = False
    at_boundary: bool = False
    n_samples: int = 0

    def to_dict(self):
        return {
            "R_S": self.R_S.tolist(),
            "b_gyro": self.b_gyro.tolist(),
            "t_d": self.t_d,
            "rms_residual": self.rms_residual,
            "iterations": self.iterations,
            "t_d_coarse": self.t_d_coarse,
            "degenerate": self.degenerate,
            "at_boundary": self.at_boundary,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["R_S"] = np.array(d["R_S"], dtype=float)
        d["b_gyro"] = np.array(d["b_gyro"], dtype=float)
        return cls(**d)


def fit_rotation_bias(omega_imu, omega_vis) -> RotationFit:
    """Closed-form minimiser of sum ||w_vis - (R w_imu + b)||^2 over R in SO(3), b.

    Returns the rotation, the bias (translation), the RMS residual norm and a
    flag that is set when the centred inputs are (nearly) collinear, in which
    case the rotation about that axis is unobservable.
    """
    P = np.asarray(omega_imu, dtype=float)
    Q = np.asarray(omega_vis, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise ValueError(f"expected two equal (N, 3) arrays, got {P.shape} and {Q.shape}")
    if len(P) < 3:
        raise ValueError("need at least 3 samples")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise ValueError("non-finite input")

    cp = P.mean(axis=0)
    cq = Q.mean(axis=0)
    H = (P - cp).T @ (Q - cq)
    U, S, Vt = np.linalg.svd(H)
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    if d == 0:
        d = 1.0
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    b = cq - R @ cp
    resid = Q - (P @ R.T + b)
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    degenerate = bool(S[0] == 0 or S[1] < DEGENERATE_RATIO * S[0])
    return RotationFit(R, b, rms, degenerate)


def coarse_offset(speed_vis, speed_imu, max_lag, rate, imu_start=0):
    """Integer-sample lag maximising normalised cross-correlation.

    ``speed_imu[j]`` is taken to sit at sample index ``imu_start + j`` of the
    visual series. The returned offset ``t_d`` (seconds) is such that
    ``speed_imu(t + t_d)`` best matches ``speed_vis(t)``.
    """
    v = np.asarray(speed_vis, dtype=float)
    u = np.asarray(speed_imu, dtype=float)
    if np.var(v) < 1e-12 or np.var(u) < 1e-12:
        raise AlignmentError("angular speed is flat; cannot align camera and IMU",
                             hint="record with more rotational motion")
    # overlap without any lag, in samples
    overlap = min(len(v), imu_start + len(u)) - max(0, imu_start)
    if max_lag * rate >= overlap / 2:
        raise ValueError(f"max_lag {max_lag} s must be below half the overlap "
                         f"({overlap / rate / 2:.3g} s)")
    M = int(round(max_lag * rate))
    min_pairs = max(3, len(v) // 4)
    best_m, best_c = None, -np.inf
    for m in range(-M, M + 1):
        k0 = max(0, imu_start - m)
        k1 = min(len(v), imu_start - m + len(u))
        if k1 - k0 < min_pairs:
            continue
        a = v[k0:k1]
        b = u[k0 + m - imu_start:k1 + m - imu_start]
        a = a - a.mean()
        b = b - b.mean()
        den = math.sqrt(float(a @ a) * float(b @ b))
        if den == 0:
            continue
        c = float(a @ b) / den
        if c > best_c:
            best_m, best_c = m, c
    if best_m is None:
        raise AlignmentError("no lag with sufficient overlap for cross-correlation")
    return best_m / rate


def golden_section(f, lo, hi, tol=1e-4):
    """Minimise a unimodal ``f`` on [lo, hi]; returns (x, fx, iterations)."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol:
        it += 1
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x), it


def lowpass(series, rate, cutoff, order=4):
    """Zero-phase Butterworth low-pass along axis 0 (no time shift)."""
    x = np.asarray(series, dtype=float)
    if not 0 < cutoff < rate / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, {rate / 2}) Hz")
    sos = butter(order, cutoff, fs=rate, output="sos")
    return sosfiltfilt(sos, x, axis=0)


def _speed_on_phase_grid(omega_imu, imu_t0, rate):
    speed = np.linalg.norm(omega_imu, axis=1)
    start = imu_t0 * rate
    if abs(start - round(start)) < 1e-6:
        return speed, int(round(start))
    j0 = math.ceil(start)
    j1 = math.floor(start + len(speed) - 1)
    ti = imu_t0 + np.arange(len(speed)) / rate
    return np.interp(np.arange(j0, j1 + 1) / rate, ti, speed), j0


def align(omega_imu, omega_vis, rate, search_halfwidth=0.5, *, imu_t0=0.0,
          initial_offset=None, max_lag=2.0, tol=1e-4, cutoff=None) -> AlignmentResult:
    """Estimate (R_S, b_gyro, t_d) from gyroscope and visual angular rates.

    ``omega_vis[k]`` is sampled at ``k / rate``; ``omega_imu[j]`` at
    ``imu_t0 + j / rate`` on the same clock. Without ``initial_offset`` the
    search window is centred on the cross-correlation lag of the angular
    speeds, which does not depend on the unknown rotation.

    ``cutoff`` (Hz) low-passes both rate signals first. Linear interpolation
    of white gyro noise at a fractional shift averages neighbouring samples
    and lowers the residual there, which pulls the offset toward half-sample
    positions; band-limiting the noise removes that pull.
    """
    w_vis = np.asarray(omega_vis, dtype=float)
    w_imu = np.asarray(omega_imu, dtype=float)
    if cutoff is not None:
        w_vis = lowpass(w_vis, rate, cutoff)
        w_imu = lowpass(w_imu, rate, cutoff)
    tv = np.arange(len(w_vis)) / rate
    ti = imu_t0 + np.arange(len(w_imu)) / rate

    overlap = min(tv[-1], ti[-1]) - max(tv[0], ti[0])
    if overlap < MIN_OVERLAP:
        warnings.warn(f"camera/IMU overlap is only {overlap:.2f} s; alignment may be unreliable",
                      AlignmentWarning, stacklevel=2)

    if initial_offset is None:
        speed_imu, imu_start = _speed_on_phase_grid(w_imu, imu_t0, rate)
        lag_cap = 0.45 * max(overlap, 0.0)
        initial_offset = coarse_offset(np.linalg.norm(w_vis, axis=1), speed_imu,
                                       min(max_lag, lag_cap), rate, imu_start)
    lo = initial_offset - search_halfwidth
    hi = initial_offset + search_halfwidth

    keep = (tv + lo >= ti[0]) & (tv + hi <= ti[-1])
    keep[0] = keep[-1] = False  # one-sided differences at the ends
    if keep.sum() < 3:
        raise AlignmentError("search window leaves no overlapping samples",
                             hint="reduce the search half-width or record longer")
    tq = tv[keep]
    target = w_vis[keep]

    def shifted(td):
        return np.column_stack([np.interp(tq + td, ti, w_imu[:, i]) for i in range(3)])

    def objective(td):
        return fit_rotation_bias(shifted(td), target).rms

    t_d, f_best, iterations = golden_section(objective, lo, hi, tol)
    at_boundary = False
    f_lo, f_hi = objective(lo), objective(hi)
    if min(f_lo, f_hi) < f_best:
        t_d, f_best = (lo, f_lo) if f_lo <= f_hi else (hi, f_hi)
        at_boundary = True
    elif min(t_d - lo, hi - t_d) <= tol:
        at_boundary = True
    if at_boundary:
        warnings.warn(f"time offset {t_d:.4f} s lies on the search boundary "
                      f"[{lo:.4f}, {hi:.4f}] s", AlignmentWarning, stacklevel=2)

    fit = fit_rotation_bias(shifted(t_d), target)
    if fit.degenerate:
        warnings.warn("angular velocities are nearly collinear; rotation is poorly constrained",
                      AlignmentWarning, stacklevel=2)
    return AlignmentResult(R_S=fit.R, b_gyro=fit.b, t_d=float(t_d), rms_residual=fit.rms,
                           iterations=iterations, t_d_coarse=float(initial_offset),
                           degenerate=fit.degenerate, at_boundary=at_boundary,
                           n_samples=int(keep.sum()))
