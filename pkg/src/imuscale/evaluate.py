"""Evaluation helpers: rigid point-set fits and scale error versus distance."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import ingest, pipeline, smoother
from .alignment import fit_rotation_bias
from .errors import EvaluationError, EvaluationWarning


@dataclass
class FitResult:
    R: np.ndarray
    t: np.ndarray
    rmse: float
    degenerate: bool = False
    scale: float = 1.0


@dataclass
class ConvergencePoint:
    distance_traveled: float  # metres, truth scale
    scale_error_percent: float
    t_end: float = float("nan")  # prefix end time on the pose clock
    s: float = float("nan")


def _point_arrays(source, target):
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 3:
        raise EvaluationError(f"point sets must be equal (N, 3) arrays, got {src.shape} and {tgt.shape}")
    if len(src) < 3:
        raise EvaluationError("need at least 3 point pairs")
    return src, tgt


def rigid_fit(source, target) -> FitResult:
    """Least-squares rotation and translation taking ``source`` onto ``target``."""
    src, tgt = _point_arrays(source, target)
    fit = fit_rotation_bias(src, tgt)
    resid = src @ fit.R.T + fit.b - tgt
    rmse = math.sqrt(float(np.mean(np.sum(resid**2, axis=1))))
    if fit.degenerate:
        warnings.warn("point configuration is collinear; rotation about the line is arbitrary",
                      EvaluationWarning, stacklevel=2)
    return FitResult(R=fit.R, t=fit.b, rmse=rmse, degenerate=fit.degenerate)


def similarity_fit(source, target) -> FitResult:
    """Rotation, translation and isotropic scale (Umeyama) from source to target.

    Used to obtain a reference scale from ground control points whose
    metric coordinates are known.
    """
    src, tgt = _point_arrays(source, target)
    fit = fit_rotation_bias(src, tgt)
    cs = src - src.mean(axis=0)
    ct = tgt - tgt.mean(axis=0)
    var = float(np.sum(cs**2))
    if var == 0:
        raise EvaluationError("source points coincide; scale is undefined")
    c = float(np.sum((cs @ fit.R.T) * ct)) / var
    t = tgt.mean(axis=0) - c * fit.R @ src.mean(axis=0)
    resid = c * src @ fit.R.T + t - tgt
    rmse = math.sqrt(float(np.mean(np.sum(resid**2, axis=1))))
    return FitResult(R=fit.R, t=t, rmse=rmse, degenerate=fit.degenerate, scale=c)


def cumulative_path(positions):
    """Arc length along a polyline, starting at 0."""
    p = np.asarray(positions, dtype=float)
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def distance_profile(poses, truth_scale, config: smoother.SmootherConfig | None = None):
    """(times, metres travelled) measured on smoothed positions times the true scale."""
    t, pos, _ = ingest.pose_arrays(poses)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = smoother.smooth_positions(pos, ingest.nominal_rate(t), config)
    return t, truth_scale * cumulative_path(traj.position)


def convergence_curve(poses, imu, checkpoints, truth_scale, options: pipeline.EstimateOptions | None = None):
    """Scale error of the full pipeline rerun on growing prefixes of the recording.

    Each checkpoint (metres) cuts the poses at the first time the travelled
    distance reaches it; the IMU stream is cut with the same margin the
    pipeline itself keeps. Checkpoints that are not positive or lie beyond
    the recording are skipped with a warning.
    """
    if not truth_scale > 0:
        raise EvaluationError("truth scale must be positive")
    cps = [float(c) for c in checkpoints]
    if any(b < a for a, b in zip(cps, cps[1:])):
        raise EvaluationError("checkpoints must be ascending")
    options = options or pipeline.EstimateOptions()
    t, dist = distance_profile(poses, truth_scale, options.smoother)
    margin = options.max_lag + options.search_halfwidth + 0.1
    curve = []
    for d in cps:
        if d <= 0:
            warnings.warn(f"checkpoint {d} m is not positive; skipped", EvaluationWarning, stacklevel=2)
            continue
        if d > dist[-1]:
            warnings.warn(f"checkpoint {d} m exceeds the travelled distance {dist[-1]:.2f} m; skipped",
                          EvaluationWarning, stacklevel=2)
            continue
        k = int(np.searchsorted(dist, d - 1e-12))
        t_end = t[k]
        prefix = [p for p in poses if p.t <= t_end]
        imu_prefix = [s for s in imu if s.t <= t_end + margin]
        res = pipeline.estimate(prefix, imu_prefix, options)
        err = abs(res.solution.s - truth_scale) / truth_scale * 100.0
        curve.append(ConvergencePoint(float(d), float(err), float(t_end), float(res.solution.s)))
    return curve


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["distance_m", "error_percent"])
        for pt in curve:
            w.writerow([repr(pt.distance_traveled), repr(pt.scale_error_percent)])
