"""End-to-end scale estimation from parsed poses and IMU samples.

Stages: resample poses onto the IMU rate, differentiate orientations into
visual angular rates, align gyroscope and visual rates (R_S, t_d), smooth
the camera positions into visual accelerations and interpolate those onto
the grid, rotate both accelerations into the
camera frame, solve the time-domain closed form and refine it in the
frequency domain.
"""

from __future__ import annotations

import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import alignment, ingest, kinematics, scale, smoother
from .errors import (AlignmentError, IngestError, PipelineError, ScaleError,
                     SmoothingError)

_STAGE_ERRORS = {
    "ingest": IngestError,
    "alignment": AlignmentError,
    "smoothing": SmoothingError,
    "scale": ScaleError,
}


@dataclass
class EstimateOptions:
    rate: float | None = None  # common grid rate; None -> IMU rate
    f_max: float = scale.F_MAX
    g_norm: float = scale.G_NORM
    search_halfwidth: float = 0.5
    max_lag: float = 2.0
    align_cutoff: float | None = None  # Hz; None -> a quarter of the camera rate
    smoother: smoother.SmootherConfig = field(default_factory=smoother.SmootherConfig)
    smoothing: str = "rts"  # "rts" or "none" (plain second differences)
    window: str = "rect"
    skip_frequency: bool = False
    time_mode: str = "scale+bias+gravity"


@dataclass
class EstimateResult:
    solution: scale.ScaleSolution
    time_solution: scale.ScaleSolution
    alignment: alignment.AlignmentResult
    q: float
    r: float
    timings_ms: dict
    warnings: list
    rate: float
    clock_origin: float
    n_used: int
    diagnostics: dict = field(default_factory=dict, repr=False)


@contextmanager
def _stage(name, timings):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise _STAGE_ERRORS[name](str(exc)) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + 1e3 * (time.perf_counter() - t0)


def second_difference(positions, rate):
    """Raw visual acceleration by central second differences (no smoothing)."""
    p = np.asarray(positions, dtype=float)
    a = np.empty_like(p)
    a[1:-1] = (p[2:] - 2.0 * p[1:-1] + p[:-2]) * rate**2
    a[0] = a[1]
    a[-1] = a[-2]
    return a


def crop_imu(imu, t_first, t_last, margin):
    out = [s for s in imu if t_first - margin <= s.t <= t_last + margin]
    if len(out) < 2:
        raise IngestError("IMU stream does not overlap the camera trajectory")
    return out


def _capture(fn, *args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = fn(*args)
    messages = []
    for w in caught:
        messages.append(f"{w.category.__name__}: {w.message}")
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return out, messages


def estimate(poses, imu, options: EstimateOptions | None = None) -> EstimateResult:
    """Run the full pipeline; every failure is raised tagged with its stage."""
    options = options or EstimateOptions()
    timings = {}
    result, messages = _capture(_run, poses, imu, options, timings)
    result.warnings = messages
    return result


def align_streams(poses, imu, options: EstimateOptions | None = None):
    """Ingest and alignment stages only; returns (AlignmentResult, timings_ms, warnings)."""
    options = options or EstimateOptions()
    timings = {}

    def run():
        return _align(_prepare(poses, imu, options, timings), options, timings)

    (al, _), messages = _capture(run)
    return al, timings, messages


def _prepare(poses, imu, options, timings):
    with _stage("ingest", timings):
        if len(poses) < 2 or len(imu) < 2:
            raise IngestError("need at least two poses and two IMU samples")
        origin = poses[0].t
        poses, imu = ingest.shift_clock(poses, imu, origin)
        margin = options.max_lag + options.search_halfwidth + 0.1
        imu = crop_imu(imu, poses[0].t, poses[-1].t, margin)
        t_imu, gyro, acc = ingest.imu_arrays(imu)
        rate = options.rate or float(np.round(ingest.nominal_rate(t_imu), 6))
        grid = ingest.resample_poses(poses, rate)
        imu_grid = ingest.covering_grid(t_imu[0], t_imu[-1], rate, phase=grid.t0)
        imu_u = ingest.resample_imu(imu, imu_grid)
    return dict(origin=origin, poses=poses, t_imu=t_imu, acc=acc, rate=rate, grid=grid,
                imu_grid=imu_grid, imu_u=imu_u)


def _align(prep, options, timings):
    grid, imu_grid, rate = prep["grid"], prep["imu_grid"], prep["rate"]
    with _stage("alignment", timings):
        R = kinematics.quat_to_matrix(grid["orientation"])
        w_vis = kinematics.camera_body_rate(R, rate)
        cutoff = options.align_cutoff
        if cutoff is None:
            cutoff = min(0.25 * ingest.nominal_rate([p.t for p in prep["poses"]]), 0.4 * rate)
        al = alignment.align(prep["imu_u"]["gyro"], w_vis, rate, options.search_halfwidth,
                             imu_t0=imu_grid.t0 - grid.t0, max_lag=options.max_lag,
                             cutoff=cutoff)
        if al.degenerate:
            raise AlignmentError("camera/IMU rotation is unobservable from the recorded motion",
                                 hint="rotate the device about more than one axis")
    prep.update(R=R, omega_vis=w_vis)
    return al, prep


def _run(poses, imu, options, timings):
    diag = {}
    al, prep = _align(_prepare(poses, imu, options, timings), options, timings)
    origin, grid, rate, R = prep["origin"], prep["grid"], prep["rate"], prep["R"]
    t_imu, acc = prep["t_imu"], prep["acc"]

    with _stage("smoothing", timings):
        # Smooth the camera positions at their own rate: on the upsampled grid
        # the noise is piecewise linear and no longer white.
        t_cam, p_cam, _ = ingest.pose_arrays(prep["poses"])
        cam_rate = ingest.nominal_rate(t_cam)
        if options.smoothing == "rts":
            traj = smoother.smooth_positions(p_cam, cam_rate, options.smoother)
            a_cam, q, r = traj.acceleration, traj.q, traj.r
        elif options.smoothing == "none":
            a_cam, q, r = second_difference(p_cam, cam_rate), float("nan"), float("nan")
        else:
            raise ValueError(f"unknown smoothing {options.smoothing!r}")
        # linear interpolation would attenuate the signal by ~0.2% at 30 Hz
        a_W = CubicSpline(t_cam, a_cam, axis=0)(grid.times)

    with _stage("scale", timings):
        tq = grid.times + al.t_d
        valid = (tq >= t_imu[0]) & (tq <= t_imu[-1])
        idx = np.flatnonzero(valid)
        if len(idx) < 64:
            raise ScaleError(f"only {len(idx)} grid samples overlap the aligned IMU stream")
        acc_s = np.column_stack([np.interp(tq[idx], t_imu, acc[:, i]) for i in range(3)])
        a_imu_C = kinematics.rotate_sensor_to_camera(al.R_S, acc_s)
        Rv = R[idx]
        a_vis_C = kinematics.rotate_world_to_camera(Rv, a_W[idx])
        td = scale.estimate_time_domain(a_vis_C, a_imu_C, Rv, options.time_mode)
        if td.rank_deficient:
            raise ScaleError(f"time-domain system is {td.status}",
                             hint="the device must move and rotate during the recording")
        if not td.s > 0:
            raise ScaleError(f"time-domain scale is non-positive ({td.s:.4g})",
                             hint="check the camera/IMU alignment")
        sol = td
        if not options.skip_frequency:
            spectra = scale.amplitude_spectra(a_vis_C, a_imu_C, Rv, rate, options.window)
            sol = scale.estimate_frequency_domain(spectra, options.f_max, td, options.g_norm)
            diag["spectra"] = spectra

    diag.update(grid=grid, rotations=Rv, a_vis_C=a_vis_C, a_imu_C=a_imu_C, a_vis_W=a_W,
                omega_vis=prep["omega_vis"], indices=idx)
    return EstimateResult(solution=sol, time_solution=td, alignment=al, q=q, r=r,
                          timings_ms=timings, warnings=[], rate=rate, clock_origin=origin,
                          n_used=len(idx), diagnostics=diag)
