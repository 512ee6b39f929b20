"""Scale, accelerometer bias and gravity estimation.

Measurement model, with every vector in the camera frame::

    a_imu[k] = s * a_vis[k] + b + R[k] @ g_W

``a_vis`` is the smoothed visual acceleration (SfM units), ``R[k]`` the
world-to-camera rotation and ``g_W`` the gravity reaction vector a resting
accelerometer reports. The time-domain solver drops the norm constraint on
``g_W`` and solves a linear least-squares problem; its solution seeds the
frequency-domain solver, which matches amplitude spectra below ``f_max``
with ``||g_W||`` held fixed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ScaleError, ScaleWarning

G_NORM = 9.81
F_MAX = 1.2
MODES = ("scale", "scale+bias", "scale+bias+gravity")
PARAM_NAMES = ("s", "b_x", "b_y", "b_z", "g_x", "g_y", "g_z")
RANK_TOL = 1e-10
SIMPLEX_TOL = 1e-8


@dataclass
class ScaleSolution:
    s: float
    b_acc: np.ndarray
    g_W: np.ndarray
    objective_time: float = float("nan")
    objective_freq: float = float("nan")
    f_max: float = float("nan")
    converged: bool = False
    mode: str = "scale+bias+gravity"
    rank_deficient: bool = False
    null_space: np.ndarray | None = None
    status: str = "ok"

    def to_dict(self):
        return {
            "s": self.s,
            "b_acc": np.asarray(self.b_acc).tolist(),
            "g_W": np.asarray(self.g_W).tolist(),
            "objective_time": self.objective_time,
            "objective_freq": self.objective_freq,
            "f_max": self.f_max,
            "converged": self.converged,
            "mode": self.mode,
            "rank_deficient": self.rank_deficient,
            "null_space": None if self.null_space is None else np.asarray(self.null_space).tolist(),
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["b_acc"] = np.array(d["b_acc"], dtype=float)
        d["g_W"] = np.array(d["g_W"], dtype=float)
        if d.get("null_space") is not None:
            d["null_space"] = np.array(d["null_space"], dtype=float)
        return cls(**d)


def _describe_null(v, names):
    v = v / np.max(np.abs(v))
    terms = [f"{c:+.2f}*{n}" for c, n in zip(v, names) if abs(c) > 0.05]
    return " ".join(terms)


def estimate_time_domain(a_vis_C, a_imu_C, rotations=None, mode="scale+bias+gravity") -> ScaleSolution:
    """Closed-form least squares for (s, b, g) stacked over all 3N equations."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    av = np.asarray(a_vis_C, dtype=float)
    ai = np.asarray(a_imu_C, dtype=float)
    if av.shape != ai.shape or av.ndim != 2 or av.shape[1] != 3:
        raise ValueError(f"expected equal (N, 3) arrays, got {av.shape} and {ai.shape}")
    n = len(av)
    n_par = {"scale": 1, "scale+bias": 4, "scale+bias+gravity": 7}[mode]
    if n < 7:
        raise ValueError(f"need at least 7 samples, got {n}")

    A = np.zeros((n, 3, n_par))
    A[:, :, 0] = av
    if n_par >= 4:
        A[:, :, 1:4] = np.eye(3)
    if n_par == 7:
        if rotations is None:
            raise ValueError("gravity mode needs rotations")
        R = np.asarray(rotations, dtype=float)
        if R.shape != (n, 3, 3):
            raise ValueError("rotations must be (N, 3, 3)")
        A[:, :, 4:7] = R
    A = A.reshape(3 * n, n_par)
    y = ai.reshape(3 * n)

    col = np.linalg.norm(A, axis=0)
    rank_deficient = bool(np.any(col == 0))
    null = None
    safe = np.where(col == 0, 1.0, col)
    sv, Vt = np.linalg.svd(A / safe, full_matrices=False)[1:]
    if rank_deficient or sv[-1] < RANK_TOL * sv[0]:
        rank_deficient = True
        null = Vt[-1] / safe
        null = null / np.linalg.norm(null)

    x = np.linalg.lstsq(A, y, rcond=None)[0]
    resid = y - A @ x
    sol = ScaleSolution(
        s=float(x[0]),
        b_acc=x[1:4].copy() if n_par >= 4 else np.zeros(3),
        g_W=x[4:7].copy() if n_par == 7 else np.zeros(3),
        objective_time=float(resid @ resid),
        mode=mode,
        rank_deficient=rank_deficient,
        null_space=null,
        status="ok",
    )
    if rank_deficient:
        sol.status = "rank deficient: unobservable direction " + _describe_null(null, PARAM_NAMES[:n_par])
        warnings.warn(sol.status, ScaleWarning, stacklevel=2)
    return sol


@dataclass
class SpectrumSet:
    """One-sided DFTs of every signal that enters the amplitude objective.

    ``rot[f, i, j]`` is the transform of the sequence ``R[k][i, j]`` and
    ``ones`` the transform of the (windowed) constant 1, so the inertial
    spectrum for any (b, g) follows by linearity, see :meth:`imu_spectrum`.
    """

    vis: np.ndarray  # (nb, 3)
    imu: np.ndarray  # (nb, 3)
    ones: np.ndarray  # (nb,)
    rot: np.ndarray  # (nb, 3, 3)
    freqs: np.ndarray  # (nb,)
    n: int
    n_fft: int
    rate: float
    window: str = "rect"

    def imu_spectrum(self, b, g):
        b = np.asarray(b, dtype=float)
        g = np.asarray(g, dtype=float)
        return self.imu - self.ones[:, None] * b[None, :] - self.rot @ g


def next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def _window(kind, n):
    if kind == "rect":
        return np.ones(n)
    if kind == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {kind!r}")


def amplitude_spectra(a_vis_C, a_imu_C, rotations, rate, window="rect") -> SpectrumSet:
    av = np.asarray(a_vis_C, dtype=float)
    ai = np.asarray(a_imu_C, dtype=float)
    R = np.asarray(rotations, dtype=float)
    n = len(av)
    if n < 64:
        raise ValueError(f"need at least 64 samples for the spectra, got {n}")
    if ai.shape != av.shape or R.shape != (n, 3, 3):
        raise ValueError("input lengths differ")
    n_fft = next_pow2(n)
    w = _window(window, n)
    vis = np.fft.rfft(av * w[:, None], n_fft, axis=0)
    imu = np.fft.rfft(ai * w[:, None], n_fft, axis=0)
    ones = np.fft.rfft(w, n_fft)
    rot = np.fft.rfft(R * w[:, None, None], n_fft, axis=0)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / rate)
    return SpectrumSet(vis, imu, ones, rot, freqs, n, n_fft, float(rate), window)


def _basis(d):
    """Orthonormal basis with ``d`` as its first column."""
    d = d / np.linalg.norm(d)
    helper = np.eye(3)[int(np.argmin(np.abs(d)))]
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return np.column_stack([d, e1, e2])


def gravity_from_angles(theta, phi, basis, g_norm):
    """Point on the sphere of radius g_norm; (pi/2, 0) maps to basis[:, 0]."""
    u = np.array([math.sin(theta) * math.cos(phi),
                  math.sin(theta) * math.sin(phi),
                  math.cos(theta)])
    return g_norm * (basis @ u)


def frequency_objective(spectra: SpectrumSet, f_max, s, b, g):
    """Sum over bins f <= f_max of || s |A_vis(f)| - |A_imu(f; b, g)| ||^2."""
    sel = spectra.freqs <= f_max
    av = np.abs(spectra.vis[sel])
    ai = np.abs(spectra.imu_spectrum(b, g)[sel])
    return float(np.sum((s * av - ai) ** 2))


def _simplex_diameter(simplex):
    d = simplex[:, None, :] - simplex[None, :, :]
    return float(np.max(np.linalg.norm(d, axis=2)))


def estimate_frequency_domain(spectra: SpectrumSet, f_max=F_MAX, init: ScaleSolution | None = None,
                              g_norm=G_NORM) -> ScaleSolution:
    """Constrained amplitude-spectrum fit of (s, b, g) with ||g|| = g_norm.

    Gravity is parameterised by two angles on the sphere, which removes the
    equality constraint; the six free parameters are fitted with Nelder-Mead
    starting from ``init`` (normally the time-domain solution).
    """
    if init is None:
        raise ValueError("frequency-domain estimation needs an initial solution")
    nyquist = spectra.rate / 2.0
    if not 0 < f_max < nyquist:
        raise ScaleError(f"f_max={f_max} Hz must lie in (0, {nyquist}) Hz")
    sel = spectra.freqs <= f_max
    av = np.abs(spectra.vis[sel])
    imu = spectra.imu[sel]
    ones = spectra.ones[sel]
    rot = spectra.rot[sel]
    norm = float(np.sum(np.abs(imu) ** 2)) or 1.0

    s0 = float(init.s)
    if not s0 > 0:
        s0 = 1.0
    g0 = np.asarray(init.g_W, dtype=float)
    if not np.linalg.norm(g0) > 0:
        g0 = np.array([0.0, 0.0, 1.0])
    basis = _basis(g0)
    b0 = np.asarray(init.b_acc, dtype=float)

    def unpack(x):
        return x[0] * s0, x[1:4], gravity_from_angles(x[4], x[5], basis, g_norm)

    def cost(x):
        s, b, g = unpack(x)
        ai = np.abs(imu - ones[:, None] * b[None, :] - rot @ g)
        return float(np.sum((s * av - ai) ** 2)) / norm

    steps = np.array([0.1, 0.05, 0.05, 0.05, 0.05, 0.05])

    def run(x_start):
        simplex = np.vstack([x_start, x_start + np.diag(steps)])
        return minimize(cost, x_start, method="Nelder-Mead",
                        options={"initial_simplex": simplex, "xatol": 1e-10, "fatol": 1e-16,
                                 "maxiter": 20000, "maxfev": 40000})

    x0 = np.concatenate([[1.0], b0, [math.pi / 2.0, 0.0]])
    res = run(x0)
    if abs(res.x[0] - 1.0) > 0.2:
        res2 = run(res.x)
        if res2.fun <= res.fun:
            res = res2

    s, b, g = unpack(res.x)
    diameter = _simplex_diameter(res.final_simplex[0])
    if not s > 0:
        warnings.warn(f"frequency-domain fit drove the scale to {s:.4g}; keeping the initial solution",
                      ScaleWarning, stacklevel=2)
        out = ScaleSolution(**{**init.__dict__})
        out.converged = False
        out.f_max = float(f_max)
        out.status = "rejected: non-positive scale"
        return out
    converged = diameter < SIMPLEX_TOL
    if not converged:
        warnings.warn(f"simplex did not shrink below {SIMPLEX_TOL} (diameter {diameter:.3g})",
                      ScaleWarning, stacklevel=2)
    return ScaleSolution(s=float(s), b_acc=np.asarray(b, dtype=float).copy(), g_W=g,
                         objective_time=init.objective_time, objective_freq=float(res.fun * norm),
                         f_max=float(f_max), converged=converged, mode=init.mode,
                         status="ok" if converged else "not converged")
