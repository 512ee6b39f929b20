"""Kalman filter and Rauch-Tung-Striebel smoother for camera positions.

Each axis follows a white-noise-jerk model with state (position, velocity,
acceleration). The process noise spectral density is picked from a
log-spaced grid by maximising the marginal likelihood obtained from the
prediction error decomposition; the smoothed acceleration state is the
visual acceleration used downstream.

The covariance recursion does not depend on the data, so it is shared by
all axes, and the grid search runs every grid value in one vectorised pass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SmoothingError, SmoothingWarning

DIFFUSE = 1e6
LOG_2PI = math.log(2.0 * math.pi)


def default_q_grid():
    return list(np.logspace(-4.0, 4.0, 17))


@dataclass
class SmootherConfig:
    q_grid: list = field(default_factory=default_q_grid)
    r: float | None = None  # measurement variance in input units^2; None -> estimated
    normalize: bool = True  # q_grid is in units of the normalised positions

    def __post_init__(self):
        q = np.asarray(self.q_grid, dtype=float)
        if q.ndim != 1 or len(q) == 0 or np.any(q <= 0) or np.any(np.diff(q) <= 0):
            raise ValueError("q_grid must be a nonempty, positive, ascending list")
        if self.r is not None and not self.r > 0:
            raise ValueError("r must be positive")


@dataclass
class ForwardPass:
    x_filt: np.ndarray  # (N, 3, m)
    P_filt: np.ndarray  # (N, 3, 3)
    x_pred: np.ndarray  # (N, 3, m)
    P_pred: np.ndarray  # (N, 3, 3)
    innovations: np.ndarray  # (N, m)
    S: np.ndarray  # (N,)
    loglik: np.ndarray  # (m,)
    F: np.ndarray
    Q: np.ndarray
    dt: float
    q: float
    r: float
    squeeze: bool = False


@dataclass
class StateTrajectory:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    covariance: np.ndarray  # (N, 3, 3), shared by all axes
    rate: float
    q: float = float("nan")
    r: float = float("nan")
    loglik: float = float("nan")
    q_grid: list = field(default_factory=list)
    loglik_curve: list = field(default_factory=list)

    def __len__(self):
        return len(self.position)


def process_model(dt, q):
    F = np.array([[1.0, dt, dt * dt / 2.0],
                  [0.0, 1.0, dt],
                  [0.0, 0.0, 1.0]])
    Q = q * np.array([[dt**5 / 20.0, dt**4 / 8.0, dt**3 / 6.0],
                      [dt**4 / 8.0, dt**3 / 3.0, dt**2 / 2.0],
                      [dt**3 / 6.0, dt**2 / 2.0, dt]])
    return F, Q


def _as_channels(measurements):
    z = np.asarray(measurements, dtype=float)
    squeeze = z.ndim == 1
    if squeeze:
        z = z[:, None]
    if z.ndim != 2:
        raise ValueError("measurements must be 1-D or 2-D")
    if not np.all(np.isfinite(z)):
        raise SmoothingError("non-finite measurement")
    return z, squeeze


def _check(dt, r, n):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not r > 0:
        raise ValueError("r must be positive")
    if n < 2:
        raise ValueError("need at least 2 measurements")


def _covariance_pass(F, Q, r, n, steady_tol=1e-15):
    """Predicted/filtered covariances and innovation variances for n steps.

    The recursion is data independent; once it stops changing the remaining
    steps are filled with the steady-state values.
    """
    P_p = np.empty((n, 3, 3))
    P_f = np.empty((n, 3, 3))
    S_all = np.empty(n)
    P = DIFFUSE * r * np.eye(3)
    for k in range(n):
        if k > 0:
            P = F @ P @ F.T + Q
            P = 0.5 * (P + P.T)
        S = P[0, 0] + r
        if not S > 0:
            raise SmoothingError(f"innovation variance {S!r} at step {k} is not positive",
                                 hint="check q and r for extreme values")
        K = P[:, 0] / S
        Pu = P - S * np.outer(K, K)
        Pu = 0.5 * (Pu + Pu.T)
        P_p[k], P_f[k], S_all[k] = P, Pu, S
        if k > 2 and np.max(np.abs(Pu - P_f[k - 1])) <= steady_tol * np.max(np.abs(Pu)) \
                and np.max(np.abs(P - P_p[k - 1])) <= steady_tol * np.max(np.abs(P)):
            P_p[k + 1:], P_f[k + 1:], S_all[k + 1:] = P, Pu, S
            break
        P = Pu
    return P_p, P_f, S_all


def kalman_forward(measurements, dt, q, r) -> ForwardPass:
    """Forward Kalman pass with full storage for the RTS backward pass.

    ``measurements`` may be ``(N,)`` or ``(N, m)``; columns are treated as
    independent channels sharing the model. The log marginal likelihood is
    returned per channel.
    """
    z, squeeze = _as_channels(measurements)
    n, m = z.shape
    _check(dt, r, n)
    if not q > 0:
        raise ValueError("q must be positive")
    F, Q = process_model(dt, q)
    P_p, P_f, S_all = _covariance_pass(F, Q, r, n)
    K_all = P_p[:, :, 0] / S_all[:, None]

    x_f = np.empty((n, 3, m))
    x_p = np.empty((n, 3, m))
    innov = np.empty((n, m))
    x = np.zeros((3, m))
    x[0] = z[0]
    for k in range(n):
        if k > 0:
            x = F @ x
        x_p[k] = x
        e = z[k] - x[0]
        x = x + K_all[k][:, None] * e
        x_f[k] = x
        innov[k] = e

    loglik = -0.5 * (n * LOG_2PI + np.sum(np.log(S_all)) + np.sum(innov**2 / S_all[:, None], axis=0))
    return ForwardPass(x_f, P_f, x_p, P_p, innov, S_all, loglik, F, Q, dt, q, r, squeeze)


def log_likelihood_grid(measurements, dt, q_grid, r, steady_tol=1e-13):
    """Log marginal likelihood for every q in ``q_grid``; shape ``(G, m)``.

    Equivalent to calling :func:`kalman_forward` per grid value, but all grid
    values run in one pass and the covariance recursion stops once it has
    reached its steady state.
    """
    z, _ = _as_channels(measurements)
    n, m = z.shape
    _check(dt, r, n)
    qs = np.asarray(q_grid, dtype=float)
    G = len(qs)
    F, Q1 = process_model(dt, 1.0)
    Q = qs[:, None, None] * Q1
    Ft = F.T

    x = np.zeros((G, 3, m))
    x[:, 0, :] = z[0]
    P = np.broadcast_to(DIFFUSE * r * np.eye(3), (G, 3, 3)).copy()
    logdet = np.zeros(G)
    quad = np.zeros((G, m))
    steady = False
    K = S = None
    for k in range(n):
        if k > 0:
            x = F @ x
            if not steady:
                P_new = F @ P @ Ft + Q
                P_new = 0.5 * (P_new + np.swapaxes(P_new, 1, 2))
        if not steady:
            Pp = P if k == 0 else P_new
            S = Pp[:, 0, 0] + r
            if np.any(S <= 0):
                raise SmoothingError(f"innovation variance not positive at step {k}")
            K = Pp[:, :, 0] / S[:, None]
            P_upd = Pp - S[:, None, None] * K[:, :, None] * K[:, None, :]
            P_upd = 0.5 * (P_upd + np.swapaxes(P_upd, 1, 2))
            if k > 1:
                change = np.max(np.abs(P_upd - P), axis=(1, 2)) / np.max(np.abs(P_upd), axis=(1, 2))
                steady = bool(np.all(change < steady_tol))
            P = P_upd
            log_S = np.log(S)
        e = z[k][None, :] - x[:, 0, :]
        x = x + K[:, :, None] * e[:, None, :]
        logdet += log_S
        quad += e**2 / S[:, None]
    return -0.5 * (n * LOG_2PI + logdet[:, None] + quad)


def rts_backward(fwd: ForwardPass) -> StateTrajectory:
    """RTS fixed-interval smoother over a stored forward pass."""
    n = len(fwd.P_filt)
    F = fwd.F
    P_p = fwd.P_pred.copy()
    P_p = 0.5 * (P_p + np.swapaxes(P_p, 1, 2))
    try:
        np.linalg.cholesky(P_p[1:])
    except np.linalg.LinAlgError:
        # only perturb when needed: the jitter itself costs ~1e-12 relative accuracy
        jitter = 1e-12 * np.trace(P_p, axis1=1, axis2=2)
        P_p = P_p + jitter[:, None, None] * np.eye(3)

    # gains C_k = P_f[k] F^T P_p[k+1]^{-1}, data independent
    FP = F @ fwd.P_filt[:-1]  # (n-1, 3, 3)
    try:
        C = np.swapaxes(np.linalg.solve(P_p[1:], FP), 1, 2)
    except np.linalg.LinAlgError as exc:
        raise SmoothingError("singular predicted covariance in RTS pass") from exc

    x_s = np.empty_like(fwd.x_filt)
    P_s = np.empty_like(fwd.P_filt)
    x_s[-1] = fwd.x_filt[-1]
    P_s[-1] = fwd.P_filt[-1]
    for k in range(n - 2, -1, -1):
        Ck = C[k]
        x_s[k] = fwd.x_filt[k] + Ck @ (x_s[k + 1] - fwd.x_pred[k + 1])
        Pk = fwd.P_filt[k] + Ck @ (P_s[k + 1] - fwd.P_pred[k + 1]) @ Ck.T
        P_s[k] = 0.5 * (Pk + Pk.T)

    pos, vel, acc = x_s[:, 0, :], x_s[:, 1, :], x_s[:, 2, :]
    ll = fwd.loglik
    if fwd.squeeze:
        pos, vel, acc = pos[:, 0], vel[:, 0], acc[:, 0]
        ll = ll[0]
    return StateTrajectory(pos, vel, acc, P_s, 1.0 / fwd.dt, q=fwd.q, r=fwd.r,
                           loglik=float(np.sum(ll)))


def estimate_measurement_noise(positions):
    """Pooled variance of p[k] - (p[k-1] + p[k+1]) / 2, times 2/3.

    For white noise of variance r this residual has variance 1.5 r.
    """
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    resid = p[1:-1] - 0.5 * (p[:-2] + p[2:])
    return float(np.mean(np.var(resid, axis=0)) * 2.0 / 3.0)


def select_process_noise(measurements, dt, config: SmootherConfig | None = None, r=None,
                         return_curve=False):
    """Grid value of q maximising the log marginal likelihood summed over axes.

    Ties go to the smaller q. A maximum on either end of the grid triggers a
    warning.
    """
    config = config or SmootherConfig()
    if r is None:
        r = config.r
    if r is None:
        r = estimate_measurement_noise(measurements)
    grid = np.asarray(config.q_grid, dtype=float)
    ll = log_likelihood_grid(measurements, dt, grid, r).sum(axis=1)
    if not np.all(np.isfinite(ll)):
        raise SmoothingError("non-finite log-likelihood on the q grid")
    best = int(np.argmax(ll))  # first occurrence -> smallest q on ties
    if best == 0 or best == len(grid) - 1:
        warnings.warn(f"selected process noise q={grid[best]:.3g} is on the grid boundary; "
                      f"consider widening the grid", SmoothingWarning, stacklevel=2)
    q = float(grid[best])
    if return_curve:
        return q, ll
    return q


def smooth_positions(positions, rate, config: SmootherConfig | None = None) -> StateTrajectory:
    """Select q by marginal likelihood, then run forward/backward per axis."""
    config = config or SmootherConfig()
    p = np.asarray(positions, dtype=float)
    if p.ndim != 2:
        raise ValueError("positions must be (N, d)")
    if len(p) < 10:
        raise SmoothingError(f"need at least 10 positions, got {len(p)}")
    dt = 1.0 / rate

    center = p.mean(axis=0)
    scale = 1.0
    if config.normalize:
        scale = float(np.sqrt(np.mean(np.var(p, axis=0))))
        if not scale > 0:
            scale = 1.0
    z = (p - center) / scale

    if config.r is not None:
        r = config.r / scale**2
    else:
        r = estimate_measurement_noise(z)
    r = max(r, 1e-12)

    q, ll = select_process_noise(z, dt, config, r=r, return_curve=True)
    traj = rts_backward(kalman_forward(z, dt, q, r))
    traj.position = traj.position * scale + center
    traj.velocity = traj.velocity * scale
    traj.acceleration = traj.acceleration * scale
    traj.covariance = traj.covariance * scale**2
    traj.r = r * scale**2
    traj.q_grid = [float(v) for v in config.q_grid]
    traj.loglik_curve = [float(v) for v in ll]
    return traj
