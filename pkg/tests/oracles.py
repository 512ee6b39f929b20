"""Independent reference computations used by the tests.

None of these reuse package internals beyond the model matrices, which are
rebuilt here from their closed forms.
"""

import numpy as np
from scipy import linalg


def model_matrices(dt, q):
    F = np.array([[1.0, dt, dt * dt / 2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    Q = q * np.array([[dt**5 / 20, dt**4 / 8, dt**3 / 6],
                      [dt**4 / 8, dt**3 / 3, dt**2 / 2],
                      [dt**3 / 6, dt**2 / 2, dt]])
    return F, Q


def simulate_state_space(n, dt, q, r, rng, channels=3):
    """Exact draws from the white-jerk model with white position noise."""
    F, Q = model_matrices(dt, q)
    L = np.linalg.cholesky(Q)
    z = np.empty((n, channels))
    for c in range(channels):
        x = np.array([0.0, rng.standard_normal(), rng.standard_normal()])
        for k in range(n):
            if k > 0:
                x = F @ x + L @ rng.standard_normal(3)
            z[k, c] = x[0] + np.sqrt(r) * rng.standard_normal()
    return z


def batch_map(z, dt, q, r, diffuse=1e6):
    """Posterior mean of all states from one dense joint-Gaussian solve.

    Prior: x_0 ~ N((z_0, 0, 0), diffuse * r * I); x_{k+1} = F x_k + w_k with
    w_k ~ N(0, Q); z_k = x_k[0] + v_k with v_k ~ N(0, r). The MAP estimate is
    the solution of a whitened stacked least-squares problem, solved by QR
    (better conditioned than forming the normal equations).
    """
    z = np.asarray(z, dtype=float)
    n = len(z)
    F, Q = model_matrices(dt, q)
    Wq = linalg.solve_triangular(np.linalg.cholesky(Q), np.eye(3), lower=True)  # L^-1
    rows = 3 + 3 * (n - 1) + n
    A = np.zeros((rows, 3 * n))
    b = np.zeros(rows)
    s0 = 1.0 / np.sqrt(diffuse * r)
    A[:3, :3] = s0 * np.eye(3)
    b[:3] = s0 * np.array([z[0], 0.0, 0.0])
    for k in range(n - 1):
        i = 3 + 3 * k
        A[i:i + 3, 3 * k:3 * k + 3] = -Wq @ F
        A[i:i + 3, 3 * k + 3:3 * k + 6] = Wq
    sr = 1.0 / np.sqrt(r)
    for k in range(n):
        i = 3 + 3 * (n - 1) + k
        A[i, 3 * k] = sr
        b[i] = sr * z[k]
    x = linalg.lstsq(A, b)[0]
    return x.reshape(n, 3)


def dense_log_likelihood(z, dt, q, r, diffuse=1e6):
    """log N(z; mean, cov) of the measurements with the states integrated out."""
    z = np.asarray(z, dtype=float)
    n = len(z)
    F, Q = model_matrices(dt, q)
    # state covariance blocks by propagation
    P = [diffuse * r * np.eye(3)]
    for _ in range(1, n):
        P.append(F @ P[-1] @ F.T + Q)
    C = np.empty((n, n))
    for i in range(n):
        Fi = np.eye(3)
        for j in range(i, n):
            # cov(x_j, x_i) = F^{j-i} P_i
            C[j, i] = C[i, j] = (Fi @ P[i])[0, 0]
            Fi = F @ Fi
    C += r * np.eye(n)
    mean = np.full(n, z[0])
    d = z - mean
    sign, logdet = np.linalg.slogdet(C)
    return -0.5 * (n * np.log(2 * np.pi) + logdet + d @ np.linalg.solve(C, d))
