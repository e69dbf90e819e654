"""Pure NumPy implementations of the hot recursions.

This is the fallback backend (and the readable reference for the compiled
core in ``_core.pyx``).  Function signatures and semantics are identical
across backends; tests assert numerical agreement.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_H_FLOOR = 1e-300


def garch_path(r: np.ndarray, omega: float, alpha: float, gamma: float,
               beta: float, h1: float) -> np.ndarray:
    """Conditional variance recursion h_t = w + (a + g*1[r<0]) r^2 + b h."""
    r = np.asarray(r, dtype=float)
    n = r.size
    h = np.empty(n)
    h[0] = max(h1, _H_FLOOR)
    for t in range(1, n):
        arch = (alpha + (gamma if r[t - 1] < 0 else 0.0)) * r[t - 1] ** 2
        h[t] = max(omega + arch + beta * h[t - 1], _H_FLOOR)
    return h


def garch_nll(r: np.ndarray, omega: float, alpha: float, gamma: float,
              beta: float, h1: float) -> float:
    """Gaussian negative log-likelihood under the variance recursion."""
    r = np.asarray(r, dtype=float)
    h = garch_path(r, omega, alpha, gamma, beta, h1)
    return float(0.5 * np.sum(np.log(2 * math.pi) + np.log(h) + r * r / h))


def qvar_filter(Y: np.ndarray, Z: np.ndarray, tau: float, kappa: float,
                B0: np.ndarray, P0: np.ndarray, Sigma0: np.ndarray,
                weight_eps: float, fixed_weights: np.ndarray | None = None):
    """Forgetting-factor recursive estimator under check-loss observation weights.

    Per equation i the coefficient state b_i follows recursive weighted least
    squares: the state covariance is inflated by 1/kappa each step and the
    observation receives noise variance 1/w_t, where w_t is the iteratively
    reweighted least squares weight of the check loss at the one-step
    prediction residual.  The innovation covariance is the exponentially
    weighted outer product of the prediction residual vector (decay kappa).

    Parameters
    ----------
    Y : (T, N) responses; Z : (T, k) shared regressor rows.
    B0 : (N, k) initial coefficients; P0 : (N, k, k) initial state covariances.
    Sigma0 : (N, N) initial innovation covariance.
    weight_eps : smoothing floor for |residual| inside the weights.
    fixed_weights : optional (T, N) observation weights; when given they are
        used as-is (refinement sweeps pass weights computed from an earlier
        pass) instead of weights at the one-step prediction residual.

    Returns
    -------
    B_path : (T, N, k) post-update coefficients per step.
    Sigma_path : (T, N, N) innovation covariance per step.
    P : (N, k, k) final state covariances.
    resid : (T, N) one-step prediction residuals.
    """
    Y = np.asarray(Y, float)
    Z = np.asarray(Z, float)
    T, N = Y.shape
    k = Z.shape[1]
    B = np.array(B0, float, copy=True)
    P = np.array(P0, float, copy=True)
    Sigma = np.array(Sigma0, float, copy=True)
    B_path = np.empty((T, N, k))
    Sigma_path = np.empty((T, N, N))
    resid = np.empty((T, N))

    for t in range(T):
        z = Z[t]
        P /= kappa
        e = Y[t] - B @ z
        resid[t] = e
        if fixed_weights is None:
            w = 0.5 / (np.abs(e) + weight_eps)
        else:
            w = fixed_weights[t]
        # the check-loss majorizer is a weighted quadratic plus a linear
        # tilt, absorbed here as a response shift of (tau - 1/2) / w
        e_eff = e + (tau - 0.5) / w
        Pz = np.einsum("nij,j->ni", P, z)
        s = 1.0 / w + Pz @ z
        g = Pz / s[:, None]
        B += g * e_eff[:, None]
        P -= g[:, :, None] * Pz[:, None, :]
        P = 0.5 * (P + np.transpose(P, (0, 2, 1)))
        Sigma = kappa * Sigma + (1.0 - kappa) * np.outer(e, e)
        B_path[t] = B
        Sigma_path[t] = Sigma
    return B_path, Sigma_path, P, resid


def gfevd_single(A: np.ndarray, Sigma: np.ndarray, horizon: int) -> np.ndarray:
    """Row-normalized generalized FEVD shares for one coefficient matrix.

    ``A`` is the (N, N*p) stacked lag-coefficient block (no intercept).
    """
    A = np.asarray(A, float)
    Sigma = np.asarray(Sigma, float)
    N = A.shape[0]
    p = A.shape[1] // N
    d = np.diag(Sigma)
    if np.any(d <= 0):
        raise ValueError("innovation covariance needs a strictly positive diagonal")
    comp = np.zeros((N * p, N * p))
    comp[:N, :] = A
    if p > 1:
        comp[N:, :-N] = np.eye(N * (p - 1))
    power = np.eye(N * p)
    num = np.zeros((N, N))
    den = np.zeros(N)
    for _ in range(horizon):
        Ah = power[:N, :N]
        AS = Ah @ Sigma
        num += AS * AS
        den += np.einsum("ij,ij->i", AS, Ah)
        power = comp @ power
    theta = num / d[None, :] / den[:, None]
    return theta / theta.sum(axis=1, keepdims=True)


def gfevd_path(A_path: np.ndarray, Sigma_path: np.ndarray,
               horizon: int) -> np.ndarray:
    """Apply :func:`gfevd_single` along a fitted (T, N, N*p) coefficient path."""
    T, N = A_path.shape[0], A_path.shape[1]
    out = np.empty((T, N, N))
    for t in range(T):
        out[t] = gfevd_single(A_path[t], Sigma_path[t], horizon)
    return out
