"""Nested conditional-variance benchmarks: GARCH(1,1) and GJR-GARCH.

Gaussian quasi-maximum likelihood with a variance-targeted start, bounded
quasi-Newton optimization, and the standard multi-step variance recursion
for forecasts.  Daily returns are the per-day sums of intraday log-returns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import _kernels

KINDS = ("GARCH11", "GJR")


class StationarityWarning(UserWarning):
    """Optimum hit the stationarity boundary and was projected onto it."""


@dataclass
class GarchFit:
    kind: str
    omega: float
    alpha: float
    beta: float
    gamma_asym: float
    loglik: float
    converged: bool
    projected: bool = False
    h1: float = 0.0

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta + 0.5 * self.gamma_asym

    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)

    def params_dict(self) -> dict:
        out = {"omega": self.omega, "alpha": self.alpha, "beta": self.beta}
        if self.kind == "GJR":
            out["gamma_asym"] = self.gamma_asym
        return out


def conditional_variance(returns: np.ndarray, omega: float, alpha: float,
                         beta: float, gamma_asym: float = 0.0,
                         h1: float | None = None) -> np.ndarray:
    """Filtered variance path h_t = w + (a + g*1[r<0]) r^2_{t-1} + b h_{t-1}."""
    r = np.asarray(returns, dtype=float)
    if h1 is None:
        h1 = float(np.var(r))
    return _kernels.garch_path(r, omega, alpha, gamma_asym, beta, h1)


_EDGE = 1e-7


def fit_garch(daily_returns: np.ndarray, kind: str = "GARCH11",
              min_obs: int = 250) -> GarchFit:
    """Quasi-maximum likelihood fit of a GARCH(1,1) or GJR-GARCH model.

    The recursion starts at the sample variance (variance targeting) and the
    optimizer works in (omega, alpha[, gamma], beta) with box bounds plus a
    smooth barrier keeping alpha + beta + gamma/2 below one; if the optimum
    sits on that boundary the parameters are projected onto it with a warning.
    Non-convergence returns the best iterate flagged ``converged=False``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}; got {kind!r}")
    r = np.asarray(daily_returns, dtype=float)
    if r.size < min_obs:
        raise ValueError(f"need at least {min_obs} observations; got {r.size}")
    if not np.all(np.isfinite(r)):
        raise ValueError("daily returns contain non-finite values")
    var = float(np.var(r))
    if var <= 0:
        raise ValueError("zero-variance return series")
    h1 = var
    asym = kind == "GJR"

    def unpack(x):
        if asym:
            omega, alpha, gamma, beta = x
        else:
            (omega, alpha, beta), gamma = x, 0.0
        return omega, alpha, gamma, beta

    def nll(x):
        omega, alpha, gamma, beta = unpack(x)
        pers = alpha + beta + 0.5 * gamma
        if pers >= 1.0 - _EDGE:
            # barrier dominating any attainable likelihood value
            return 1e12 * (1.0 + pers)
        return _kernels.garch_nll(r, omega, alpha, gamma, beta, h1)

    alpha0, beta0 = 0.05, 0.85
    gamma0 = 0.05 if asym else 0.0
    omega0 = var * (1 - alpha0 - beta0 - 0.5 * gamma0)
    x0 = [omega0, alpha0, gamma0, beta0] if asym else [omega0, alpha0, beta0]
    lo_omega = 1e-12 * max(var, 1e-12)
    bounds = [(lo_omega, 10 * var)] + [(0.0, 1.0 - _EDGE)] * (len(x0) - 1)
    res = minimize(nll, x0, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 1000, "ftol": 1e-12})
    omega, alpha, gamma, beta = unpack(res.x)

    projected = False
    pers = alpha + beta + 0.5 * gamma
    if pers >= 1.0 - _EDGE:
        scale = (1.0 - 2 * _EDGE) / pers
        alpha, beta, gamma = alpha * scale, beta * scale, gamma * scale
        projected = True
        warnings.warn("stationarity binding at the optimum; parameters "
                      "projected to the boundary", StationarityWarning)
    loglik = -_kernels.garch_nll(r, omega, alpha, gamma, beta, h1)
    return GarchFit(kind, float(omega), float(alpha), float(beta),
                    float(gamma), float(loglik), bool(res.success),
                    projected, h1)


def garch_forecast(fit: GarchFit, returns: np.ndarray, horizon: int,
                   ) -> np.ndarray:
    """h-step variance forecasts from the end of ``returns``.

    Step one applies the exact recursion to the last observed return and
    filtered variance; later steps use the mean recursion
    E[h_{t+j}] = omega + (alpha + gamma/2 + beta) E[h_{t+j-1}].
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    r = np.asarray(returns, dtype=float)
    h_path = conditional_variance(r, fit.omega, fit.alpha, fit.beta,
                                  fit.gamma_asym, fit.h1)
    last_r, last_h = r[-1], h_path[-1]
    out = np.empty(horizon)
    arch = (fit.alpha + (fit.gamma_asym if last_r < 0 else 0.0)) * last_r**2
    out[0] = fit.omega + arch + fit.beta * last_h
    for j in range(1, horizon):
        out[j] = fit.omega + fit.persistence * out[j - 1]
    return out


def log_variance_forecast(fit: GarchFit, returns: np.ndarray, horizon: int,
                          offset: float = 1e-8) -> float:
    """Mean of log(h + offset) over the forecast span, matching the direct
    multi-step log-RV target."""
    path = garch_forecast(fit, returns, horizon)
    return float(np.mean(np.log(path + offset)))
