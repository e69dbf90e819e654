"""Quantile regression and time-varying quantile VAR estimation.

The per-equation building block is check-loss regression solved by a
majorize-minimize scheme (iteratively reweighted least squares on a smoothed
check loss).  The time-varying estimator runs a forgetting-factor recursion
whose observation weights are the same check-loss weights; a rolling-window
re-fit mode is available as an alternative.  Both emit one coefficient /
covariance snapshot per time step from the burn-in onward, feeding the
variance decompositions in :mod:`spillhar.spillover`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .panels import MeasurePanel

DEFAULT_QUANTILES = (0.05, 0.10, 0.50, 0.90, 0.95)


def check_loss(u, tau: float):
    """Check loss rho_tau(u) = u * (tau - 1[u < 0]); scalar in, scalar out."""
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1); got {tau}")
    u = np.asarray(u, dtype=float)
    val = u * (tau - (u < 0))
    return float(val) if val.ndim == 0 else val


@dataclass
class QuantileRegResult:
    coef: np.ndarray
    converged: bool
    n_iter: int
    loss: float


def fit_quantile_regression(X: np.ndarray, y: np.ndarray, tau: float,
                            eps_final: float = 1e-8, max_iter: int = 2000,
                            coef0: np.ndarray | None = None) -> QuantileRegResult:
    """Minimize the check loss by smoothed IRLS with a decreasing epsilon.

    Runs the majorize-minimize recursion over a geometric smoothing schedule,
    snapping to the interpolating vertex of the k smallest residuals whenever
    that lowers the exact check loss (the minimizer interpolates k points).
    Starts from the least-squares coefficients (or ``coef0``) and tracks the
    best iterate under the exact check loss, so the returned fit is never
    worse than the OLS start.  Non-convergence within ``max_iter`` returns
    the best iterate with ``converged=False``.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must be in (0, 1); got {tau}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    if n <= k:
        raise ValueError(f"need more rows than columns; got {n} rows, {k} columns")
    if np.linalg.matrix_rank(X) < k:
        raise ValueError("design matrix has collinear columns")

    if coef0 is None:
        coef0 = np.linalg.lstsq(X, y, rcond=None)[0]
    b = np.asarray(coef0, dtype=float).copy()
    u = y - X @ b
    best_loss = float(np.sum(check_loss(u, tau)))
    best = b.copy()
    scale = max(float(np.std(u)), 10 * eps_final)
    shift = (tau - 0.5) * X.sum(axis=0)

    def polish():
        nonlocal best, best_loss
        for _ in range(3):
            active = np.argsort(np.abs(y - X @ best))[:k]
            try:
                cand = np.linalg.solve(X[active], y[active])
            except np.linalg.LinAlgError:
                return
            loss = float(np.sum(check_loss(y - X @ cand, tau)))
            if loss < best_loss - 1e-15:
                best_loss, best = loss, cand
            else:
                return

    levels = [1e-2 * scale]
    while levels[-1] > eps_final:
        levels.append(max(levels[-1] / 10.0, eps_final))
    total = 0
    converged = False
    for eps in levels:
        inner_done = False
        for _ in range(150):
            if total >= max_iter:
                break
            w = 0.5 / (np.abs(u) + eps)
            Xw = X * w[:, None]
            G = Xw.T @ X
            G[np.diag_indices_from(G)] += 1e-10 * np.trace(G) / k
            b_new = np.linalg.solve(G, Xw.T @ y + shift)
            total += 1
            step = np.max(np.abs(b_new - b))
            b = b_new
            u = y - X @ b
            loss = float(np.sum(check_loss(u, tau)))
            if loss < best_loss:
                best_loss, best = loss, b.copy()
            if step < 1e-12 * (1.0 + np.max(np.abs(b))):
                inner_done = True
                break
        if eps <= 1e-4 * scale:
            polish()
        converged = inner_done and eps <= eps_final
    polish()
    return QuantileRegResult(best, converged, total, best_loss)


@dataclass
class QvarSpec:
    """Estimation settings for the time-varying quantile VAR."""

    lag_order: int = 1
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    horizon: int = 10
    tvp_mode: str = "forgetting_kalman"
    forgetting: float = 0.99
    window: int = 200
    log_offset: float = 1e-8
    weight_eps: float | None = None   # None -> scaled from the burn-in spread
    sweeps: int | None = None         # None -> 2, or iterate at forgetting=1

    def __post_init__(self):
        if self.lag_order < 1:
            raise ValueError("lag_order must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.quantiles = tuple(float(t) for t in self.quantiles)
        if any(not 0 < t < 1 for t in self.quantiles):
            raise ValueError(f"quantiles must lie strictly in (0, 1); "
                             f"got {self.quantiles}")
        if not 0 < self.forgetting <= 1:
            raise ValueError("forgetting factor must be in (0, 1]")
        if self.tvp_mode not in ("forgetting_kalman", "rolling_window"):
            raise ValueError(f"unknown tvp_mode {self.tvp_mode!r}")
        if self.window < 2:
            raise ValueError("rolling window must be >= 2")


@dataclass
class QuantilePath:
    """Fitted path for one quantile: intercept+lag coefficients and covariances."""

    coefs: np.ndarray    # (T_emit, N, 1 + N*p); column 0 is the intercept
    sigmas: np.ndarray   # (T_emit, N, N)

    @property
    def terminal_coefs(self) -> np.ndarray:
        return self.coefs[-1]

    def lag_matrices(self, t: int, p: int) -> list[np.ndarray]:
        """Coefficient matrices A_1..A_p at emitted step t (intercept dropped)."""
        n = self.coefs.shape[1]
        body = self.coefs[t, :, 1:]
        return [body[:, l * n:(l + 1) * n] for l in range(p)]


@dataclass
class QvarFit:
    assets: list[str]
    spec: QvarSpec
    days: list
    by_quantile: dict[float, QuantilePath] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.days)


def build_var_rows(values: np.ndarray, p: int):
    """Stack VAR(p) regression rows: Y[t] on [1, y_{t-1}, ..., y_{t-p}]."""
    values = np.asarray(values, dtype=float)
    T, N = values.shape
    if T <= p:
        raise ValueError(f"need more than {p} rows to build lag-{p} regressors")
    Y = values[p:]
    Z = np.ones((T - p, 1 + N * p))
    for l in range(1, p + 1):
        Z[:, 1 + (l - 1) * N:1 + l * N] = values[p - l:T - l]
    return Y, Z


def burn_in_length(n_assets: int, p: int) -> int:
    return max(50, 5 * n_assets * p)


def fit_tvp_qvar(panel, spec: QvarSpec, assets: list[str] | None = None,
                 days: list | None = None) -> QvarFit:
    """Estimate the time-varying quantile VAR on a log-measure panel.

    ``panel`` is either a :class:`MeasurePanel` (log-transformed internally
    with the spec's offset) or a (T, N) array already on the log scale.
    """
    if isinstance(panel, MeasurePanel):
        values = np.log(panel.values + spec.log_offset)
        assets = list(panel.assets)
        days = list(panel.days)
    else:
        values = np.asarray(panel, dtype=float)
        if assets is None:
            assets = [f"a{i}" for i in range(values.shape[1])]
        if days is None:
            days = list(range(values.shape[0]))
    if not np.all(np.isfinite(values)):
        raise ValueError("panel contains non-finite values after the log transform")

    T, N = values.shape
    p = spec.lag_order
    Y, Z = build_var_rows(values, p)
    rows = Y.shape[0]
    if spec.tvp_mode == "forgetting_kalman":
        burn = burn_in_length(N, p)
        min_rows = max(burn + 1, 50 + p)
        if rows < min_rows:
            raise ValueError(f"insufficient data: need at least "
                             f"{min_rows + p} days, got {T}")
        runner = _fit_forgetting
    else:
        # the first window fills after window-1 burn-in steps
        burn = spec.window - 1
        if rows < burn + 1:
            raise ValueError(f"insufficient data: need at least "
                             f"{burn + 1 + p} days, got {T}")
        runner = _fit_rolling

    fit = QvarFit(assets, spec, list(days[p + burn:]))
    for tau in spec.quantiles:
        fit.by_quantile[tau] = runner(Y, Z, tau, spec, burn)
    return fit


def _sigma0_from_burn_in(Y: np.ndarray, burn: int) -> np.ndarray:
    resid = Y[:burn] - Y[:burn].mean(axis=0)
    sigma = resid.T @ resid / max(burn - 1, 1)
    d = np.diag(sigma).copy()
    floor = max(1e-12, 1e-10 * float(d.max()))
    np.fill_diagonal(sigma, np.maximum(d, floor))
    return sigma


def _check_weights(resid: np.ndarray, eps: float) -> np.ndarray:
    return 0.5 / (np.abs(resid) + eps)


def _fit_forgetting(Y, Z, tau, spec: QvarSpec, burn: int) -> QuantilePath:
    rows, N = Y.shape
    k = Z.shape[1]
    sigma0 = _sigma0_from_burn_in(Y, burn)
    spread = max(float(np.std(Y[:burn])), 1e-8)
    weight_eps = spec.weight_eps
    if weight_eps is None:
        weight_eps = 1e-4 * spread

    kappa = spec.forgetting
    batch_mode = kappa == 1.0
    B = np.zeros((N, k))
    P = np.broadcast_to(10.0 * np.eye(k), (N, k, k)).copy()
    if spec.sweeps is not None:
        n_sweeps, tol = spec.sweeps, 0.0
    elif batch_mode:
        n_sweeps, tol = 2500, 1e-10
    else:
        n_sweeps, tol = 2, 0.0

    eps_floor = 1e-8 * spread
    B_path = sig_path = None
    weights = None
    prev_terminal = None
    best_eval = None
    best_loss = np.full(N, np.inf)
    for sweep in range(n_sweeps):
        B_path, sig_path, _, _ = _kernels.qvar_filter(
            Y, Z, tau, kappa, B, P, sigma0, weight_eps, weights)
        terminal = B_path[-1]
        if batch_mode:
            # no forgetting: the recursion replays the full sample, so each
            # re-sweep is one reweighting step of the full-sample fit and the
            # smoothing floor anneals slowly (a continuation path, which
            # avoids trapping at non-optimal interpolation vertices)
            eps = max(1e-2 * spread * 0.8**sweep, eps_floor)
            at_floor = eps <= eps_floor
            if (at_floor and prev_terminal is not None
                    and np.max(np.abs(terminal - prev_terminal)) < tol):
                break
            prev_terminal = terminal
            # weights follow the sweep terminal (a genuine reweighting
            # iteration); once at the floor, the interpolating vertex of the
            # k smallest residuals replaces it when that vertex strictly
            # beats the best exact check loss seen so far, which snaps the
            # flat-objective crawl to the solution without capture cycles
            b_eval = terminal.copy()
            for i in range(N):
                term_loss = np.sum(check_loss(Y[:, i] - Z @ terminal[i], tau))
                best_loss[i] = min(best_loss[i], term_loss)
                if not at_floor:
                    continue
                u = Y[:, i] - Z @ terminal[i]
                active = np.argsort(np.abs(u))[:k]
                try:
                    cand = np.linalg.solve(Z[active], Y[active, i])
                except np.linalg.LinAlgError:
                    continue
                cand_loss = np.sum(check_loss(Y[:, i] - Z @ cand, tau))
                if cand_loss < best_loss[i]:
                    best_loss[i] = cand_loss
                    b_eval[i] = cand
            resid = Y - np.einsum("tk,nk->tn", Z, b_eval)
            weights = _check_weights(resid, eps)
            B = b_eval
            P = np.broadcast_to(1e6 * np.eye(k), (N, k, k)).copy()
        else:
            # re-sweeps only wash out the zero start: weights come from the
            # previous pass's filtered (still causal) residual path
            resid = Y - np.einsum("tk,tnk->tn", Z, B_path)
            weights = _check_weights(resid, weight_eps)
            B = terminal.copy()
            P = np.broadcast_to(10.0 * np.eye(k), (N, k, k)).copy()
    return QuantilePath(np.ascontiguousarray(B_path[burn:]),
                        np.ascontiguousarray(sig_path[burn:]))


def _fit_rolling(Y, Z, tau, spec: QvarSpec, burn: int) -> QuantilePath:
    rows, N = Y.shape
    k = Z.shape[1]
    W = spec.window
    n_emit = rows - W + 1
    coefs = np.empty((n_emit, N, k))
    sigmas = np.empty((n_emit, N, N))
    warm = [None] * N
    for idx in range(n_emit):
        sl = slice(idx, idx + W)
        Zw, Yw = Z[sl], Y[sl]
        resid = np.empty((W, N))
        for i in range(N):
            res = fit_quantile_regression(Zw, Yw[:, i], tau, coef0=warm[i])
            coefs[idx, i] = res.coef
            warm[i] = res.coef
            resid[:, i] = Yw[:, i] - Zw @ res.coef
        resid -= resid.mean(axis=0)
        sigmas[idx] = resid.T @ resid / (W - 1)
        d = np.diag(sigmas[idx]).copy()
        floor = max(1e-12, 1e-10 * float(d.max()))
        np.fill_diagonal(sigmas[idx], np.maximum(d, floor))
    return QuantilePath(coefs, sigmas)
