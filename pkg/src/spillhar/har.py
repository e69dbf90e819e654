"""The log-HAR model family: design construction, OLS and lasso fits.

One unified regression explains the log realized variance of a target asset
with daily/weekly/monthly averages of one or more volatility components, and
optionally one state-adaptive spillover column per component.  Multi-step
forecasting is direct: the response becomes the h-day-ahead average of log
realized variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panels import COMPONENT_SETS, MeasurePanel
from .states import SpilloverFeatureSeries

HAR_LAGS = (1, 5, 22)

#: The model grid: component family, spillover column, regularization.
MODEL_VARIANTS = {
    "Log-HAR-RV": ("RV", False, False),
    "Log-HAR-CJ": ("CJ", False, False),
    "Log-HAR-RS": ("RS", False, False),
    "Log-HAR-REX": ("REX", False, False),
    "SA-Log-HAR-RV": ("RV", True, False),
    "SA-Log-HAR-CJ": ("CJ", True, False),
    "SA-Log-HAR-RS": ("RS", True, False),
    "SA-Log-HAR-REX": ("REX", True, False),
    "Lasso-SA-Log-HAR-CJ": ("CJ", True, True),
    "Lasso-SA-Log-HAR-RS": ("RS", True, True),
    "Lasso-SA-Log-HAR-REX": ("REX", True, True),
}


@dataclass
class HarSpec:
    """Which components, optional spillover columns, and regularization."""

    components: tuple[str, ...] = ("RV",)
    include_spillover: bool = False
    lasso_lambdas: tuple[float, ...] | None = None
    log_offset: float = 1e-8

    def __post_init__(self):
        if not self.components:
            raise ValueError("component set must be non-empty")
        self.components = tuple(self.components)

    @classmethod
    def for_variant(cls, name: str, lasso_lambdas=None,
                    log_offset: float = 1e-8) -> "HarSpec":
        if name not in MODEL_VARIANTS:
            raise ValueError(f"unknown model {name!r}; "
                             f"valid: {sorted(MODEL_VARIANTS)}")
        family, spill, lasso = MODEL_VARIANTS[name]
        return cls(COMPONENT_SETS[family], spill,
                   tuple(lasso_lambdas) if lasso else None, log_offset)

    @property
    def is_lasso(self) -> bool:
        return self.lasso_lambdas is not None


@dataclass
class HarDesign:
    """Aligned response and regressor matrix, oldest row first."""

    y: np.ndarray
    X: np.ndarray                 # without intercept column
    columns: list[str]
    dates: list
    response_name: str = "log_rv"

    def __post_init__(self):
        if self.X.shape != (len(self.y), len(self.columns)):
            raise ValueError("design shape does not match columns/response")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("design contains non-finite entries")


def trailing_mean(values: np.ndarray, h: int) -> np.ndarray:
    """At index t: mean of values[t-h .. t-1]; NaN where the window is short."""
    values = np.asarray(values, dtype=float)
    out = np.full(values.size, np.nan)
    if h == 1:
        out[1:] = values[:-1]
        return out
    c = np.concatenate([[0.0], np.cumsum(values)])
    out[h:] = (c[h:-1] - c[:-h - 1]) / h
    return out


def har_regressor_matrix(panels: dict[str, MeasurePanel], target_asset: str,
                         spec: HarSpec,
                         features: dict[str, SpilloverFeatureSeries] | None = None,
                         ):
    """Regressor rows for days 0..T (inclusive): row t uses days <= t-1 only.

    The extra final row is the next-day regressor vector, fully formable
    from the observed panel, which the forecast harness scores against the
    still-unobserved response.  Rows where any column is undefined are NaN.
    """
    for k in spec.components:
        if k not in panels:
            raise ValueError(f"missing measure panel for component {k!r}")
    base = panels[spec.components[0]]
    days = list(base.days)
    T = len(days)
    delta = spec.log_offset

    columns, mats = [], []
    for k in spec.components:
        series = panels[k].series(target_asset)
        for h in HAR_LAGS:
            columns.append(f"{k}_h{h}")
            col = np.append(trailing_mean(series, h), series[-h:].mean())
            mats.append(np.log(col + delta))
    if spec.include_spillover:
        if not features:
            raise ValueError("spillover columns requested but no feature series given")
        day_pos = {d: t for t, d in enumerate(days)}
        for k in spec.components:
            if k not in features:
                raise ValueError(f"missing spillover feature for component {k!r}")
            feat = features[k]
            col = np.full(T + 1, np.nan)
            for d, v in zip(feat.days, feat.values):
                if d in day_pos:
                    col[day_pos[d]] = np.log(v + delta)
            if feat.next_value is not None:
                col[T] = np.log(feat.next_value + delta)
            columns.append(f"sa_{k}")
            mats.append(col)
    return np.column_stack(mats), columns


def build_har_design(panels: dict[str, MeasurePanel], target_asset: str,
                     spec: HarSpec, response_kind: str = "RV",
                     features: dict[str, SpilloverFeatureSeries] | None = None,
                     ) -> HarDesign:
    """Assemble the log-HAR design for one target asset.

    ``panels`` maps measure kind to its panel; the response is the log of the
    target's ``response_kind`` series.  Per component k and lag h the column
    is log(trailing h-day mean of k + offset); with spillover enabled, one
    log(X + offset) column per component is appended from ``features``.
    Rows cover every date where all columns are defined (the first 22 days
    drop, plus any dates a feature series does not reach).
    """
    if response_kind not in panels:
        raise ValueError(f"missing measure panel for response {response_kind!r}")
    base = panels[response_kind]
    days = list(base.days)
    T = len(days)
    if T < 23 + 1:
        raise ValueError(f"need at least 24 days to build the design; got {T}")
    y_full = np.log(base.series(target_asset) + spec.log_offset)

    X_ext, columns = har_regressor_matrix(panels, target_asset, spec, features)
    X_full = X_ext[:T]
    valid = np.all(np.isfinite(X_full), axis=1)
    valid[:max(HAR_LAGS)] = False
    idx = np.nonzero(valid)[0]
    if idx.size < len(columns) + 2:
        raise ValueError(f"only {idx.size} usable rows for {len(columns)} columns")
    return HarDesign(y_full[idx], X_full[idx], columns,
                     [days[t] for t in idx])


@dataclass
class HarFit:
    intercept: float
    slopes: np.ndarray
    columns: list[str]
    residual_variance: float
    std_errors: np.ndarray | None   # incl. intercept first; None for lasso
    r2: float
    adj_r2: float
    aic: float
    bic: float
    n_obs: int
    lam: float | None = None
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def coef_dict(self) -> dict[str, float]:
        out = {"intercept": float(self.intercept)}
        out.update({c: float(b) for c, b in zip(self.columns, self.slopes)})
        return out


def _fit_stats(y, fitted, n_params):
    n = y.size
    resid = y - fitted
    sse = float(resid @ resid)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / tss if tss > 0 else 1.0
    n_slopes = n_params - 1
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - n_slopes - 1)
    aic = n * np.log(sse / n) + 2 * n_params
    bic = n * np.log(sse / n) + n_params * np.log(n)
    return sse, r2, adj, float(aic), float(bic)


def fit_ols(design: HarDesign) -> HarFit:
    """Least squares with homoskedastic standard errors and IC summaries."""
    y, X = design.y, design.X
    n, m = X.shape
    Xc = np.column_stack([np.ones(n), X])
    rank = np.linalg.matrix_rank(Xc)
    if rank < m + 1:
        _, R = np.linalg.qr(Xc)
        bad = [design.columns[j - 1] for j in range(1, m + 1)
               if abs(R[j, j]) < 1e-10 * abs(R[0, 0])]
        raise ValueError(f"rank-deficient design; collinear columns: {bad}")
    coef, *_ = np.linalg.lstsq(Xc, y, rcond=None)
    fitted = Xc @ coef
    sse, r2, adj, aic, bic = _fit_stats(y, fitted, m + 1)
    dof = n - (m + 1)
    sigma2 = sse / dof
    cov = sigma2 * np.linalg.inv(Xc.T @ Xc)
    se = np.sqrt(np.diag(cov))
    return HarFit(float(coef[0]), coef[1:], list(design.columns), sigma2, se,
                  r2, adj, aic, bic, n)


def soft_threshold(x: float, t: float) -> float:
    return float(np.sign(x) * max(abs(x) - t, 0.0))


def lasso_coordinate_descent(X: np.ndarray, y: np.ndarray, lam: float,
                             max_sweeps: int = 2000, tol: float = 1e-12,
                             history: list | None = None):
    """Cyclic coordinate descent on standardized predictors.

    Solves min (1/2n)||y - b0 - Xb||^2 + lam * ||b||_1 with the intercept
    unpenalized, returning coefficients on the original scale.  The objective
    is non-increasing across sweeps by construction of the exact coordinate
    updates; pass ``history`` to record it sweep by sweep.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    if np.any(sd <= 0):
        bad = [j for j in range(m) if sd[j] <= 0]
        raise ValueError(f"constant predictor columns {bad} cannot be standardized")
    Xs = (X - mu) / sd
    ybar = y.mean()
    r = y - ybar
    b = np.zeros(m)
    converged = False
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(m):
            bj_old = b[j]
            rho = (Xs[:, j] @ r) / n + bj_old
            b[j] = soft_threshold(rho, lam)
            if b[j] != bj_old:
                r -= (b[j] - bj_old) * Xs[:, j]
                delta = max(delta, abs(b[j] - bj_old))
        if history is not None:
            history.append(float(r @ r / (2 * n) + lam * np.abs(b).sum()))
        if delta < tol:
            converged = True
            break
    slopes = b / sd
    intercept = ybar - mu @ slopes
    return intercept, slopes, converged


def fit_lasso(design: HarDesign, lambdas, val_frac: float = 0.2) -> HarFit:
    """Lasso fit with the penalty chosen on the last ``val_frac`` of rows.

    For each candidate penalty the model is fit on the leading rows and
    scored by mean squared error on the trailing validation rows (time order
    preserved); the winner is refit on all rows.
    """
    lambdas = sorted(set(float(l) for l in np.atleast_1d(lambdas)))
    y, X = design.y, design.X
    n = y.size
    if len(lambdas) > 1:
        split = max(int(np.floor(n * (1 - val_frac))), design.X.shape[1] + 2)
        best_lam, best_mse = None, np.inf
        for lam in lambdas:
            b0, b, _ = lasso_coordinate_descent(X[:split], y[:split], lam)
            pred = b0 + X[split:] @ b
            mse = float(np.mean((y[split:] - pred) ** 2))
            if mse < best_mse - 1e-15:
                best_lam, best_mse = lam, mse
    else:
        best_lam = lambdas[0]
    b0, slopes, converged = lasso_coordinate_descent(X, y, best_lam)
    fitted = b0 + X @ slopes
    n_params = 1 + int(np.count_nonzero(slopes))
    sse, r2, adj, aic, bic = _fit_stats(y, fitted, max(n_params, 1))
    sigma2 = sse / max(n - n_params, 1)
    return HarFit(b0, slopes, list(design.columns), sigma2, None, r2, adj,
                  aic, bic, n, lam=best_lam, converged=converged)


def predict(fit: HarFit, X: np.ndarray, columns: list[str] | None = None,
            ) -> np.ndarray:
    """Linear prediction on the log scale; columns must match the fit."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if columns is not None and list(columns) != list(fit.columns):
        raise ValueError(f"column mismatch: fit has {fit.columns}, "
                         f"got {list(columns)}")
    if X.shape[1] != len(fit.columns):
        raise ValueError(f"expected {len(fit.columns)} columns, got {X.shape[1]}")
    return fit.intercept + X @ fit.slopes


def direct_horizon_target(log_rv: np.ndarray, h: int):
    """Direct multi-step response: mean of log RV over t+1..t+h.

    Returns (targets, n_valid): targets[t] is defined for t < n - h; the last
    h positions are dropped.
    """
    if h not in HAR_LAGS:
        raise ValueError(f"horizon must be one of {HAR_LAGS}; got {h}")
    v = np.asarray(log_rv, dtype=float)
    if v.size < h + 1:
        raise ValueError(f"series of length {v.size} too short for horizon {h}")
    c = np.concatenate([[0.0], np.cumsum(v)])
    fwd = (c[1 + h:] - c[1:-h]) / h if h > 1 else v[1:]
    return fwd, v.size - h
