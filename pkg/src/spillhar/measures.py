"""Daily realized volatility measures and their decompositions.

All operations act on one day's vector of intraday log-returns and return
quantities in squared-return units.  Decompositions preserve exact additive
identities: semivariances and the extreme split sum to the realized variance,
and the jump split satisfies CV + CJ = RV by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .panels import MEASURE_KINDS, MeasurePanel, ReturnPanel

# Absolute-moment constants of the standard normal used by the jump test.
_MU1 = math.sqrt(2.0 / math.pi)             # E|Z|
_MU43 = 2 ** (2 / 3) * math.gamma(7 / 6) / math.gamma(0.5)  # E|Z|^(4/3)
_THETA = (math.pi / 2) ** 2 + math.pi - 5   # asymptotic variance constant


def _check_finite(returns: np.ndarray, context: str = "") -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1:
        raise ValueError(f"return vector must be 1-D{context}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"non-finite intraday return{context}")
    return r


def realized_variance(returns) -> float:
    """Sum of squared intraday returns; 0 for an empty vector."""
    r = _check_finite(returns)
    return float(np.dot(r, r))


def semivariances(returns) -> tuple[float, float]:
    """Signed split of RV: (sum of r^2 over r > 0, sum of r^2 over r < 0)."""
    r = _check_finite(returns)
    rs_plus = float(np.dot(r[r > 0], r[r > 0]))
    rs_minus = float(np.dot(r[r < 0], r[r < 0]))
    return rs_plus, rs_minus


def bipower_variation(returns) -> float:
    """Jump-robust variance: (pi/2) * n/(n-1) * sum |r_j||r_{j-1}|."""
    r = _check_finite(returns)
    n = r.size
    if n < 2:
        return 0.0
    a = np.abs(r)
    return (math.pi / 2) * (n / (n - 1)) * float(np.dot(a[1:], a[:-1]))


def _tripower_quarticity(r: np.ndarray) -> float:
    n = r.size
    a = np.abs(r) ** (4 / 3)
    scale = n * (n / (n - 2)) * _MU43 ** (-3)
    return scale * float(np.sum(a[2:] * a[1:-1] * a[:-2]))


def bipower_jump(returns, alpha: float = 0.99) -> tuple[float, float, bool]:
    """Split RV into continuous and jump parts via a significance-gated BV gap.

    The ratio statistic compares the relative RV - BV gap against its
    tripower-quarticity-corrected asymptotic standard error; the jump part is
    max(RV - BV, 0) when the statistic exceeds the alpha normal quantile and 0
    otherwise, so CV + CJ = RV holds exactly and both parts are non-negative.

    Returns
    -------
    (cv, cj, short_sample) : the split plus a flag set when the vector is too
    short (n < 3) for the test, in which case CV = RV and CJ = 0.
    """
    if not 0.5 < alpha < 1:
        raise ValueError(f"alpha must be in (0.5, 1); got {alpha}")
    r = _check_finite(returns)
    rv = realized_variance(r)
    n = r.size
    if n < 3:
        return rv, 0.0, True
    bv = bipower_variation(r)
    tq = _tripower_quarticity(r)
    if rv <= 0:
        return rv, 0.0, False
    denom = math.sqrt(_THETA / n * max(1.0, tq / bv**2)) if bv > 0 else math.inf
    z = ((rv - bv) / rv) / denom if denom > 0 else 0.0
    cj = max(rv - bv, 0.0) if z > norm.ppf(alpha) else 0.0
    return rv - cj, cj, False


def rex_split(returns, q_lo: float, q_hi: float) -> tuple[float, float, float]:
    """Split RV by return size: (extreme-negative, moderate, extreme-positive).

    ``q_lo``/``q_hi`` are thresholds in return units; returns at or below
    ``q_lo`` feed the negative part, at or above ``q_hi`` the positive part,
    everything in between the moderate part.  The three parts sum to RV.
    """
    if q_lo >= q_hi:
        raise ValueError(f"q_lo must be below q_hi; got ({q_lo}, {q_hi})")
    r = _check_finite(returns)
    sq = r * r
    rex_minus = float(sq[r <= q_lo].sum())
    rex_plus = float(sq[r >= q_hi].sum())
    rex_mod = float(sq[(r > q_lo) & (r < q_hi)].sum())
    return rex_minus, rex_mod, rex_plus


def parzen_weight(x: float) -> float:
    """Parzen kernel on [0, 1]."""
    if x < 0 or x > 1:
        return 0.0
    if x <= 0.5:
        return 1 - 6 * x**2 + 6 * x**3
    return 2 * (1 - x) ** 3


def realized_kernel(returns, bandwidth: int | None = None) -> tuple[float, bool]:
    """Noise-robust variance: Parzen-weighted sum of realized autocovariances.

    RK = gamma_0 + sum_{h=1..H} k((h-1)/H) * 2 * gamma_h with
    gamma_h = sum_j r_j r_{j-h}.  ``bandwidth=None`` selects H automatically
    from a first-order-autocovariance noise estimate, falling back to
    ceil(n^(3/5)) when no noise is detected.  Negative estimates are clamped
    to 0; the second return value flags that a clamp happened.
    """
    r = _check_finite(returns)
    n = r.size
    if bandwidth is None:
        bandwidth = auto_bandwidth(r)
    bandwidth = int(bandwidth)
    if bandwidth < 0:
        raise ValueError("bandwidth must be non-negative")
    if bandwidth >= n and not (n == 0 and bandwidth == 0):
        raise ValueError(f"bandwidth {bandwidth} must be below the vector length {n}")
    rk = float(np.dot(r, r))
    for h in range(1, bandwidth + 1):
        gamma_h = float(np.dot(r[h:], r[:-h]))
        rk += parzen_weight((h - 1) / bandwidth) * 2.0 * gamma_h
    if rk < 0:
        return 0.0, True
    return rk, False


def auto_bandwidth(returns) -> int:
    """Bandwidth rule for the realized kernel.

    Estimates the noise variance from the (negated) first-order return
    autocovariance; with noise present uses the Parzen-rate rule
    H = ceil(c* xi^(4/5) n^(3/5)) with c* = 3.5134 and xi^2 the
    noise-to-signal ratio (bipower variation as the signal), otherwise falls
    back to ceil(n^(3/5)).  Always within [1, n-1].
    """
    r = _check_finite(returns)
    n = r.size
    if n < 3:
        return max(0, n - 1)
    default = math.ceil(n ** 0.6)
    noise_var = -float(np.dot(r[1:], r[:-1])) / (n - 1)
    signal = bipower_variation(r)
    if noise_var <= 0 or signal <= 0:
        h = default
    else:
        xi2 = noise_var / signal
        h = math.ceil(3.5134 * xi2 ** 0.4 * n ** 0.6)
    return int(min(max(h, 1), n - 1))


def pooled_rex_thresholds(panel: ReturnPanel, q_lo: float = 0.05,
                          q_hi: float = 0.95, end_day: int | None = None,
                          ) -> tuple[float, float]:
    """Thresholds for the extreme split: pooled empirical quantiles.

    Pooled over every asset and every day strictly before ``end_day`` (the
    estimation sample), so the thresholds stay fixed across days.
    """
    if not 0 < q_lo < q_hi < 1:
        raise ValueError(f"need 0 < q_lo < q_hi < 1; got ({q_lo}, {q_hi})")
    pooled = panel.pooled_returns(end_day)
    if pooled.size == 0:
        raise ValueError("no returns available to compute thresholds")
    lo, hi = np.quantile(pooled, [q_lo, q_hi])
    if lo >= hi:
        raise ValueError("degenerate pooled return distribution: "
                         "lower threshold is not below the upper one")
    return float(lo), float(hi)


@dataclass
class MeasureParams:
    """Per-day estimator settings shared by panel construction."""

    jump_alpha: float = 0.99
    rex_thresholds: tuple[float, float] | None = None  # return units
    rex_quantiles: tuple[float, float] = (0.05, 0.95)
    rex_threshold_end_day: int | None = None  # pooled-quantile sample bound
    rk_bandwidth: int | None = None           # None = per-day auto rule


def build_measure_panel(panel: ReturnPanel, kind: str,
                        params: MeasureParams | None = None) -> MeasurePanel:
    """Apply one per-day measure across all (asset, day) cells.

    Deterministic and evaluation-order independent; per-day failures are
    re-raised with the offending (asset, day) attached.
    """
    if kind not in MEASURE_KINDS:
        raise ValueError(f"unknown measure kind {kind!r}; valid: {MEASURE_KINDS}")
    params = params or MeasureParams()
    thresholds = params.rex_thresholds
    if kind.startswith("REX") and thresholds is None:
        thresholds = pooled_rex_thresholds(panel, *params.rex_quantiles,
                                           end_day=params.rex_threshold_end_day)

    values = np.empty((panel.n_days, panel.n_assets))
    flags: dict = {"short_jump_days": [], "clamped_rk_days": []}
    if kind.startswith("REX"):
        flags["rex_thresholds"] = thresholds
    for i, asset in enumerate(panel.assets):
        for d, day in enumerate(panel.days):
            r = panel.returns[i][d]
            try:
                values[d, i] = _one_cell(r, kind, params, thresholds, flags,
                                         asset, day)
            except ValueError as exc:
                raise ValueError(f"({asset}, {day.date()}): {exc}") from exc
    return MeasurePanel(kind, list(panel.assets), list(panel.days), values,
                        flags=flags)


def _one_cell(r, kind, params, thresholds, flags, asset, day) -> float:
    if kind == "RV":
        return realized_variance(r)
    if kind in ("RS_plus", "RS_minus"):
        plus, minus = semivariances(r)
        return plus if kind == "RS_plus" else minus
    if kind in ("CV", "CJ"):
        cv, cj, short = bipower_jump(r, params.jump_alpha)
        if short:
            flags["short_jump_days"].append((asset, str(day.date())))
        return cv if kind == "CV" else cj
    if kind in ("REX_plus", "REX_minus", "REX_mod"):
        rm, rmod, rp = rex_split(r, *thresholds)
        return {"REX_minus": rm, "REX_mod": rmod, "REX_plus": rp}[kind]
    if kind == "RK":
        rk, clamped = realized_kernel(r, params.rk_bandwidth)
        if clamped:
            flags["clamped_rk_days"].append((asset, str(day.date())))
        return rk
    raise AssertionError(f"unhandled kind {kind}")
