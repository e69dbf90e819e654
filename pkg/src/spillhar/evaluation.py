"""Out-of-sample evaluation: rolling harness, losses, MCS, and R2-oos.

The rolling harness walks forecast origins through the evaluation span,
re-fitting from the trailing window only.  Model comparison uses the model
confidence set procedure (iterative elimination with moving-block bootstrap
null distributions under the range and max statistics) and the out-of-sample
R2 with the Clark-West adjusted significance test against a nested benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

LOSS_NAMES = ("MSE", "MAE", "RMSE", "QLIKE")


@dataclass
class ForecastRun:
    """Aligned out-of-sample predictions and realized targets for one model."""

    model_id: str
    horizon: int
    scheme: str
    dates: list
    predictions: np.ndarray
    targets: np.ndarray
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.predictions = np.asarray(self.predictions, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if not (len(self.dates) == self.predictions.size == self.targets.size):
            raise ValueError("dates, predictions and targets must align")


def rolling_forecast(fit_predict, n_days: int, horizon: int, span: int,
                     scheme: str = "expanding", window: int | None = None,
                     targets: np.ndarray | None = None, dates=None,
                     model_id: str = "model") -> ForecastRun:
    """Walk forecast origins over the last ``span`` feasible days.

    ``fit_predict(lo, hi)`` receives the half-open day-index bounds of the
    training window and returns the prediction of the h-day-ahead target at
    origin ``hi - 1``.  ``targets[i]`` is the realized target of the i-th
    origin.  A per-origin exception is recorded and the run continues; the
    failed origin is excluded from the aligned output.
    """
    if scheme not in ("expanding", "rolling_fixed"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "rolling_fixed" and not window:
        raise ValueError("rolling_fixed scheme needs a window length")
    first_origin = n_days - horizon - span
    needed = (window or 1) + span - 1 + horizon
    if n_days < needed or first_origin < (window - 1 if window else 0):
        raise ValueError(f"need at least {needed} days for window={window}, "
                         f"span={span}, horizon={horizon}; got {n_days}")
    if dates is None:
        dates = list(range(n_days))

    out_dates, preds, reals, failures = [], [], [], []
    for i, origin in enumerate(range(first_origin, first_origin + span)):
        lo = 0 if scheme == "expanding" else origin + 1 - window
        try:
            pred = float(fit_predict(lo, origin + 1))
        except Exception as exc:  # noqa: BLE001 - per-date failures are data
            failures.append((dates[origin + 1], f"{type(exc).__name__}: {exc}"))
            continue
        out_dates.append(dates[origin + 1])
        preds.append(pred)
        reals.append(float(targets[i]) if targets is not None else np.nan)
    return ForecastRun(model_id, horizon, scheme, out_dates,
                       np.array(preds), np.array(reals), failures)


def qlike(y: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Per-date quasi-likelihood loss y/f - ln(y/f) - 1 on level-scale pairs."""
    ratio = np.asarray(y, float) / np.asarray(f, float)
    return ratio - np.log(ratio) - 1.0


def loss_suite(run: ForecastRun, log_scale: bool = True) -> dict:
    """MSE/MAE/RMSE on the modeled scale plus QLIKE on level-scale pairs.

    With ``log_scale`` (the default) predictions and targets are log
    variances: the first three losses apply to them directly and QLIKE uses
    the exp-transformed pairs.  On the level scale, non-positive forecasts
    make QLIKE undefined for that date and are recorded as per-date errors.
    """
    err = run.predictions - run.targets
    per_date = {
        "MSE": err**2,
        "MAE": np.abs(err),
        # per-date squared errors back the RMSE comparison too: the root is
        # monotone, so set rankings under RMSE coincide with MSE
        "RMSE": err**2,
    }
    if log_scale:
        y, f = np.exp(run.targets), np.exp(run.predictions)
        ql = qlike(y, f)
        bad_dates = []
    else:
        y, f = run.targets, run.predictions
        ok = f > 0
        bad_dates = [run.dates[i] for i in np.nonzero(~ok)[0]]
        ql = np.full(err.size, np.nan)
        ql[ok] = qlike(y[ok], f[ok])
    per_date["QLIKE"] = ql
    out = {
        "MSE": float(np.mean(per_date["MSE"])),
        "MAE": float(np.mean(per_date["MAE"])),
        "RMSE": float(np.sqrt(np.mean(per_date["MSE"]))),
        "QLIKE": float(np.nanmean(ql)),
        "per_date": per_date,
        "qlike_errors": bad_dates,
    }
    return out


def moving_block_indices(n: int, block_length: int, reps: int,
                         rng: np.random.Generator) -> np.ndarray:
    """(reps, n) resampling index matrix from overlapping blocks."""
    block_length = min(max(int(block_length), 1), n)
    n_blocks = -(-n // block_length)
    starts = rng.integers(0, n - block_length + 1, size=(reps, n_blocks))
    offsets = np.arange(block_length)
    idx = (starts[:, :, None] + offsets[None, None, :]).reshape(reps, -1)
    return idx[:, :n]


@dataclass
class McsStatResult:
    statistic: str
    ranks: dict[str, int]
    pvalues: dict[str, float]
    survivors: list[str]
    elimination_order: list[str]


@dataclass
class McsResult:
    models: list[str]
    alpha: float
    reps: int
    block_length: int
    seed: int
    by_statistic: dict[str, McsStatResult]
    degenerate: bool = False

    def survived(self, statistic: str, model: str) -> bool:
        return model in self.by_statistic[statistic].survivors


def mcs(losses: np.ndarray, models: list[str], alpha: float = 0.25,
        reps: int = 1000, block_length: int = 22, seed: int = 0) -> McsResult:
    """Model confidence set under the range (T_R) and max (T_max) statistics.

    Iteratively eliminates the worst model while the bootstrap p-value of the
    equal-predictive-ability statistic stays below ``alpha``; the survivors
    form the confidence set.  Ranks reverse the elimination order (first out
    = worst), with the final survivors ordered by ascending mean loss.
    Identical loss columns short-circuit: everything survives with ranks in
    input order and the degenerate flag set.
    """
    L = np.asarray(losses, dtype=float)
    T, M = L.shape
    if M != len(models) or M < 2:
        raise ValueError("need one column per model and at least two models")
    if T < 30:
        raise ValueError(f"need at least 30 loss rows; got {T}")

    col_means = L.mean(axis=0)
    spread = float(np.max(L) - np.min(L))
    if np.allclose(L, L[:, [0]], atol=1e-15 * max(spread, 1.0)):
        result = McsResult(list(models), alpha, reps, block_length, seed, {},
                           degenerate=True)
        for stat in ("T_max", "T_R"):
            result.by_statistic[stat] = McsStatResult(
                stat, {m: i + 1 for i, m in enumerate(models)},
                {m: 1.0 for m in models}, list(models), [])
        return result

    rng = np.random.default_rng(seed)
    idx = moving_block_indices(T, block_length, reps, rng)
    boot_means = L[idx].mean(axis=1)               # (reps, M)
    dev = boot_means - col_means[None, :]          # centered bootstrap means

    result = McsResult(list(models), alpha, reps, block_length, seed, {})
    for stat in ("T_max", "T_R"):
        result.by_statistic[stat] = _eliminate(stat, col_means, dev, models,
                                               alpha)
    return result


def _eliminate(statistic, col_means, dev, models, alpha):
    M = len(models)
    active = list(range(M))
    order: list[int] = []
    pvalues = np.ones(M)
    running_p = 0.0
    tiny = 1e-30
    while len(active) > 1:
        mean_a = col_means[active]
        dev_a = dev[:, active]
        if statistic == "T_max":
            d_bar = mean_a - mean_a.mean()
            zeta = dev_a - dev_a.mean(axis=1, keepdims=True)
            sd = np.sqrt(np.maximum((zeta**2).mean(axis=0), tiny))
            t_obs = d_bar / sd
            t_star = zeta / sd[None, :]
            stat_obs = float(t_obs.max())
            stat_null = t_star.max(axis=1)
            worst_local = int(np.argmax(t_obs))
        else:
            d_bar = mean_a[:, None] - mean_a[None, :]
            zeta = dev_a[:, :, None] - dev_a[:, None, :]
            sd = np.sqrt(np.maximum((zeta**2).mean(axis=0), tiny))
            np.fill_diagonal(sd, 1.0)
            t_pair = d_bar / sd
            stat_obs = float(np.abs(t_pair).max())
            stat_null = np.abs(zeta / sd[None, :, :]).reshape(len(zeta), -1).max(axis=1)
            worst_local = int(np.argmax(t_pair.max(axis=1)))
        p_step = float(np.mean(stat_null >= stat_obs))
        running_p = max(running_p, p_step)
        if running_p >= alpha:
            break
        worst = active[worst_local]
        pvalues[worst] = running_p
        order.append(worst)
        active.remove(worst)

    survivors = sorted(active, key=lambda i: col_means[i])
    ranking = list(reversed(order))   # last eliminated just missed the set
    ranks = {}
    for pos, i in enumerate(survivors + ranking):
        ranks[models[i]] = pos + 1
    return McsStatResult(statistic, ranks,
                         {models[i]: float(pvalues[i]) for i in range(M)},
                         [models[i] for i in survivors],
                         [models[i] for i in order])


@dataclass
class OosR2Result:
    r2_oos: float
    mspe_adjust: float
    cw_stat: float
    p_value: float
    n: int
    flagged: bool = False


def bartlett_lrv(x: np.ndarray, lags: int) -> float:
    """Long-run variance with Bartlett weights over ``lags`` autocovariances."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    v = float(xc @ xc) / n
    for l in range(1, min(lags, n - 1) + 1):
        gamma = float(xc[l:] @ xc[:-l]) / n
        v += 2.0 * (1.0 - l / (lags + 1.0)) * gamma
    return v


def r2_oos(run_model: ForecastRun, run_bench: ForecastRun,
           hac_lags: int | None = None) -> OosR2Result:
    """Out-of-sample R2 and the Clark-West test against a nested benchmark.

    R2 = 1 - SSE_model / SSE_bench; the adjustment term
    f_t = (y - b)^2 - (y - m)^2 + (b - m)^2 removes the nested model's noise
    penalty, and its mean is tested one-sided with a Bartlett HAC variance
    (lag defaults to the forecast horizon).  Identical forecasts leave the
    test undefined and are flagged.
    """
    if list(run_model.dates) != list(run_bench.dates):
        raise ValueError("model and benchmark runs must cover identical dates")
    y = run_model.targets
    m = run_model.predictions
    b = run_bench.predictions
    sse_b = float(np.sum((y - b) ** 2))
    if sse_b <= 0:
        raise ValueError("benchmark has zero squared error; R2-oos undefined")
    sse_m = float(np.sum((y - m) ** 2))
    r2 = 1.0 - sse_m / sse_b
    f = (y - b) ** 2 - (y - m) ** 2 + (b - m) ** 2
    mspe_adjust = float(f.mean())
    n = f.size
    lags = run_model.horizon if hac_lags is None else hac_lags
    lrv = bartlett_lrv(f, lags)
    if lrv <= 0 or np.allclose(m, b):
        return OosR2Result(r2, mspe_adjust, np.nan, np.nan, n, flagged=True)
    cw = mspe_adjust / np.sqrt(lrv / n)
    return OosR2Result(r2, mspe_adjust, float(cw),
                       float(1.0 - norm.cdf(cw)), n)
