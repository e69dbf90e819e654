"""Reproducible synthetic panels with known ground truth.

Daily log integrated variance follows a stable VAR with an optional
state-dependent channel: when the target asset closed the previous day in its
High volatility state, its log variance loads extra on the designated source
asset.  Intraday returns are Gaussian increments scaled to the day's
integrated variance, optionally contaminated with Poisson jumps and i.i.d.
microstructure noise on the log price.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import solve_discrete_lyapunov
from scipy.stats import norm

from .panels import ReturnPanel, write_price_csv


@dataclass
class DgpConfig:
    n_assets: int = 3
    n_days: int = 500
    steps_per_day: int = 288
    seed: int = 0
    persistence: float = 0.6       # own-lag coefficient of log variance
    cross: float = 0.1             # loading of every asset on the source's lag
    log_iv_mean: float = -8.0      # unconditional mean log daily variance
    vol_of_vol: float = 0.35
    spill_gain: float = 0.0        # extra High-state loading of target on source
    spill_source: int | None = None
    spill_target: int = 0
    high_quantile: float = 0.9
    jump_intensity: float = 0.0    # expected jumps per (asset, day)
    jump_std: float = 0.0          # jump size std, return units
    noise_std: float = 0.0         # microstructure noise std on log price

    def __post_init__(self):
        if self.n_assets < 1 or self.n_days < 2 or self.steps_per_day < 2:
            raise ValueError("need n_assets >= 1, n_days >= 2, steps >= 2")
        if self.jump_intensity < 0 or self.jump_std < 0 or self.noise_std < 0:
            raise ValueError("intensities and noise levels must be >= 0")
        if self.spill_source is None:
            self.spill_source = self.n_assets - 1
        if self.spill_source == self.spill_target and self.n_assets > 1:
            raise ValueError("spillover source must differ from the target")

    def var_matrix(self) -> np.ndarray:
        phi = self.persistence * np.eye(self.n_assets)
        for i in range(self.n_assets):
            if i != self.spill_source:
                phi[i, self.spill_source] += self.cross
        radius = float(np.max(np.abs(np.linalg.eigvals(phi))))
        if radius >= 1.0:
            raise ValueError(f"log-variance VAR is unstable "
                             f"(spectral radius {radius:.3f})")
        return phi

    def asset_names(self) -> list[str]:
        return [f"A{i}" for i in range(self.n_assets)]


@dataclass
class SimTruth:
    """Ground truth accompanying a simulated panel."""

    iv: np.ndarray            # (days, assets) continuous integrated variance
    jump_days: np.ndarray     # (days, assets) bool: at least one jump
    jump_variation: np.ndarray  # (days, assets) sum of squared jump sizes
    source: int
    target: int
    high_threshold: float     # log-variance threshold defining the High state
    high_state: np.ndarray    # (days,) bool, target in High at day close
    log_iv: np.ndarray = field(repr=False, default=None)


def simulate(cfg: DgpConfig) -> tuple[ReturnPanel, SimTruth]:
    """Generate a return panel and its ground truth, fully seed-determined."""
    rng = np.random.default_rng(cfg.seed)
    N, D, S = cfg.n_assets, cfg.n_days, cfg.steps_per_day
    phi = cfg.var_matrix()
    mu = np.full(N, cfg.log_iv_mean)
    q = cfg.vol_of_vol**2 * np.eye(N)
    stat_cov = solve_discrete_lyapunov(phi, q)
    thr = cfg.log_iv_mean + norm.ppf(cfg.high_quantile) * np.sqrt(
        stat_cov[cfg.spill_target, cfg.spill_target])

    log_iv = np.empty((D, N))
    high = np.zeros(D, dtype=bool)
    lv = mu.copy()
    for t in range(D):
        shock = cfg.vol_of_vol * rng.standard_normal(N)
        nxt = mu + phi @ (lv - mu) + shock
        if t > 0 and high[t - 1] and cfg.spill_gain != 0.0:
            nxt[cfg.spill_target] += cfg.spill_gain * (
                lv[cfg.spill_source] - mu[cfg.spill_source])
        lv = nxt
        log_iv[t] = lv
        high[t] = lv[cfg.spill_target] >= thr
    iv = np.exp(log_iv)

    days = [pd.Timestamp("2021-01-01", tz="UTC") + pd.Timedelta(days=t)
            for t in range(D)]
    returns: list[list[np.ndarray]] = [[] for _ in range(N)]
    jump_days = np.zeros((D, N), dtype=bool)
    jump_var = np.zeros((D, N))
    for t in range(D):
        for i in range(N):
            r = np.sqrt(iv[t, i] / S) * rng.standard_normal(S)
            n_jumps = rng.poisson(cfg.jump_intensity)
            if n_jumps > 0 and cfg.jump_std > 0:
                sizes = cfg.jump_std * rng.standard_normal(n_jumps)
                spots = rng.integers(0, S, size=n_jumps)
                np.add.at(r, spots, sizes)
                jump_days[t, i] = True
                jump_var[t, i] = float(sizes @ sizes)
            if cfg.noise_std > 0:
                prices = np.concatenate([[0.0], np.cumsum(r)])
                prices += cfg.noise_std * rng.standard_normal(S + 1)
                r = np.diff(prices)
            returns[i].append(r)

    panel = ReturnPanel(cfg.asset_names(), days, returns).validate()
    truth = SimTruth(iv, jump_days, jump_var, cfg.spill_source,
                     cfg.spill_target, float(thr), high, log_iv)
    return panel, truth


def panel_prices(panel: ReturnPanel, initial: float = 100.0):
    """Per-asset per-day price levels implied by the intraday returns.

    Each day carries steps+1 points (open plus one per return); the open
    continues the previous day's close so the price path is a single
    continuous trajectory per asset.
    """
    prices = []
    for i in range(panel.n_assets):
        log_p = np.log(initial * (1 + i))
        per_day = []
        for d in range(panel.n_days):
            path = log_p + np.concatenate([[0.0],
                                           np.cumsum(panel.returns[i][d])])
            per_day.append(np.exp(path))
            log_p = path[-1]
        prices.append(per_day)
    return prices


def write_panel_csv(panel: ReturnPanel, path):
    """Emit the panel as the pipeline's standard price CSV.

    The per-day price paths land on an exact regular grid when
    86400/(steps_per_day+1) is a whole number of seconds, making the CSV
    round-trip through the loader lossless for grid-aligned step counts.
    """
    write_price_csv(path, panel.assets, panel.days, panel_prices(panel))
