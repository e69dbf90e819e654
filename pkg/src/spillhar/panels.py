"""Panel containers and price-file ingestion.

Two containers move through the pipeline: :class:`ReturnPanel` holds the
intraday log-return grid (one ragged vector per asset per day) and
:class:`MeasurePanel` holds one daily realized measure per asset as a dense
(days x assets) array.  Input prices arrive as a long CSV with columns
``timestamp,asset,price`` and are resampled to a regular intraday grid by
last-tick interpolation before differencing into log-returns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MEASURE_KINDS = (
    "RV", "CV", "CJ", "RS_plus", "RS_minus",
    "REX_plus", "REX_minus", "REX_mod", "RK",
)

#: HAR component sets keyed by model family.
COMPONENT_SETS = {
    "RV": ("RV",),
    "CJ": ("CV", "CJ"),
    "RS": ("RS_plus", "RS_minus"),
    "REX": ("REX_plus", "REX_minus", "REX_mod"),
}


@dataclass
class ReturnPanel:
    """Aligned intraday log-returns: ``returns[asset_idx][day_idx]`` is a 1-D array."""

    assets: list[str]
    days: list[pd.Timestamp]
    returns: list[list[np.ndarray]]

    def __post_init__(self):
        if len(self.returns) != len(self.assets):
            raise ValueError("returns must have one row of day-vectors per asset")
        for a, per_day in zip(self.assets, self.returns):
            if len(per_day) != len(self.days):
                raise ValueError(f"asset {a}: day count mismatch with panel day list")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_days(self) -> int:
        return len(self.days)

    def asset_index(self, asset: str) -> int:
        try:
            return self.assets.index(asset)
        except ValueError:
            raise KeyError(f"asset {asset!r} not in panel {self.assets}") from None

    def validate(self):
        """Check the panel invariants: non-empty finite vectors everywhere."""
        for i, a in enumerate(self.assets):
            for d, day in enumerate(self.days):
                r = self.returns[i][d]
                if r.size == 0:
                    raise ValueError(f"empty return vector for ({a}, {day.date()})")
                if not np.all(np.isfinite(r)):
                    raise ValueError(f"non-finite return for ({a}, {day.date()})")
        return self

    def daily_returns(self, asset: str) -> np.ndarray:
        """Daily log-return per day: the sum of intraday log-returns."""
        i = self.asset_index(asset)
        return np.array([self.returns[i][d].sum() for d in range(self.n_days)])

    def pooled_returns(self, end_day: int | None = None) -> np.ndarray:
        """All intraday returns of all assets over days ``[0, end_day)``, concatenated."""
        end = self.n_days if end_day is None else end_day
        chunks = [self.returns[i][d] for i in range(self.n_assets) for d in range(end)]
        return np.concatenate(chunks) if chunks else np.array([])


@dataclass
class MeasurePanel:
    """Daily series of one realized measure per asset (squared-return units)."""

    measure_kind: str
    assets: list[str]
    days: list[pd.Timestamp]
    values: np.ndarray  # (n_days, n_assets)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.measure_kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure kind {self.measure_kind!r}")
        if self.values.shape != (len(self.days), len(self.assets)):
            raise ValueError("values must be shaped (n_days, n_assets)")
        if np.any(self.values < 0):
            raise ValueError(f"{self.measure_kind} panel has negative entries")

    def series(self, asset: str) -> np.ndarray:
        return self.values[:, self.assets.index(asset)]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.assets)
        df.insert(0, "date", [d.date() for d in self.days])
        return df

    def write_csv(self, path):
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def read_csv(cls, path, measure_kind: str) -> "MeasurePanel":
        df = pd.read_csv(path)
        days = [pd.Timestamp(d) for d in df["date"]]
        assets = [c for c in df.columns if c != "date"]
        return cls(measure_kind, assets, days, df[assets].to_numpy(float))


def load_price_csv(path, grid_seconds: int = 300, min_obs: int = 12,
                   assets: list[str] | None = None) -> ReturnPanel:
    """Build a :class:`ReturnPanel` from a ``timestamp,asset,price`` CSV.

    Prices are resampled per UTC day onto a regular ``grid_seconds`` grid by
    last-tick interpolation (forward fill from the first tick of the day) and
    then differenced into log-returns.  Days on which any asset has fewer than
    ``min_obs`` intraday observations are dropped panel-wide, as are days not
    shared by every asset.
    """
    df = pd.read_csv(path)
    required = {"timestamp", "asset", "price"}
    if not required.issubset(df.columns):
        raise ValueError(f"input CSV must have columns {sorted(required)}; "
                         f"got {list(df.columns)}")
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    if (df["price"] <= 0).any() or not np.isfinite(df["price"]).all():
        raise ValueError("prices must be finite and positive")
    if assets is None:
        assets = sorted(df["asset"].unique())
    else:
        missing = set(assets) - set(df["asset"].unique())
        if missing:
            raise ValueError(f"assets not present in input CSV: {sorted(missing)}")

    per_asset: dict[str, dict[pd.Timestamp, np.ndarray]] = {}
    for a in assets:
        sub = df[df["asset"] == a].sort_values("timestamp")
        series = sub.set_index("timestamp")["price"]
        series = series[~series.index.duplicated(keep="last")]
        days: dict[pd.Timestamp, np.ndarray] = {}
        for day, chunk in series.groupby(series.index.floor("D")):
            grid = chunk.resample(f"{grid_seconds}s").last().ffill().dropna()
            if len(grid) < min_obs:
                logger.info("dropping (%s, %s): %d intraday observations < %d",
                            a, day.date(), len(grid), min_obs)
                continue
            days[day] = np.diff(np.log(grid.to_numpy()))
        per_asset[a] = days

    common = sorted(set.intersection(*(set(d) for d in per_asset.values())))
    if not common:
        raise ValueError("no common days across assets after filtering")
    dropped = {d for days in per_asset.values() for d in days} - set(common)
    for d in sorted(dropped):
        logger.info("dropping day %s panel-wide (not present for every asset)",
                    d.date())
    returns = [[per_asset[a][d] for d in common] for a in assets]
    return ReturnPanel(assets, list(common), returns).validate()


def write_price_csv(path, assets: list[str], days: list[pd.Timestamp],
                    prices: list[list[np.ndarray]]):
    """Write per-day intraday price paths in the pipeline's input CSV format."""
    rows = []
    for i, a in enumerate(assets):
        for d, day in enumerate(days):
            p = prices[i][d]
            step = 86400 // len(p)
            ts = day + pd.to_timedelta(np.arange(len(p)) * step, unit="s")
            rows.append(pd.DataFrame({"timestamp": ts, "asset": a, "price": p}))
    out = pd.concat(rows, ignore_index=True).sort_values(["timestamp", "asset"])
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    out.to_csv(path, index=False)
