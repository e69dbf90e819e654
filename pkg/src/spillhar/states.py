"""Market-state classification and the state-adaptive spillover regressor.

A target asset's day is labeled Low / Normal / High by comparing its measure
value against lower and upper quantile thresholds.  Per state, the dominant
transmitter into the target is the argmax of net pairwise directional
connectedness at the matching quantile; the regressor takes the transmitter's
one-day-lagged measure value, switching transmitters as the state switches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panels import MeasurePanel

LOW, NORMAL, HIGH = "Low", "Normal", "High"
STATES = (LOW, NORMAL, HIGH)


@dataclass
class StateConfig:
    tau_low: float = 0.05
    tau_high: float = 0.95
    tau_mid: float = 0.5

    def __post_init__(self):
        if not 0 < self.tau_low < self.tau_high < 1:
            raise ValueError(f"need 0 < tau_low < tau_high < 1; "
                             f"got ({self.tau_low}, {self.tau_high})")

    def tau_for_state(self, state: str) -> float:
        return {LOW: self.tau_low, NORMAL: self.tau_mid,
                HIGH: self.tau_high}[state]


@dataclass
class StateLabelSeries:
    labels: np.ndarray           # array of state strings, one per day
    q_low: float
    q_high: float
    degenerate: bool = False

    def __len__(self):
        return len(self.labels)


def classify_states(series: np.ndarray, cfg: StateConfig,
                    fit_length: int | None = None) -> StateLabelSeries:
    """Label every day Low / Normal / High against estimation-sample quantiles.

    Thresholds are the type-7 empirical quantiles of ``series[:fit_length]``
    (the estimation sample; default the whole series), then applied to all
    days, so no forecast-period value moves a threshold.  A value at or below
    the lower threshold is Low, at or above the upper one High.  When the two
    thresholds coincide (a constant or heavily tied series) every day is
    Normal and the degenerate flag is set.
    """
    v = np.asarray(series, dtype=float)
    if v.ndim != 1 or v.size < 20:
        raise ValueError("need a 1-D series of at least 20 values")
    if not np.all(np.isfinite(v)):
        raise ValueError("state series contains non-finite values")
    fit = v if fit_length is None else v[:fit_length]
    if fit.size < 20:
        raise ValueError("estimation sample must hold at least 20 values")
    q_low, q_high = np.quantile(fit, [cfg.tau_low, cfg.tau_high])
    if q_low >= q_high:
        return StateLabelSeries(np.array([NORMAL] * v.size, dtype=object),
                                float(q_low), float(q_high), degenerate=True)
    labels = np.array([NORMAL] * v.size, dtype=object)
    labels[v <= q_low] = LOW
    labels[v >= q_high] = HIGH
    return StateLabelSeries(labels, float(q_low), float(q_high))


@dataclass
class SourceMap:
    """Dominant spillover source into the target, per market state."""

    target: str
    sources: dict[str, str]        # state -> source asset
    npdc_values: dict[str, float]  # state -> NPDC of the chosen source

    def __post_init__(self):
        for state, src in self.sources.items():
            if src == self.target:
                raise ValueError(f"state {state}: source equals target "
                                 f"{self.target!r}")


def select_sources(npdc_by_quantile: dict[float, dict[str, float]],
                   target: str, cfg: StateConfig) -> SourceMap:
    """Pick the argmax-NPDC transmitter per state; ties go to the smaller symbol.

    ``npdc_by_quantile`` maps each of the three state quantiles to a
    {asset: NPDC into target} table excluding the target itself.
    """
    sources, values = {}, {}
    for state in STATES:
        tau = cfg.tau_for_state(state)
        if tau not in npdc_by_quantile:
            raise ValueError(f"missing quantile {tau} for state {state}; "
                             f"have {sorted(npdc_by_quantile)}")
        table = {a: v for a, v in npdc_by_quantile[tau].items() if a != target}
        if not table:
            raise ValueError("no candidate sources besides the target")
        # max() keeps the first of equal values; iterating in sorted order
        # makes that the lexicographically smallest symbol
        best = max(sorted(table), key=lambda a: table[a])
        sources[state] = best
        values[state] = float(table[best])
    return SourceMap(target, sources, values)


@dataclass
class SpilloverFeatureSeries:
    """The state-adaptive regressor: lagged source value per day."""

    target: str
    days: list                 # day labels, first panel day dropped
    values: np.ndarray         # (T-1,) measure units
    states: np.ndarray         # state label used at each day
    sources_used: np.ndarray   # source asset chosen at each day
    next_value: float | None = None  # day-(T+1) value, known when labels lag

    def __len__(self):
        return len(self.days)


def build_spillover_feature(source_panel: MeasurePanel,
                            states: StateLabelSeries, sources: SourceMap,
                            label_lag: int = 0) -> SpilloverFeatureSeries:
    """Assemble X_t = (state's source asset measure at t-1); day one dropped.

    ``label_lag=0`` uses the day-t state label (contemporaneous regime);
    ``label_lag=1`` uses the day t-1 label, which keeps the regressor fully
    formable one day ahead for forecasting.  The measure value is always the
    source's day t-1 value.
    """
    if label_lag not in (0, 1):
        raise ValueError("label_lag must be 0 or 1")
    if len(states) != len(source_panel.days):
        raise ValueError("state labels and panel must cover the same days")
    for state, src in sources.sources.items():
        if src not in source_panel.assets:
            raise ValueError(f"source asset {src!r} (state {state}) missing "
                             f"from panel assets {source_panel.assets}")
    n_days = len(source_panel.days)
    vals = np.empty(n_days - 1)
    used_states = np.empty(n_days - 1, dtype=object)
    used_sources = np.empty(n_days - 1, dtype=object)
    for t in range(1, n_days):
        state = states.labels[t - label_lag]
        src = sources.sources[state]
        vals[t - 1] = source_panel.values[t - 1,
                                          source_panel.assets.index(src)]
        used_states[t - 1] = state
        used_sources[t - 1] = src
    next_value = None
    if label_lag == 1:
        # the day after the panel: its label comes from the last observed
        # day, so the regressor value is already known
        src = sources.sources[states.labels[n_days - 1]]
        next_value = float(source_panel.values[n_days - 1,
                                               source_panel.assets.index(src)])
    return SpilloverFeatureSeries(sources.target, list(source_panel.days[1:]),
                                  vals, used_states, used_sources, next_value)
