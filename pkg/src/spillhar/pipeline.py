"""File-driven pipeline stages behind the CLI.

Each stage reads its inputs from the output directory (or the configured
price CSV), writes its artifacts there, and is idempotent given identical
inputs and seed.  The rolling forecast stage re-derives market states,
spillover sources, and the regression design from the trailing window only,
so nothing from the evaluation span leaks into any forecast.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .evaluation import LOSS_NAMES, ForecastRun, loss_suite, mcs, r2_oos, \
    rolling_forecast
from .garch import fit_garch, log_variance_forecast
from .har import (MODEL_VARIANTS, HarSpec, build_har_design, fit_lasso,
                  fit_ols, har_regressor_matrix, predict)
from .measures import MeasureParams, build_measure_panel, pooled_rex_thresholds
from .panels import COMPONENT_SETS, MEASURE_KINDS, MeasurePanel, ReturnPanel, \
    load_price_csv
from .qvar import QvarSpec, fit_tvp_qvar
from .spillover import average_summary, spillover_time_series
from .states import (StateConfig, StateLabelSeries, build_spillover_feature,
                     classify_states, select_sources)
from .synthetic import DgpConfig, simulate, write_panel_csv

logger = logging.getLogger(__name__)

DEFAULT_MODELS = tuple(MODEL_VARIANTS)
DEFAULT_LAMBDAS = (0.0, 1e-4, 1e-3, 1e-2, 0.1)
SOURCE_QUANTILES = ("tau_low", "tau_mid", "tau_high")


class ConfigError(ValueError):
    """Configuration problem; the offending field is part of the message."""


@dataclass
class PipelineConfig:
    input_csv: str
    target_asset: str
    out_dir: str = "out"
    assets: list[str] | None = None
    synthetic: dict | None = None
    grid_seconds: int = 300
    min_intraday_obs: int = 12
    measures: tuple[str, ...] = tuple(MEASURE_KINDS)
    jump_alpha: float = 0.99
    rex_quantiles: tuple[float, float] = (0.05, 0.95)
    rk_bandwidth: int | None = None
    qvar: QvarSpec = field(default_factory=QvarSpec)
    states: StateConfig = field(default_factory=StateConfig)
    models: tuple[str, ...] = DEFAULT_MODELS
    lasso_lambdas: tuple[float, ...] = DEFAULT_LAMBDAS
    log_offset: float = 1e-8
    response_kind: str = "RV"
    oos_days: int = 300
    horizons: tuple[int, ...] = (1, 5, 22)
    scheme: str = "rolling_fixed"
    window: int | None = None          # None -> the initial estimation span
    source_refresh: int = 1
    mcs_alpha: float = 0.25
    mcs_reps: int = 1000
    mcs_block: int = 22
    loss_scale: str = "log"
    benchmark: str = "GARCH11"
    seed: int = 0
    threads: int | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        for req in ("input_csv", "target_asset"):
            if req not in data:
                raise ConfigError(f"config field {req!r} is required")
        try:
            qvar = QvarSpec(**data.pop("qvar", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'qvar': {exc}") from exc
        try:
            states = StateConfig(**data.pop("states", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config field 'states': {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(qvar=qvar, states=states, **data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") \
                from None
        return cls.from_dict(data)

    def validate(self):
        self.measures = tuple(self.measures)
        self.models = tuple(self.models)
        self.horizons = tuple(int(h) for h in self.horizons)
        bad = [m for m in self.measures if m not in MEASURE_KINDS]
        if bad:
            raise ConfigError(f"config field 'measures': unknown kinds {bad}")
        bad = [m for m in self.models if m not in MODEL_VARIANTS]
        if bad:
            raise ConfigError(f"config field 'models': unknown models {bad}")
        if self.response_kind not in self.measures:
            raise ConfigError("config field 'response_kind': "
                              f"{self.response_kind!r} not in measures")
        if self.scheme not in ("rolling_fixed", "expanding"):
            raise ConfigError(f"config field 'scheme': {self.scheme!r}")
        if self.loss_scale not in ("log", "level"):
            raise ConfigError(f"config field 'loss_scale': {self.loss_scale!r}")
        if self.benchmark not in ("GARCH11", "GJR"):
            raise ConfigError(f"config field 'benchmark': {self.benchmark!r}")
        if self.oos_days < max(self.horizons) + 1:
            raise ConfigError("config field 'oos_days': too small for the "
                              "largest horizon")
        if self.source_refresh < 1:
            raise ConfigError("config field 'source_refresh': must be >= 1")
        needed = set()
        for m in self.models:
            family = MODEL_VARIANTS[m][0]
            needed.update(COMPONENT_SETS[family])
        missing = sorted(needed - set(self.measures))
        if missing:
            raise ConfigError(f"config field 'measures': models need {missing}")
        if self.synthetic is not None:
            try:
                DgpConfig(**self.synthetic)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config field 'synthetic': {exc}") from exc

    # -- derived quantities ------------------------------------------------
    def measure_params(self, est_end: int | None) -> MeasureParams:
        return MeasureParams(jump_alpha=self.jump_alpha,
                             rex_quantiles=tuple(self.rex_quantiles),
                             rex_threshold_end_day=est_end,
                             rk_bandwidth=self.rk_bandwidth)

    def har_spec(self, model: str) -> HarSpec:
        return HarSpec.for_variant(model, lasso_lambdas=self.lasso_lambdas,
                                   log_offset=self.log_offset)

    def source_taus(self) -> tuple[float, float, float]:
        return (self.states.tau_low, self.states.tau_mid,
                self.states.tau_high)

    def n_threads(self) -> int:
        return self.threads or os.cpu_count() or 1

    def out_path(self, name: str) -> Path:
        return Path(self.out_dir) / name


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing upstream artifact: {path}; "
                                "run the earlier pipeline stage first")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_simulate(cfg: PipelineConfig):
    if cfg.synthetic is None:
        raise ConfigError("config field 'synthetic' is required for simulate")
    dgp = DgpConfig(**{**cfg.synthetic, "seed": cfg.synthetic.get("seed",
                                                                  cfg.seed)})
    panel, truth = simulate(dgp)
    Path(cfg.input_csv).parent.mkdir(parents=True, exist_ok=True)
    write_panel_csv(panel, cfg.input_csv)
    _write_json(cfg.out_path("simulation_truth.json"), {
        "source": panel.assets[truth.source],
        "target": panel.assets[truth.target],
        "high_threshold": truth.high_threshold,
        "n_jump_days": int(truth.jump_days.sum()),
        "seed": dgp.seed,
    })
    logger.info("wrote synthetic prices for %d assets x %d days to %s",
                panel.n_assets, panel.n_days, cfg.input_csv)
    return panel


def load_panel(cfg: PipelineConfig) -> ReturnPanel:
    path = _require(Path(cfg.input_csv))
    panel = load_price_csv(path, grid_seconds=cfg.grid_seconds,
                           min_obs=cfg.min_intraday_obs, assets=cfg.assets)
    if cfg.target_asset not in panel.assets:
        raise ConfigError(f"config field 'target_asset': {cfg.target_asset!r} "
                          f"not among input assets {panel.assets}")
    return panel


def stage_measures(cfg: PipelineConfig):
    panel = load_panel(cfg)
    est_end = max(panel.n_days - cfg.oos_days, 1)
    params = cfg.measure_params(est_end)
    for kind in cfg.measures:
        mp = build_measure_panel(panel, kind, params)
        mp.write_csv(cfg.out_path(f"measures_{kind}.csv"))
    logger.info("wrote %d measure panels (%d days)", len(cfg.measures),
                panel.n_days)


def read_measure_panels(cfg: PipelineConfig) -> dict[str, MeasurePanel]:
    out = {}
    for kind in cfg.measures:
        path = _require(cfg.out_path(f"measures_{kind}.csv"))
        out[kind] = MeasurePanel.read_csv(path, kind)
    return out


def _panel_slice(panel: MeasurePanel, lo: int, hi: int) -> MeasurePanel:
    return MeasurePanel(panel.measure_kind, list(panel.assets),
                        list(panel.days[lo:hi]), panel.values[lo:hi])


def _npdc_by_quantile(panel: MeasurePanel, cfg: PipelineConfig,
                      quantiles: tuple[float, ...]) -> dict[float, dict]:
    spec = QvarSpec(lag_order=cfg.qvar.lag_order, quantiles=quantiles,
                    horizon=cfg.qvar.horizon, tvp_mode=cfg.qvar.tvp_mode,
                    forgetting=cfg.qvar.forgetting, window=cfg.qvar.window,
                    log_offset=cfg.qvar.log_offset,
                    weight_eps=cfg.qvar.weight_eps, sweeps=cfg.qvar.sweeps)
    fit = fit_tvp_qvar(panel, spec)
    paths = spillover_time_series(fit)
    return {tau: paths[tau].mean_npdc_to(cfg.target_asset)
            for tau in quantiles}


def stage_spillover(cfg: PipelineConfig):
    panels = read_measure_panels(cfg)
    est_end = max(next(iter(panels.values())).values.shape[0] - cfg.oos_days,
                  1)

    def one_kind(kind: str):
        panel = panels[kind]
        fit = fit_tvp_qvar(panel, cfg.qvar)
        paths = spillover_time_series(fit)
        for tau, path in paths.items():
            path.to_frame().to_csv(
                cfg.out_path(f"spillover_{kind}_{tau:g}.csv"), index=False)
        plot = pd.concat([pd.DataFrame({"date": p.days, "tau": f"{tau:g}",
                                        "tsi": p.tsi})
                          for tau, p in sorted(paths.items())])
        plot.to_csv(cfg.out_path(f"plot_tsi_{kind}.tsv"), sep="\t",
                    index=False)
        est_fit = fit_tvp_qvar(_panel_slice(panel, 0, est_end), cfg.qvar)
        est_paths = spillover_time_series(est_fit)
        _write_json(cfg.out_path(f"spillover_summary_{kind}.json"),
                    average_summary(est_paths, target=cfg.target_asset))

    with ThreadPoolExecutor(max_workers=cfg.n_threads()) as pool:
        list(pool.map(one_kind, cfg.measures))
    logger.info("wrote spillover paths and summaries for %s", cfg.measures)


def stage_features(cfg: PipelineConfig):
    panels = read_measure_panels(cfg)
    n_days = next(iter(panels.values())).values.shape[0]
    est_end = max(n_days - cfg.oos_days, 1)
    taus = cfg.source_taus()
    sources_payload = {}
    for kind in cfg.measures:
        panel = panels[kind]
        npdc = _npdc_by_quantile(_panel_slice(panel, 0, est_end), cfg, taus)
        sources = select_sources(npdc, cfg.target_asset, cfg.states)
        states = classify_states(panel.series(cfg.target_asset), cfg.states,
                                 fit_length=est_end)
        feat = build_spillover_feature(panel, states, sources)
        pd.DataFrame({
            "date": [d.date() for d in feat.days],
            "state": feat.states,
            "source": feat.sources_used,
            "value": feat.values,
        }).to_csv(cfg.out_path(f"sa_feature_{cfg.target_asset}_{kind}.csv"),
                  index=False)
        sources_payload[kind] = {
            "sources": sources.sources,
            "npdc": sources.npdc_values,
            "state_thresholds": {"low": states.q_low, "high": states.q_high},
            "degenerate_states": states.degenerate,
        }
    _write_json(cfg.out_path(f"sources_{cfg.target_asset}.json"),
                sources_payload)
    logger.info("wrote state-adaptive features for %s", cfg.measures)


def _read_features(cfg: PipelineConfig, kinds) -> dict:
    out = {}
    for kind in kinds:
        path = _require(cfg.out_path(f"sa_feature_{cfg.target_asset}_{kind}.csv"))
        df = pd.read_csv(path)
        from .states import SpilloverFeatureSeries
        days = [pd.Timestamp(d) for d in df["date"]]
        out[kind] = SpilloverFeatureSeries(
            cfg.target_asset, days, df["value"].to_numpy(float),
            df["state"].to_numpy(object), df["source"].to_numpy(object))
    return out


def stage_fit(cfg: PipelineConfig):
    panels = read_measure_panels(cfg)
    n_days = next(iter(panels.values())).values.shape[0]
    est_end = max(n_days - cfg.oos_days, 1)
    est_panels = {k: _panel_slice(p, 0, est_end) for k, p in panels.items()}
    for model in cfg.models:
        spec = cfg.har_spec(model)
        features = None
        if spec.include_spillover:
            features = _read_features(cfg, spec.components)
        design = build_har_design(est_panels, cfg.target_asset, spec,
                                  response_kind=cfg.response_kind,
                                  features=features)
        fit = fit_lasso(design, spec.lasso_lambdas) if spec.is_lasso \
            else fit_ols(design)
        payload = {
            "model": model,
            "coefficients": fit.coef_dict(),
            "adj_r2": fit.adj_r2,
            "r2": fit.r2,
            "aic": fit.aic,
            "bic": fit.bic,
            "n_obs": fit.n_obs,
            "residual_variance": fit.residual_variance,
        }
        if fit.std_errors is not None:
            names = ["intercept"] + list(fit.columns)
            payload["std_errors"] = dict(zip(names, fit.std_errors.tolist()))
        if fit.lam is not None:
            payload["lambda"] = fit.lam
        _write_json(cfg.out_path(f"fit_{model}.json"), payload)
    logger.info("wrote in-sample fits for %d models", len(cfg.models))


class _SaContext:
    """Per-window spillover context, refreshed every ``source_refresh`` steps.

    Sources and state thresholds are re-estimated from the refresh window
    (always inside the training data); labels and feature values always come
    from the current window.
    """

    def __init__(self, cfg: PipelineConfig, panels):
        self.cfg = cfg
        self.panels = panels
        self._cache: dict = {}

    def feature(self, kind: str, lo: int, hi: int):
        cfg = self.cfg
        # quantize the window end (and slide the start with it) so the
        # expensive source estimation reruns once per refresh bucket
        ref_hi = max(hi - (hi % cfg.source_refresh), lo + 2)
        ref_lo = max(lo - (hi - ref_hi), 0)
        key = (kind, ref_lo, ref_hi)
        if key not in self._cache:
            window = _panel_slice(self.panels[kind], ref_lo, ref_hi)
            npdc = _npdc_by_quantile(window, cfg, cfg.source_taus())
            sources = select_sources(npdc, cfg.target_asset, cfg.states)
            ref_states = classify_states(window.series(cfg.target_asset),
                                         cfg.states)
            self._cache[key] = (sources, ref_states.q_low, ref_states.q_high)
        sources, q_low, q_high = self._cache[key]
        window = _panel_slice(self.panels[kind], lo, hi)
        series = window.series(cfg.target_asset)
        labels = np.array(["Normal"] * series.size, dtype=object)
        if q_low < q_high:
            labels[series <= q_low] = "Low"
            labels[series >= q_high] = "High"
        states = StateLabelSeries(labels, q_low, q_high,
                                  degenerate=q_low >= q_high)
        return build_spillover_feature(window, states, sources, label_lag=1)


def _forward_mean(values: np.ndarray, h: int) -> np.ndarray:
    out = np.full(values.size, np.nan)
    c = np.concatenate([[0.0], np.cumsum(values)])
    if h == 1:
        out[:-1] = values[1:]
    else:
        out[:values.size - h] = (c[1 + h:] - c[1:-h]) / h
    return out


def _har_fit_predict(cfg, panels, model, h, sa_ctx):
    spec = cfg.har_spec(model)
    delta = spec.log_offset
    rv = panels[cfg.response_kind].series(cfg.target_asset)

    def fit_predict(lo: int, hi: int) -> float:
        window = {k: _panel_slice(panels[k], lo, hi)
                  for k in set(spec.components) | {cfg.response_kind}}
        features = None
        if spec.include_spillover:
            features = {k: sa_ctx.feature(k, lo, hi) for k in spec.components}
        X_ext, _ = har_regressor_matrix(window, cfg.target_asset, spec,
                                        features)
        logrv = np.log(rv[lo:hi] + delta)
        fwd = _forward_mean(logrv, h)
        L = hi - lo
        rows = np.arange(22, L - h + 1)
        rows = rows[np.all(np.isfinite(X_ext[rows]), axis=1)
                    & np.isfinite(fwd[rows])]
        if rows.size < X_ext.shape[1] + 2:
            raise ValueError(f"window [{lo},{hi}) leaves {rows.size} rows "
                             f"for {X_ext.shape[1]} regressors")
        from .har import HarDesign
        design = HarDesign(fwd[rows], X_ext[rows],
                           [f"c{j}" for j in range(X_ext.shape[1])],
                           rows.tolist())
        fit = fit_lasso(design, spec.lasso_lambdas) if spec.is_lasso \
            else fit_ols(design)
        x_pred = X_ext[L]
        if not np.all(np.isfinite(x_pred)):
            raise ValueError("next-day regressor row is undefined")
        return float(predict(fit, x_pred[None, :])[0])

    return fit_predict


def _garch_fit_predict(cfg, daily, h, cache):
    def fit_predict(lo: int, hi: int) -> float:
        key = (lo, hi)
        if key not in cache:
            cache[key] = fit_garch(daily[lo:hi], cfg.benchmark, min_obs=50)
        return log_variance_forecast(cache[key], daily[lo:hi], h,
                                     offset=cfg.log_offset)
    return fit_predict


def stage_forecast(cfg: PipelineConfig):
    panels = read_measure_panels(cfg)
    base = panels[cfg.response_kind]
    n_days = base.values.shape[0]
    est_end = max(n_days - cfg.oos_days, 1)
    window = cfg.window or est_end
    logrv = np.log(base.series(cfg.target_asset) + cfg.log_offset)
    sa_ctx = _SaContext(cfg, panels)
    panel = load_panel(cfg)
    daily = panel.daily_returns(cfg.target_asset)
    garch_cache: dict = {}

    for h in cfg.horizons:
        span = cfg.oos_days - h + 1
        fwd = _forward_mean(logrv, h)
        origins = range(n_days - h - span, n_days - h)
        targets = np.array([fwd[o] for o in origins])
        dates = [base.days[o + 1] for o in origins]
        runs = {}
        for model in cfg.models:
            run = rolling_forecast(
                _har_fit_predict(cfg, panels, model, h, sa_ctx),
                n_days, h, span, scheme=cfg.scheme,
                window=window if cfg.scheme == "rolling_fixed" else None,
                targets=targets, dates=list(base.days), model_id=model)
            runs[model] = run
        runs[cfg.benchmark] = rolling_forecast(
            _garch_fit_predict(cfg, daily, h, garch_cache),
            n_days, h, span, scheme=cfg.scheme,
            window=window if cfg.scheme == "rolling_fixed" else None,
            targets=targets, dates=list(base.days), model_id=cfg.benchmark)
        for model, run in runs.items():
            df = pd.DataFrame({
                "date": [d.date() for d in run.dates],
                "prediction": run.predictions,
                "target": run.targets,
            })
            df.to_csv(cfg.out_path(f"forecasts_{model}_{h}.csv"), index=False)
            if run.failures:
                logger.warning("%s h=%d: %d window failures", model, h,
                               len(run.failures))
        logger.info("h=%d: wrote %d forecast files (%d dates)", h,
                    len(runs), len(dates))

    fit = fit_garch(daily[:est_end], cfg.benchmark, min_obs=50)
    _write_json(cfg.out_path(f"garch_{cfg.target_asset}.json"), {
        "kind": fit.kind, **fit.params_dict(),
        "loglik": fit.loglik, "converged": fit.converged,
    })


def _read_run(cfg, model, h) -> ForecastRun:
    path = _require(cfg.out_path(f"forecasts_{model}_{h}.csv"))
    df = pd.read_csv(path)
    return ForecastRun(model, h, cfg.scheme, list(df["date"]),
                       df["prediction"].to_numpy(float),
                       df["target"].to_numpy(float))


def stage_evaluate(cfg: PipelineConfig):
    log_scale = cfg.loss_scale == "log"
    r2_rows = []
    for h in cfg.horizons:
        runs = {m: _read_run(cfg, m, h) for m in cfg.models}
        bench = _read_run(cfg, cfg.benchmark, h)
        common = set(bench.dates)
        for run in runs.values():
            common &= set(run.dates)
        common = sorted(common)

        def aligned(run):
            pos = {d: i for i, d in enumerate(run.dates)}
            idx = [pos[d] for d in common]
            return ForecastRun(run.model_id, h, run.scheme, common,
                               run.predictions[idx], run.targets[idx])

        losses = {m: loss_suite(aligned(r), log_scale=log_scale)
                  for m, r in runs.items()}
        names = list(cfg.models)
        survivals = {m: 0 for m in names}
        records = []
        for loss_name in LOSS_NAMES:
            matrix = np.column_stack([losses[m]["per_date"][loss_name]
                                      for m in names])
            result = mcs(matrix, names, alpha=cfg.mcs_alpha,
                         reps=cfg.mcs_reps, block_length=cfg.mcs_block,
                         seed=cfg.seed + h)
            for m in names:
                row = {"model": m, "loss": loss_name}
                for stat in ("T_max", "T_R"):
                    sr = result.by_statistic[stat]
                    row[f"{stat.lower()}_rank"] = sr.ranks[m]
                    row[f"{stat.lower()}_survived"] = m in sr.survivors
                    survivals[m] += m in sr.survivors
                records.append(row)
        df = pd.DataFrame(records)
        df["ratio"] = [f"{survivals[m]}/8" for m in df["model"]]
        df.to_csv(cfg.out_path(f"mcs_{h}.csv"), index=False)

        bench_aligned = aligned(bench)
        for m in names:
            out = r2_oos(aligned(runs[m]), bench_aligned)
            r2_rows.append({
                "model": m, "horizon": h, "benchmark": cfg.benchmark,
                "r2_oos": out.r2_oos, "mspe_adjust": out.mspe_adjust,
                "cw_stat": out.cw_stat, "p_value": out.p_value,
                "n": out.n,
            })
    pd.DataFrame(r2_rows).to_csv(cfg.out_path("r2oos.csv"), index=False)
    logger.info("wrote MCS tables and r2oos.csv")


STAGES = {
    "simulate": stage_simulate,
    "measures": stage_measures,
    "spillover": stage_spillover,
    "features": stage_features,
    "fit": stage_fit,
    "forecast": stage_forecast,
    "evaluate": stage_evaluate,
}


def run_all(cfg: PipelineConfig):
    if cfg.synthetic is not None:
        stage_simulate(cfg)  # idempotent: same seed, same bytes
    for name in ("measures", "spillover", "features", "fit", "forecast",
                 "evaluate"):
        logger.info("running stage %s", name)
        STAGES[name](cfg)
