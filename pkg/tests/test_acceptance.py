"""Acceptance battery: one criterion per test, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; each criterion also asserts, so a plain pytest run enforces them all.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from spillhar.evaluation import ForecastRun, mcs, r2_oos, rolling_forecast
from spillhar.garch import fit_garch
from spillhar.har import HarDesign, fit_lasso, fit_ols
from spillhar.measures import build_measure_panel, realized_kernel, \
    realized_variance
from spillhar.panels import MEASURE_KINDS
from spillhar.pipeline import PipelineConfig, _SaContext, _forward_mean, \
    _har_fit_predict
from spillhar.qvar import QvarSpec, build_var_rows, fit_quantile_regression, \
    fit_tvp_qvar
from spillhar.spillover import SpilloverMatrix, connectedness, cyclicality, \
    gfevd, ma_coefficients
from spillhar.states import StateConfig, select_sources
from spillhar.synthetic import DgpConfig, simulate


def report(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status}: {detail}")
    assert ok, f"criterion {num}: {detail}"


class TestCriterion1MeasureIdentities:
    def test_identities_on_synthetic_panel(self):
        start = time.monotonic()
        cfg = DgpConfig(n_assets=6, n_days=1000, steps_per_day=48, seed=101,
                        jump_intensity=0.05, jump_std=0.01)
        panel, _ = simulate(cfg)
        kinds = ("RV", "RS_plus", "RS_minus", "CV", "CJ", "REX_plus",
                 "REX_minus", "REX_mod")
        panels = {k: build_measure_panel(panel, k).values for k in kinds}
        rv = panels["RV"]

        def rel_gap(total):
            return np.max(np.abs(total - rv) / np.maximum(rv, 1e-300))

        semis = rel_gap(panels["RS_plus"] + panels["RS_minus"])
        jumps = rel_gap(panels["CV"] + panels["CJ"])
        rex = rel_gap(panels["REX_plus"] + panels["REX_minus"]
                      + panels["REX_mod"])
        rk_equal = all(
            realized_kernel(panel.returns[i][d], 0)[0]
            == realized_variance(panel.returns[i][d])
            for i in range(6) for d in range(0, 1000, 97))
        elapsed = time.monotonic() - start
        ok = (semis <= 1e-12 and jumps <= 1e-12 and rex <= 1e-12
              and rk_equal and elapsed < 10)
        report(1, ok, f"semi gap {semis:.1e}, jump gap {jumps:.1e}, "
                      f"rex gap {rex:.1e}, RK(0)==RV {rk_equal}, "
                      f"{elapsed:.1f}s on 1000x6 days")


class TestCriterion2Gfevd:
    def test_row_sums_and_simulation_oracle(self):
        rng = np.random.default_rng(202)
        y = rng.standard_normal((140, 3))
        fit = fit_tvp_qvar(y, QvarSpec(quantiles=(0.05, 0.5, 0.95)))
        worst_row = 0.0
        for tau, qp in fit.by_quantile.items():
            for t in range(0, qp.coefs.shape[0], 13):
                mats = qp.lag_matrices(t, fit.spec.lag_order)
                theta = gfevd(ma_coefficients(mats, 10), qp.sigmas[t]).values
                worst_row = max(worst_row,
                                float(np.max(np.abs(theta.sum(1) - 1))))

        while True:
            phi = rng.uniform(-0.6, 0.6, (2, 2))
            if np.max(np.abs(np.linalg.eigvals(phi))) < 0.9:
                break
        L = np.array([[1.0, 0.0], [0.4, 0.9]])
        sigma = L @ L.T
        H = 10
        theta = gfevd(ma_coefficients([phi], H), sigma).values
        reps = 400_000
        eps = rng.multivariate_normal(np.zeros(2), sigma, size=(reps, H))
        yy = np.zeros((reps, 2))
        num = np.zeros((2, 2))
        e0 = eps[:, 0, :]
        for h in range(H):
            yy = yy @ phi.T + eps[:, h, :]
            cov = (yy - yy.mean(0)).T @ (e0 - e0.mean(0)) / reps
            num += cov**2 / np.diag(sigma)[None, :]
        mc = num / yy.var(axis=0)[:, None]
        mc /= mc.sum(axis=1, keepdims=True)
        gap = float(np.max(np.abs(mc - theta)))
        ok = worst_row <= 1e-10 and gap < 0.02
        report(2, ok, f"row-sum gap {worst_row:.1e}, MC oracle gap {gap:.4f}")


class TestCriterion3Connectedness:
    def test_identities(self):
        rng = np.random.default_rng(303)
        raw = rng.uniform(0.05, 1.0, (6, 6))
        mat = SpilloverMatrix(raw / raw.sum(1, keepdims=True),
                              [f"a{i}" for i in range(6)])
        summ = connectedness(mat)
        antisym = np.array_equal(summ.npdc, -summ.npdc.T)
        net_zero = abs(summ.net.sum()) <= 1e-8
        eye = connectedness(SpilloverMatrix(np.eye(4), list("abcd"))).tsi
        n = 5
        uni = connectedness(SpilloverMatrix(np.full((n, n), 1 / n),
                                            [f"a{i}" for i in range(n)])).tsi
        ok = (antisym and net_zero and eye == 0.0
              and abs(uni - 100 * (n - 1) / n) < 1e-12)
        report(3, ok, f"NPDC antisymmetric {antisym}, sum(net)="
                      f"{summ.net.sum():.1e}, TSI(I)={eye}, "
                      f"TSI(uniform)={uni:.4f}")


class TestCriterion4PaperAnchors:
    def test_cyclicality_and_sources(self):
        dash = cyclicality({0.05: 12.16, 0.95: 16.73}, 0.05, 0.95)
        eth = cyclicality({0.05: 17.62, 0.95: 13.70}, 0.05, 0.95)
        xrp_cj = cyclicality({0.05: 9.40, 0.95: 17.90}, 0.05, 0.95)
        # the published XRP/CJ row displays +8.51 while its own displayed
        # tau-values differ by 8.50; allow one display-rounding unit there
        cyc_ok = (abs(dash - 4.57) < 1e-9 and abs(eth + 3.92) < 1e-9
                  and abs(xrp_cj - 8.51) <= 0.01 + 1e-9)

        rv_cols = {
            0.05: {"DASH": 12.16, "ETH": 17.62, "LTC": 15.02, "XLM": 11.90,
                   "XRP": 17.38},
            0.50: {"DASH": 11.72, "ETH": 19.25, "LTC": 15.16, "XLM": 10.15,
                   "XRP": 15.39},
            0.95: {"DASH": 16.73, "ETH": 13.70, "LTC": 14.67, "XLM": 17.80,
                   "XRP": 24.23},
        }
        sources = select_sources(rv_cols, "BTC",
                                 StateConfig(tau_low=0.05, tau_high=0.95))
        src_ok = (sources.sources["Low"] == "ETH"
                  and sources.sources["Normal"] == "ETH"
                  and sources.sources["High"] == "XRP")
        ok = cyc_ok and src_ok
        report(4, ok, f"cyclicality DASH {dash:+.2f}, ETH {eth:+.2f}, "
                      f"XRP/CJ {xrp_cj:+.2f} (displayed +8.51); "
                      f"sources {sources.sources}")


class TestCriterion5EstimatorRecovery:
    def test_recovery_suite(self):
        # no-forgetting terminal vs full-sample quantile regression
        rng = np.random.default_rng(505)
        T, N = 400, 2
        A = np.array([[0.4, 0.15], [0.1, 0.5]])
        y = np.zeros((T, N))
        for t in range(1, T):
            y[t] = np.array([0.2, -0.1]) + A @ y[t - 1] \
                + 0.3 * rng.standard_normal(N)
        spec = QvarSpec(quantiles=(0.05, 0.5, 0.95), forgetting=1.0)
        fit = fit_tvp_qvar(y, spec)
        Y, Z = build_var_rows(y, 1)
        tvp_gap = max(
            float(np.max(np.abs(fit.by_quantile[tau].terminal_coefs[i]
                                - fit_quantile_regression(Z, Y[:, i],
                                                          tau).coef)))
            for tau in spec.quantiles for i in range(N))

        # median regression vs the exact weighted-median LAD oracle
        x = rng.uniform(0.5, 2.0, 400)
        y1 = 1.3 * x + rng.laplace(0, 0.4, 400)
        ratios = y1 / x
        w = np.abs(x)
        order = np.argsort(ratios)
        oracle = ratios[order][int(np.searchsorted(np.cumsum(w[order]),
                                                   0.5 * w.sum()))]
        lad_gap = abs(fit_quantile_regression(x[:, None], y1, 0.5).coef[0]
                      - oracle)

        # lasso at zero penalty vs least squares
        X = rng.standard_normal((200, 4))
        y2 = 0.3 + X @ rng.uniform(-1, 1, 4) + 0.5 * rng.standard_normal(200)
        design = HarDesign(y2, X, [f"c{i}" for i in range(4)],
                           list(range(200)))
        ols = fit_ols(design)
        lasso = fit_lasso(design, [0.0])
        lasso_gap = max(abs(lasso.intercept - ols.intercept),
                        float(np.max(np.abs(lasso.slopes - ols.slopes))))

        # GARCH(1,1) Monte Carlo recovery
        truth = (0.05, 0.08, 0.90)

        def sim(seed, n=5000, burn=500):
            r = np.empty(n + burn)
            g = np.random.default_rng(seed)
            h = truth[0] / (1 - truth[1] - truth[2])
            for t in range(n + burn):
                r[t] = np.sqrt(h) * g.standard_normal()
                h = truth[0] + truth[1] * r[t] ** 2 + truth[2] * h
            return r[burn:]

        ests = np.array([[f.omega, f.alpha, f.beta] for f in
                         (fit_garch(sim(s), "GARCH11") for s in range(15))])
        garch_z = max(
            abs(ests[:, i].mean() - truth[i])
            / (ests[:, i].std(ddof=1) / np.sqrt(len(ests)))
            for i in range(3))

        ok = (tvp_gap <= 1e-4 and lad_gap <= 1e-4 and lasso_gap <= 1e-6
              and garch_z <= 3)
        report(5, ok, f"tvp-vs-batch {tvp_gap:.1e}, LAD {lad_gap:.1e}, "
                      f"lasso-vs-ols {lasso_gap:.1e}, GARCH max|z| "
                      f"{garch_z:.2f}")


class TestCriterion6ForecastPipeline:
    def test_sa_beats_plain_on_state_coupled_dgp(self):
        start = time.monotonic()

        def one_seed(seed):
            dgp = DgpConfig(n_assets=3, n_days=500, steps_per_day=48,
                            seed=seed, persistence=0.55, cross=0.3,
                            vol_of_vol=0.4, spill_gain=1.0,
                            high_quantile=0.75)
            panel, _ = simulate(dgp)
            panels = {"RV": build_measure_panel(panel, "RV")}
            cfg = PipelineConfig(input_csv="unused", target_asset="A0",
                                 measures=("RV",),
                                 models=("Log-HAR-RV", "SA-Log-HAR-RV"),
                                 oos_days=100, horizons=(1,),
                                 scheme="expanding", source_refresh=10,
                                 seed=seed)
            ctx = _SaContext(cfg, panels)
            logrv = np.log(panels["RV"].series("A0") + cfg.log_offset)
            fwd = _forward_mean(logrv, 1)
            targets = np.array([fwd[o] for o in range(500 - 101, 500 - 1)])
            mses = {}
            for model in cfg.models:
                run = rolling_forecast(
                    _har_fit_predict(cfg, panels, model, 1, ctx),
                    500, 1, 100, scheme="expanding", targets=targets,
                    model_id=model)
                mses[model] = float(np.mean((run.predictions
                                             - run.targets) ** 2))
            return mses["SA-Log-HAR-RV"] < mses["Log-HAR-RV"]

        wins = sum(one_seed(s) for s in range(100))
        elapsed = time.monotonic() - start
        ok = wins >= 80 and elapsed < 300
        report(6, ok, f"SA beats plain in {wins}/100 seeds at h=1, "
                      f"{elapsed:.0f}s")


class TestCriterion7McsCoverage:
    def test_coverage_and_degenerate(self):
        hits = 0
        n_seeds = 200
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            T, M = 150, 5
            common = rng.standard_normal((T, 1))
            L = 1.0 + 0.6 * common + 0.5 * rng.standard_normal((T, M))
            L[:, 2] -= 0.15
            res = mcs(L, [f"m{i}" for i in range(M)], alpha=0.25, reps=200,
                      block_length=10, seed=seed)
            hits += (res.survived("T_max", "m2")
                     and res.survived("T_R", "m2"))
        degenerate = mcs(np.tile(np.random.default_rng(1)
                                 .standard_normal(60)[:, None], 4),
                         list("abcd"), seed=0)
        deg_ok = all(len(degenerate.by_statistic[s].survivors) == 4
                     for s in ("T_max", "T_R"))
        ok = hits / n_seeds >= 0.90 and deg_ok
        report(7, ok, f"best model inside 75% MCS in {hits}/{n_seeds} seeds; "
                      f"degenerate input keeps all models {deg_ok}")


class TestCriterion8R2oosClarkWest:
    def test_perfect_model_and_power(self):
        y = np.random.default_rng(808).standard_normal(60)
        perfect = r2_oos(
            ForecastRun("m", 1, "expanding", list(range(60)), y, y),
            ForecastRun("b", 1, "expanding", list(range(60)), y + 1.0, y))
        rejections = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(150)
            yy = 0.5 * x + rng.standard_normal(150)
            out = r2_oos(
                ForecastRun("m", 1, "expanding", list(range(150)), 0.5 * x,
                            yy),
                ForecastRun("b", 1, "expanding", list(range(150)),
                            np.zeros(150), yy))
            rejections += out.p_value < 0.05
        ok = perfect.r2_oos == pytest.approx(1.0) and rejections >= 160
        report(8, ok, f"perfect model R2oos={perfect.r2_oos:.3f}; CW p<0.05 "
                      f"in {rejections}/200 nested-signal seeds")


ACCEPT_MODELS = tuple(
    m for m in ("Log-HAR-RV", "Log-HAR-CJ", "Log-HAR-RS", "Log-HAR-REX",
                "SA-Log-HAR-RV", "SA-Log-HAR-CJ", "SA-Log-HAR-RS",
                "SA-Log-HAR-REX", "Lasso-SA-Log-HAR-CJ",
                "Lasso-SA-Log-HAR-RS", "Lasso-SA-Log-HAR-REX"))


class TestCriterion9NoLookAhead:
    def test_time_shift_metamorphic(self):
        from spillhar.panels import MeasurePanel
        dgp = DgpConfig(n_assets=3, n_days=190, steps_per_day=48, seed=909,
                        persistence=0.5, cross=0.2, vol_of_vol=0.4,
                        spill_gain=0.6, high_quantile=0.8,
                        jump_intensity=0.1, jump_std=0.01)
        panel, _ = simulate(dgp)
        kinds = ("RV", "CV", "CJ", "RS_plus", "RS_minus", "REX_plus",
                 "REX_minus", "REX_mod")
        panels = {k: build_measure_panel(panel, k) for k in kinds}
        shifted = {k: MeasurePanel(p.measure_kind, list(p.assets),
                                   [d + np.timedelta64(1, "D")
                                    for d in p.days], p.values)
                   for k, p in panels.items()}
        cfg = PipelineConfig(input_csv="unused", target_asset="A0",
                             measures=kinds, models=ACCEPT_MODELS,
                             oos_days=32, horizons=(1, 5, 22),
                             scheme="expanding", source_refresh=16, seed=3)
        all_ok = True
        checked = 0
        for h in cfg.horizons:
            span = cfg.oos_days - h + 1
            for model in cfg.models:
                runs = []
                for pset in (panels, shifted):
                    ctx = _SaContext(cfg, pset)
                    logrv = np.log(pset["RV"].series("A0") + cfg.log_offset)
                    fwd = _forward_mean(logrv, h)
                    origins = range(190 - h - span, 190 - h)
                    targets = np.array([fwd[o] for o in origins])
                    runs.append(rolling_forecast(
                        _har_fit_predict(cfg, pset, model, h, ctx), 190, h,
                        span, scheme="expanding", targets=targets,
                        dates=list(pset["RV"].days), model_id=model))
                base, shift = runs
                same_vals = np.array_equal(base.predictions,
                                           shift.predictions)
                dates_shifted = all(
                    b + np.timedelta64(1, "D") == s
                    for b, s in zip(base.dates, shift.dates))
                all_ok &= same_vals and dates_shifted and not base.failures
                checked += 1
        report(9, all_ok, f"time-shift metamorphic held for {checked} "
                          f"(model, horizon) pairs")


class TestCriterion10Determinism:
    def test_run_all_twice_byte_identical(self, tmp_path):
        config = {
            "input_csv": str(tmp_path / "prices.csv"),
            "target_asset": "A0",
            "out_dir": str(tmp_path / "out1"),
            "synthetic": {"n_assets": 3, "n_days": 170, "steps_per_day": 47,
                          "persistence": 0.5, "cross": 0.2,
                          "vol_of_vol": 0.4, "spill_gain": 0.6,
                          "high_quantile": 0.8, "jump_intensity": 0.05,
                          "jump_std": 0.01},
            "grid_seconds": 1800,
            "measures": ["RV", "RS_plus", "RS_minus"],
            "models": ["Log-HAR-RV", "SA-Log-HAR-RS"],
            "qvar": {"quantiles": [0.05, 0.5, 0.95]},
            "oos_days": 32,
            "horizons": [1],
            "source_refresh": 16,
            "mcs_reps": 100,
            "seed": 77,
        }
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        outs = []
        for out_dir in ("out1", "out2"):
            proc = subprocess.run(
                [sys.executable, "-m", "spillhar.cli", "run-all", "--config",
                 str(cfg_path), "--out", str(tmp_path / out_dir)],
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
            outs.append(tmp_path / out_dir)
        names = sorted(p.name for p in outs[0].iterdir())
        identical = (names == sorted(p.name for p in outs[1].iterdir())
                     and all((outs[0] / n).read_bytes()
                             == (outs[1] / n).read_bytes() for n in names))
        report(10, identical, f"{len(names)} artifacts byte-identical "
                              f"across reruns with the same seed")
