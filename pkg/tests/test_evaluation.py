import numpy as np
import pytest

from spillhar.evaluation import (ForecastRun, bartlett_lrv, loss_suite, mcs,
                                 moving_block_indices, qlike, r2_oos,
                                 rolling_forecast)


def make_run(preds, targets, h=1, model="m"):
    n = len(preds)
    return ForecastRun(model, h, "expanding", list(range(n)),
                       np.asarray(preds, float), np.asarray(targets, float))


class TestRollingForecast:
    def test_constant_series_predicts_constant(self):
        data = np.full(60, 1.7)
        run = rolling_forecast(lambda lo, hi: data[lo:hi].mean(), 60, 1, 10,
                               targets=np.full(10, 1.7))
        np.testing.assert_allclose(run.predictions, 1.7)
        assert len(run.failures) == 0

    def test_span_and_consecutive_dates(self):
        run = rolling_forecast(lambda lo, hi: 0.0, 100, 5, 20,
                               scheme="rolling_fixed", window=40,
                               targets=np.zeros(20))
        assert run.predictions.size == 20
        assert list(run.dates) == list(range(76, 96))

    def test_window_bounds_passed_to_fitter(self):
        seen = []
        rolling_forecast(lambda lo, hi: seen.append((lo, hi)) or 0.0,
                         50, 1, 5, scheme="rolling_fixed", window=30,
                         targets=np.zeros(5))
        assert seen[0] == (15, 45)
        assert seen[-1] == (19, 49)
        for lo, hi in seen:
            assert hi - lo == 30

    def test_matches_frozen_model_loop_oracle(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal(80)
        fit_predict = lambda lo, hi: 0.5 * data[hi - 1]
        targets = data[1:]

        run = rolling_forecast(fit_predict, 80, 1, 15,
                               targets=targets[-15:][..., None].ravel())
        manual = [0.5 * data[o] for o in range(80 - 1 - 15, 80 - 1)]
        np.testing.assert_allclose(run.predictions, manual)

    def test_per_date_failures_recorded_and_skipped(self):
        def flaky(lo, hi):
            if hi % 7 == 0:
                raise RuntimeError("window exploded")
            return 1.0

        run = rolling_forecast(flaky, 100, 1, 21, targets=np.zeros(21))
        assert len(run.failures) == 3
        assert run.predictions.size == 18
        assert all("window exploded" in msg for _, msg in run.failures)

    def test_insufficient_data_rejected(self):
        with pytest.raises(ValueError, match="need at least"):
            rolling_forecast(lambda lo, hi: 0.0, 30, 5, 20,
                             scheme="rolling_fixed", window=20)


class TestLossSuite:
    def test_perfect_forecast_gives_zero_losses(self):
        run = make_run([0.3, -0.1, 0.9], [0.3, -0.1, 0.9])
        out = loss_suite(run)
        for name in ("MSE", "MAE", "RMSE", "QLIKE"):
            assert out[name] == pytest.approx(0.0, abs=1e-15)

    def test_constant_error(self):
        run = make_run([1.2, 1.2], [1.0, 1.0])
        out = loss_suite(run)
        assert out["MSE"] == pytest.approx(0.04)
        assert out["MAE"] == pytest.approx(0.2)
        assert out["RMSE"] == pytest.approx(0.2)

    def test_matches_per_date_loop_oracle(self):
        rng = np.random.default_rng(2)
        preds = rng.standard_normal(50)
        targets = rng.standard_normal(50)
        out = loss_suite(make_run(preds, targets))
        mse = sum((p - t) ** 2 for p, t in zip(preds, targets)) / 50
        mae = sum(abs(p - t) for p, t in zip(preds, targets)) / 50
        ql = sum(np.exp(t) / np.exp(p) - (t - p) - 1
                 for p, t in zip(preds, targets)) / 50
        assert out["MSE"] == pytest.approx(mse, rel=1e-12)
        assert out["MAE"] == pytest.approx(mae, rel=1e-12)
        assert out["RMSE"] == pytest.approx(np.sqrt(mse), rel=1e-12)
        assert out["QLIKE"] == pytest.approx(ql, rel=1e-12)

    def test_rmse_squared_is_mse(self):
        rng = np.random.default_rng(3)
        out = loss_suite(make_run(rng.standard_normal(40),
                                  rng.standard_normal(40)))
        assert out["RMSE"] ** 2 == pytest.approx(out["MSE"], rel=1e-12)

    def test_qlike_nonnegative_zero_iff_equal(self):
        y = np.array([0.5, 1.0, 2.0])
        f = np.array([0.5, 1.3, 1.9])
        vals = qlike(y, f)
        assert np.all(vals >= 0)
        assert vals[0] == pytest.approx(0.0, abs=1e-15)
        assert vals[1] > 0

    def test_level_scale_flags_bad_forecasts(self):
        run = make_run([1.0, -0.5, 2.0], [1.0, 1.0, 2.0])
        out = loss_suite(run, log_scale=False)
        assert out["qlike_errors"] == [1]


class TestMcs:
    @staticmethod
    def noisy_losses(seed, T=150, M=5, best=2, margin=0.15):
        rng = np.random.default_rng(seed)
        common = rng.standard_normal((T, 1))
        L = 1.0 + 0.6 * common + 0.5 * rng.standard_normal((T, M))
        L[:, best] -= margin
        return L

    def test_dominant_model_ranks_first_and_survives_alone(self):
        rng = np.random.default_rng(0)
        T = 200
        L = np.column_stack([
            0.1 + 0.01 * rng.standard_normal(T),
            1.0 + 0.01 * rng.standard_normal(T),
            1.1 + 0.01 * rng.standard_normal(T),
            1.2 + 0.01 * rng.standard_normal(T),
        ])
        res = mcs(L, ["good", "b1", "b2", "b3"], alpha=0.25, reps=400, seed=1)
        for stat in ("T_max", "T_R"):
            assert res.by_statistic[stat].ranks["good"] == 1
            assert res.by_statistic[stat].survivors == ["good"]

    def test_identical_columns_all_survive(self):
        L = np.tile(np.random.default_rng(1).standard_normal(60)[:, None], 3)
        res = mcs(L, ["a", "b", "c"], seed=0)
        assert res.degenerate
        for stat in ("T_max", "T_R"):
            assert res.by_statistic[stat].survivors == ["a", "b", "c"]
            assert res.by_statistic[stat].ranks == {"a": 1, "b": 2, "c": 3}

    def test_ranks_are_permutation(self):
        L = self.noisy_losses(5)
        res = mcs(L, [f"m{i}" for i in range(5)], reps=200, seed=2)
        for stat in ("T_max", "T_R"):
            assert sorted(res.by_statistic[stat].ranks.values()) == [1, 2, 3,
                                                                     4, 5]

    def test_best_model_coverage(self):
        hits = 0
        n_seeds = 200
        for seed in range(n_seeds):
            L = self.noisy_losses(seed)
            res = mcs(L, [f"m{i}" for i in range(5)], alpha=0.25, reps=200,
                      block_length=10, seed=seed)
            hits += res.survived("T_max", "m2") and res.survived("T_R", "m2")
        assert hits / n_seeds >= 0.90

    def test_survival_set_shrinks_with_alpha(self):
        L = self.noisy_losses(7, margin=0.10)
        names = [f"m{i}" for i in range(5)]
        sets = []
        for alpha in (0.05, 0.25, 0.75):
            res = mcs(L, names, alpha=alpha, reps=400, seed=3)
            sets.append(set(res.by_statistic["T_max"].survivors))
        assert sets[2] <= sets[1] <= sets[0]

    def test_needs_enough_rows_and_models(self):
        with pytest.raises(ValueError, match="30"):
            mcs(np.ones((10, 3)), ["a", "b", "c"])
        with pytest.raises(ValueError, match="two"):
            mcs(np.ones((50, 1)), ["a"])


class TestMovingBlockIndices:
    def test_shape_and_range(self):
        idx = moving_block_indices(100, 22, 50, np.random.default_rng(0))
        assert idx.shape == (50, 100)
        assert idx.min() >= 0 and idx.max() < 100

    def test_blocks_are_contiguous(self):
        idx = moving_block_indices(50, 10, 5, np.random.default_rng(1))
        for row in idx:
            for start in range(0, 50, 10):
                block = row[start:start + 10]
                np.testing.assert_array_equal(np.diff(block), 1)


class TestR2Oos:
    def test_identical_forecasts_flagged(self):
        y = np.random.default_rng(0).standard_normal(50)
        f = y + 0.5
        out = r2_oos(make_run(f, y), make_run(f, y, model="b"))
        assert out.flagged
        assert out.r2_oos == pytest.approx(0.0)

    def test_perfect_model_gives_one(self):
        y = np.random.default_rng(1).standard_normal(50)
        out = r2_oos(make_run(y, y), make_run(y + 1.0, y, model="b"))
        assert out.r2_oos == pytest.approx(1.0)

    def test_swap_identity(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal(80)
        m = y + 0.3 * rng.standard_normal(80)
        b = y + 0.8 * rng.standard_normal(80)
        fwd = r2_oos(make_run(m, y), make_run(b, y, model="b"))
        rev = r2_oos(make_run(b, y), make_run(m, y, model="b"))
        assert rev.r2_oos == pytest.approx(1 - 1 / (1 - fwd.r2_oos), rel=1e-12)

    def test_nested_signal_power(self):
        rejections = 0
        for seed in range(200):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(150)
            y = 0.5 * x + rng.standard_normal(150)
            out = r2_oos(make_run(0.5 * x, y),
                         make_run(np.zeros(150), y, model="b"))
            rejections += out.p_value < 0.05
        assert rejections / 200 >= 0.80

    def test_zero_benchmark_sse_rejected(self):
        y = np.ones(30)
        with pytest.raises(ValueError, match="zero"):
            r2_oos(make_run(y + 0.1, y), make_run(y, y, model="b"))

    def test_misaligned_dates_rejected(self):
        a = make_run(np.zeros(10), np.zeros(10))
        b = ForecastRun("b", 1, "expanding", list(range(1, 11)), np.zeros(10),
                        np.zeros(10))
        with pytest.raises(ValueError, match="identical dates"):
            r2_oos(a, b)

    def test_bartlett_variance_matches_manual(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(60)
        lags = 3
        xc = x - x.mean()
        manual = xc @ xc / 60
        for l in range(1, lags + 1):
            manual += 2 * (1 - l / (lags + 1)) * (xc[l:] @ xc[:-l]) / 60
        assert bartlett_lrv(x, lags) == pytest.approx(manual, rel=1e-12)
