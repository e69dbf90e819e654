import numpy as np
import pytest

from spillhar.measures import realized_variance
from spillhar.synthetic import DgpConfig, simulate


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        cfg = DgpConfig(n_assets=2, n_days=30, steps_per_day=48, seed=7,
                        jump_intensity=0.1, jump_std=0.02, noise_std=1e-4)
        p1, t1 = simulate(cfg)
        p2, t2 = simulate(cfg)
        for i in range(2):
            for d in range(30):
                np.testing.assert_array_equal(p1.returns[i][d],
                                              p2.returns[i][d])
        np.testing.assert_array_equal(t1.iv, t2.iv)

    def test_distinct_seeds_differ(self):
        a, _ = simulate(DgpConfig(n_assets=1, n_days=5, steps_per_day=48,
                                  seed=1))
        b, _ = simulate(DgpConfig(n_assets=1, n_days=5, steps_per_day=48,
                                  seed=2))
        assert not np.array_equal(a.returns[0][0], b.returns[0][0])


class TestGroundTruth:
    def test_zero_intensity_gives_no_jump_days(self):
        _, truth = simulate(DgpConfig(n_assets=2, n_days=40, seed=3,
                                      jump_intensity=0.0))
        assert not truth.jump_days.any()
        assert truth.jump_variation.sum() == 0.0

    def test_jumps_recorded_when_active(self):
        _, truth = simulate(DgpConfig(n_assets=1, n_days=200, seed=4,
                                      jump_intensity=0.5, jump_std=0.05))
        frac = truth.jump_days.mean()
        assert 0.2 < frac < 0.6  # Poisson(0.5): P(at least one) ~ 0.39

    def test_constant_vol_rv_matches_known_iv(self):
        cfg = DgpConfig(n_assets=1, n_days=200, steps_per_day=288, seed=5,
                        vol_of_vol=0.0, cross=0.0, jump_intensity=0.0)
        panel, truth = simulate(cfg)
        iv = np.exp(cfg.log_iv_mean)
        np.testing.assert_allclose(truth.iv, iv, rtol=1e-12)
        rel_err = [abs(realized_variance(panel.returns[0][d]) - iv) / iv
                   for d in range(200)]
        assert np.mean(rel_err) < 0.15
        assert np.mean(rel_err) > 0  # sampling noise present

    def test_rv_unbiased_for_iv(self):
        cfg = DgpConfig(n_assets=1, n_days=1000, steps_per_day=288, seed=6,
                        jump_intensity=0.0)
        panel, truth = simulate(cfg)
        bias = [(realized_variance(panel.returns[0][d]) - truth.iv[d, 0])
                / truth.iv[d, 0] for d in range(1000)]
        assert abs(np.mean(bias)) < 0.02

    def test_high_state_matches_threshold(self):
        cfg = DgpConfig(n_assets=2, n_days=300, seed=8, spill_gain=0.5,
                        high_quantile=0.8)
        _, truth = simulate(cfg)
        manual = truth.log_iv[:, cfg.spill_target] >= truth.high_threshold
        np.testing.assert_array_equal(truth.high_state, manual)
        frac = truth.high_state.mean()
        assert 0.05 < frac < 0.45

    def test_unstable_var_rejected(self):
        with pytest.raises(ValueError, match="unstable"):
            DgpConfig(persistence=1.01).var_matrix()

    def test_source_equals_target_rejected(self):
        with pytest.raises(ValueError, match="source"):
            DgpConfig(n_assets=2, spill_source=0, spill_target=0)
