import numpy as np
import pandas as pd
import pytest

from spillhar.panels import MeasurePanel, ReturnPanel, load_price_csv
from spillhar.synthetic import DgpConfig, simulate, write_panel_csv


def test_csv_round_trip_on_grid(tmp_path):
    # 47 returns/day -> 48 price points at exact 1800 s spacing
    cfg = DgpConfig(n_assets=2, n_days=5, steps_per_day=47, seed=3)
    panel, _ = simulate(cfg)
    path = tmp_path / "prices.csv"
    write_panel_csv(panel, path)
    loaded = load_price_csv(path, grid_seconds=1800)
    assert loaded.assets == panel.assets
    assert loaded.n_days == panel.n_days
    for i in range(panel.n_assets):
        for d in range(panel.n_days):
            np.testing.assert_allclose(loaded.returns[i][d],
                                       panel.returns[i][d], atol=1e-12)


def test_loader_drops_short_days(tmp_path):
    ts = []
    for day, n in (("2022-01-01", 30), ("2022-01-02", 5)):
        base = pd.Timestamp(day, tz="UTC")
        ts += [(base + pd.Timedelta(minutes=5 * j), a, 100.0 + j)
               for j in range(n) for a in ("X", "Y")]
    df = pd.DataFrame(ts, columns=["timestamp", "asset", "price"])
    df["timestamp"] = df["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    path = tmp_path / "p.csv"
    df.to_csv(path, index=False)
    panel = load_price_csv(path, min_obs=12)
    assert panel.n_days == 1
    assert panel.days[0].date().isoformat() == "2022-01-01"


def test_loader_requires_columns(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"time": [1], "sym": ["X"], "px": [1.0]}).to_csv(path,
                                                                  index=False)
    with pytest.raises(ValueError, match="columns"):
        load_price_csv(path)


def test_loader_rejects_unknown_asset_filter(tmp_path):
    cfg = DgpConfig(n_assets=1, n_days=3, steps_per_day=47, seed=0)
    panel, _ = simulate(cfg)
    path = tmp_path / "p.csv"
    write_panel_csv(panel, path)
    with pytest.raises(ValueError, match="not present"):
        load_price_csv(path, grid_seconds=1800, assets=["A0", "ZZZ"])


def test_return_panel_validation():
    days = [pd.Timestamp("2022-01-01", tz="UTC")]
    with pytest.raises(ValueError, match="empty"):
        ReturnPanel(["X"], days, [[np.array([])]]).validate()
    with pytest.raises(ValueError, match="day count"):
        ReturnPanel(["X"], days, [[np.ones(3), np.ones(3)]])


def test_measure_panel_csv_round_trip(tmp_path):
    days = [pd.Timestamp("2022-01-01", tz="UTC") + pd.Timedelta(days=d)
            for d in range(4)]
    values = np.random.default_rng(0).uniform(1e-5, 1e-3, size=(4, 2))
    mp = MeasurePanel("RV", ["X", "Y"], days, values)
    path = tmp_path / "rv.csv"
    mp.write_csv(path)
    back = MeasurePanel.read_csv(path, "RV")
    assert back.assets == ["X", "Y"]
    np.testing.assert_allclose(back.values, values, rtol=1e-12)


def test_measure_panel_rejects_negative():
    days = [pd.Timestamp("2022-01-01", tz="UTC")]
    with pytest.raises(ValueError, match="negative"):
        MeasurePanel("RV", ["X"], days, np.array([[-1.0]]))
