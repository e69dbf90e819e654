"""Variance decompositions and connectedness indices.

Turns fitted VAR coefficient paths into generalized forecast-error variance
decomposition (GFEVD) shares, and those shares into the connectedness
battery: total spillover, directional to/from shares, net spillovers, and
net pairwise directional connectedness (NPDC).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import _kernels
from .qvar import QvarFit


class ExplosiveVarWarning(UserWarning):
    """Spectral radius of the companion matrix exceeds one."""


def companion_matrix(lag_matrices: list[np.ndarray]) -> np.ndarray:
    mats = [np.asarray(m, dtype=float) for m in lag_matrices]
    n = mats[0].shape[0]
    p = len(mats)
    comp = np.zeros((n * p, n * p))
    comp[:n, :] = np.hstack(mats)
    if p > 1:
        comp[n:, :-n] = np.eye(n * (p - 1))
    return comp


def ma_coefficients(lag_matrices: list[np.ndarray], horizon: int) -> np.ndarray:
    """Moving-average matrices A_0..A_{H-1} of a VAR(p).

    A_0 = I and A_h = sum_{l=1..min(h,p)} Phi_l A_{h-l}.  Explosive systems
    are allowed; a warning is attached when the companion spectral radius
    exceeds one.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mats = [np.asarray(m, dtype=float) for m in lag_matrices]
    n = mats[0].shape[0]
    if any(m.shape != (n, n) for m in mats):
        raise ValueError("lag matrices must all be square with equal size")
    radius = float(np.max(np.abs(np.linalg.eigvals(companion_matrix(mats)))))
    if radius > 1.0 + 1e-10:
        warnings.warn(f"VAR companion spectral radius {radius:.4f} exceeds 1",
                      ExplosiveVarWarning)
    out = np.zeros((horizon, n, n))
    out[0] = np.eye(n)
    for h in range(1, horizon):
        for l in range(1, min(h, len(mats)) + 1):
            out[h] += mats[l - 1] @ out[h - l]
    return out


@dataclass
class SpilloverMatrix:
    """Row-normalized GFEVD shares at one (time, quantile, horizon)."""

    values: np.ndarray
    assets: list[str]
    tau: float | None = None
    horizon: int | None = None
    time: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.assets)
        if self.values.shape != (n, n):
            raise ValueError("spillover matrix must be square over the assets")
        if np.any(self.values < 0):
            raise ValueError("spillover shares must be non-negative")
        rows = self.values.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-10:
            raise ValueError("every spillover matrix row must sum to one")


def gfevd(ma: np.ndarray, sigma: np.ndarray, assets: list[str] | None = None,
          tau: float | None = None, time=None) -> SpilloverMatrix:
    """Generalized FEVD shares from MA matrices and an innovation covariance.

    theta_ij = sigma_jj^{-1} sum_h (e_i' A_h Sigma e_j)^2
               / sum_h (e_i' A_h Sigma A_h' e_i), then row-normalized.
    """
    ma = np.asarray(ma, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = sigma.shape[0]
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("innovation covariance must be symmetric")
    d = np.diag(sigma)
    if np.any(d <= 0):
        raise ValueError("innovation covariance has a zero or negative diagonal")
    num = np.zeros((n, n))
    den = np.zeros(n)
    for h in range(ma.shape[0]):
        As = ma[h] @ sigma
        num += As * As
        den += np.einsum("ij,ij->i", As, ma[h])
    theta = num / d[None, :] / den[:, None]
    theta /= theta.sum(axis=1, keepdims=True)
    if assets is None:
        assets = [f"a{i}" for i in range(n)]
    return SpilloverMatrix(theta, list(assets), tau=tau,
                           horizon=ma.shape[0], time=time)


@dataclass
class ConnectednessSummary:
    """Connectedness battery derived from one spillover matrix (percent units)."""

    assets: list[str]
    tsi: float
    from_others: np.ndarray   # share of asset i's variance due to others
    to_others: np.ndarray     # share of others' variance due to asset i
    net: np.ndarray           # to_others - from_others
    npdc: np.ndarray          # npdc[i, j] = net transmission from j to i
    tau: float | None = None
    time: object = None

    def npdc_to(self, asset: str) -> dict[str, float]:
        """Net directional transmission from each other asset into ``asset``."""
        i = self.assets.index(asset)
        return {a: float(self.npdc[i, j])
                for j, a in enumerate(self.assets) if j != i}


def connectedness(matrix: SpilloverMatrix) -> ConnectednessSummary:
    """Spillover indices from a row-normalized GFEVD table."""
    theta = matrix.values
    n = theta.shape[0]
    off = theta - np.diag(np.diag(theta))
    from_others = 100.0 * off.sum(axis=1)
    to_others = 100.0 * off.sum(axis=0)
    tsi = float(100.0 * off.sum() / n)
    npdc = 100.0 * (theta - theta.T)
    return ConnectednessSummary(list(matrix.assets), tsi, from_others,
                                to_others, to_others - from_others, npdc,
                                tau=matrix.tau, time=matrix.time)


@dataclass
class SpilloverPath:
    """Connectedness indices along a fitted path, one quantile."""

    assets: list[str]
    days: list
    tau: float
    tsi: np.ndarray            # (T,)
    from_others: np.ndarray    # (T, N)
    to_others: np.ndarray      # (T, N)
    net: np.ndarray            # (T, N)
    npdc: np.ndarray           # (T, N, N), [t, i, j] = transmission j -> i

    def to_frame(self) -> pd.DataFrame:
        """Long-format table: date, index_name, asset_or_pair, value."""
        records = []
        for t, day in enumerate(self.days):
            records.append((day, "tsi", "system", self.tsi[t]))
            for i, a in enumerate(self.assets):
                records.append((day, "from_others", a, self.from_others[t, i]))
                records.append((day, "to_others", a, self.to_others[t, i]))
                records.append((day, "net", a, self.net[t, i]))
                for j, b in enumerate(self.assets):
                    if i != j:
                        records.append((day, "npdc", f"{b}->{a}",
                                        self.npdc[t, i, j]))
        return pd.DataFrame(records,
                            columns=["date", "index_name", "asset_or_pair",
                                     "value"])

    def mean_npdc_to(self, asset: str) -> dict[str, float]:
        i = self.assets.index(asset)
        avg = self.npdc.mean(axis=0)
        return {a: float(avg[i, j])
                for j, a in enumerate(self.assets) if j != i}


def spillover_time_series(fit: QvarFit, horizon: int | None = None,
                          ) -> dict[float, SpilloverPath]:
    """GFEVD + connectedness mapped over the fitted path, per quantile."""
    H = horizon or fit.spec.horizon
    n = len(fit.assets)
    out = {}
    for tau, path in fit.by_quantile.items():
        coefs = path.coefs[:, :, 1:]  # drop intercepts
        theta = _kernels.gfevd_path(np.ascontiguousarray(coefs),
                                    np.ascontiguousarray(path.sigmas), H)
        steps = theta.shape[0]
        tsi = np.empty(steps)
        frm = np.empty((steps, n))
        to = np.empty((steps, n))
        npdc = np.empty((steps, n, n))
        for t in range(steps):
            th = theta[t]
            off = th - np.diag(np.diag(th))
            frm[t] = 100.0 * off.sum(axis=1)
            to[t] = 100.0 * off.sum(axis=0)
            tsi[t] = 100.0 * off.sum() / n
            npdc[t] = 100.0 * (th - th.T)
        out[tau] = SpilloverPath(list(fit.assets), list(fit.days), tau,
                                 tsi, frm, to, to - frm, npdc)
    return out


def average_summary(paths: dict[float, SpilloverPath],
                    target: str | None = None) -> dict:
    """Time-averaged indices per quantile (JSON-friendly).

    Emits both the averaged NPDC toward the target and the averaged
    directional shares, since published summaries may follow either
    convention.  ``nsi`` aliases the per-asset net spillover.
    """
    out = {}
    for tau, path in paths.items():
        entry = {
            "tsi": float(path.tsi.mean()),
            "from_others": {a: float(v) for a, v in
                            zip(path.assets, path.from_others.mean(axis=0))},
            "to_others": {a: float(v) for a, v in
                          zip(path.assets, path.to_others.mean(axis=0))},
            "net": {a: float(v) for a, v in
                    zip(path.assets, path.net.mean(axis=0))},
            "nsi_alias_of": "net",
        }
        if target is not None:
            entry["npdc_to_target"] = path.mean_npdc_to(target)
            entry["target"] = target
        out[f"{tau:g}"] = entry
    return out


def cyclicality(values_by_tau: dict[float, float], tau_low: float,
                tau_high: float) -> float:
    """Upper-tail minus lower-tail value of a per-quantile index."""
    missing = [t for t in (tau_low, tau_high) if t not in values_by_tau]
    if missing:
        raise ValueError(f"missing quantiles {missing} in {sorted(values_by_tau)}")
    return float(values_by_tau[tau_high] - values_by_tau[tau_low])
