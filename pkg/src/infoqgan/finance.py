"""Two-asset return data, blended portfolio distributions and Markowitz analytics.

All moments use the population (1/n) convention so that the blended-series
standard deviation and the two-asset formula agree to rounding error.
"""
from __future__ import annotations

import csv
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .eval import NUM_BINS, RETURN_RANGE, FrontierPoint

NUM_GRID = 1000
NUM_RANDOM = 1000


class ParseError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ReturnSeries:
    asset_id: str
    dates: tuple
    returns: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 1 or len(r) != len(dates):
            raise ValueError("returns and dates must have the same length")
        if not np.all(np.isfinite(r)):
            raise ValueError("returns must be finite")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return len(self.returns)


@dataclass(frozen=True)
class PortfolioDistribution:
    alpha: float
    bins: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float)
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if b.shape != (NUM_BINS,) or np.any(b < 0) or abs(b.sum() - 1) > 1e-9:
            raise ValueError(f"bins must be a normalized {NUM_BINS}-vector")
        object.__setattr__(self, "bins", b)


@dataclass(frozen=True)
class AssetStats:
    mean: float
    stdev: float
    covariance_with_partner: float = 0.0


def load_prices(path) -> dict:
    """Read a ``date,asset,close`` CSV into one ReturnSeries per asset."""
    closes = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "asset", "close"]:
            raise ParseError(f"{path}: line 1: expected header 'date,asset,close'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 3:
                    raise ValueError(f"expected 3 fields, got {len(row)}")
                day = dt.date.fromisoformat(row[0].strip())
                asset = row[1].strip()
                close = float(row[2])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if not close > 0:
                raise ValueError(f"{path}: line {lineno}: close must be positive, got {close}")
            if day in closes[asset]:
                raise ParseError(f"{path}: line {lineno}: duplicate date {day} for {asset}")
            closes[asset][day] = close
    out = {}
    for asset, by_day in closes.items():
        days = sorted(by_day)
        px = np.array([by_day[d] for d in days])
        out[asset] = ReturnSeries(asset, tuple(days[1:]), px[1:] / px[:-1] - 1)
    return out


def write_prices(path, series, initial=100.0):
    """Write ReturnSeries back out as a ``date,asset,close`` CSV.

    A synthetic opening price one day before the first return date is added
    so ``load_prices`` reproduces the returns.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "asset", "close"])
        for s in series:
            first = s.dates[0] - dt.timedelta(days=1)
            prices = initial * np.cumprod(np.concatenate([[1.0], 1 + s.returns]))
            for day, px in zip((first,) + s.dates, prices):
                w.writerow([day.isoformat(), s.asset_id, f"{px:.17g}"])


def align(a: ReturnSeries, b: ReturnSeries):
    """Returns of ``a`` and ``b`` on their common dates."""
    common = sorted(set(a.dates) & set(b.dates))
    if not common:
        raise AlignmentError(f"{a.asset_id} and {b.asset_id} share no dates")
    ia = {d: i for i, d in enumerate(a.dates)}
    ib = {d: i for i, d in enumerate(b.dates)}
    return (tuple(common), a.returns[[ia[d] for d in common]],
            b.returns[[ib[d] for d in common]])


def blend_returns(alpha, a: ReturnSeries, b: ReturnSeries) -> ReturnSeries:
    dates, ra, rb = align(a, b)
    return ReturnSeries(f"{alpha:g}*{a.asset_id}+{1 - alpha:g}*{b.asset_id}",
                        dates, alpha * ra + (1 - alpha) * rb)


def bin_index(returns) -> np.ndarray:
    """Bin of each return on the 16-bin grid; out-of-range values go to the edge bins."""
    lo, hi = RETURN_RANGE
    r = np.asarray(returns, dtype=float)
    idx = np.floor((r - lo) / (hi - lo) * NUM_BINS).astype(int)
    return np.clip(idx, 0, NUM_BINS - 1)


def histogram(returns) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if r.size == 0:
        raise ValueError("cannot discretize an empty return series")
    return np.bincount(bin_index(r), minlength=NUM_BINS) / r.size


def discretize_returns(r: ReturnSeries, alpha=1.0) -> PortfolioDistribution:
    return PortfolioDistribution(alpha, histogram(r.returns))


def build_training_datasets(a: ReturnSeries, b: ReturnSeries, rng,
                            num_grid=NUM_GRID, num_random=NUM_RANDOM) -> list:
    """Blend distributions at a midpoint grid of alphas plus random alphas."""
    _, ra, rb = align(a, b)
    grid = (np.arange(num_grid) + 0.5) / num_grid
    alphas = np.concatenate([grid, rng.uniform(0.0, 1.0, num_random)])
    return [PortfolioDistribution(float(al), histogram(al * ra + (1 - al) * rb))
            for al in alphas]


def save_datasets(path, datasets):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha"] + [f"p{i}" for i in range(NUM_BINS)])
        for d in datasets:
            w.writerow([f"{d.alpha:.17g}"] + [f"{p:.17g}" for p in d.bins])


def load_datasets(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(v) for v in row]
                out.append(PortfolioDistribution(vals[0], vals[1:]))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
    return out


def asset_stats(a: ReturnSeries, b: ReturnSeries):
    """Population mean, stdev and cross-covariance of two aligned assets."""
    _, ra, rb = align(a, b)
    cov = float(np.mean((ra - ra.mean()) * (rb - rb.mean())))
    return (AssetStats(float(ra.mean()), float(ra.std()), cov),
            AssetStats(float(rb.mean()), float(rb.std()), cov))


def mpt_sigma(w_a, stats_a: AssetStats, stats_b: AssetStats) -> float:
    """Two-asset portfolio stdev; the cross term uses the raw covariance."""
    if not 0 <= w_a <= 1:
        raise ValueError("w_a must lie in [0, 1]")
    w_b = 1 - w_a
    var = (w_a ** 2 * stats_a.stdev ** 2 + w_b ** 2 * stats_b.stdev ** 2
           + 2 * w_a * w_b * stats_a.covariance_with_partner)
    if var < 0:
        # only reachable through rounding for a perfect hedge
        if var > -1e-15:
            return 0.0
        raise ValueError(f"negative portfolio variance {var}")
    return float(np.sqrt(var))


def empirical_frontier(a: ReturnSeries, b: ReturnSeries, alphas) -> list:
    _, ra, rb = align(a, b)
    out = []
    for al in alphas:
        blend = al * ra + (1 - al) * rb
        out.append(FrontierPoint(float(blend.mean()), float(blend.std()), float(al)))
    return out


def cumulative_growth(r, initial=10_000.0) -> np.ndarray:
    returns = r.returns if isinstance(r, ReturnSeries) else np.asarray(r, dtype=float)
    if initial <= 0:
        raise ValueError("initial investment must be positive")
    if np.any(returns <= -1):
        raise ValueError("a return of -100% or worse wipes out the position")
    return initial * np.cumprod(1 + returns)


def synthetic_assets(mu_a, sigma_a, mu_b, sigma_b, cov, n_days, rng,
                     names=("A", "B"), start=dt.date(2011, 1, 3)):
    """Two aligned series of bivariate Gaussian daily returns on business days."""
    c = np.array([[sigma_a ** 2, cov], [cov, sigma_b ** 2]], dtype=float)
    if sigma_a < 0 or sigma_b < 0 or np.linalg.eigvalsh(c).min() < -1e-15:
        raise ValueError("covariance matrix is not positive semi-definite")
    try:
        factor = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        # singular but PSD: a symmetric square root does the same job
        w, v = np.linalg.eigh(c)
        factor = v * np.sqrt(np.clip(w, 0, None))
    draws = rng.standard_normal((n_days, 2)) @ factor.T + np.array([mu_a, mu_b])
    days = np.busday_offset(np.datetime64(start), np.arange(n_days), roll="forward")
    dates = tuple(d.item() for d in days)
    return (ReturnSeries(names[0], dates, draws[:, 0]),
            ReturnSeries(names[1], dates, draws[:, 1]))
