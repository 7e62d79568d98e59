"""Evaluation: 2D two-sample KS test, exact MI, correlations, mean/stdev sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import kstwobign

from . import generator as gen
from .targets import PointCloud

SIGNIFICANCE = 0.05
NUM_BINS = 16
RETURN_RANGE = (-0.1, 0.1)


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n1: int
    n2: int

    @property
    def passed(self) -> bool:
        """True when the null (same distribution) is not rejected at 0.05."""
        return self.p_value > SIGNIFICANCE

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "n1": self.n1, "n2": self.n2, "pass": self.passed}


@dataclass(frozen=True)
class FrontierPoint:
    mean: float
    stdev: float
    code_or_alpha: float = 0.0

    def __post_init__(self):
        if not self.stdev >= 0:
            raise ValueError("stdev must be non-negative")


def _points(x):
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=float).reshape(-1, 2)


def quadrant_counts(centers, points, chunk=512) -> np.ndarray:
    """Counts of ``points`` strictly inside each quadrant around each center.

    Quadrant order: (+x,+y), (-x,+y), (-x,-y), (+x,-y). Points sharing a
    coordinate with the center belong to no quadrant. Returns (n_centers, 4).
    """
    centers, points = _points(centers), _points(points)
    out = np.empty((len(centers), 4), dtype=np.int64)
    px, py = points[:, 0], points[:, 1]
    for s in range(0, len(centers), chunk):
        c = centers[s:s + chunk]
        right = px[None, :] > c[:, :1]
        left = px[None, :] < c[:, :1]
        up = py[None, :] > c[:, 1:]
        down = py[None, :] < c[:, 1:]
        out[s:s + chunk, 0] = np.sum(right & up, axis=1)
        out[s:s + chunk, 1] = np.sum(left & up, axis=1)
        out[s:s + chunk, 2] = np.sum(left & down, axis=1)
        out[s:s + chunk, 3] = np.sum(right & down, axis=1)
    return out


def _max_quadrant_gap(centers, a, b):
    fa = quadrant_counts(centers, a) / len(a)
    fb = quadrant_counts(centers, b) / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks2d_statistic(a, b) -> float:
    """Fasano-Franceschini statistic: the two max quadrant gaps, averaged."""
    a, b = _points(a), _points(b)
    return (_max_quadrant_gap(a, a, b) + _max_quadrant_gap(b, a, b)) / 2


def _corr_or_zero(p):
    sx, sy = np.std(p[:, 0]), np.std(p[:, 1])
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.corrcoef(p[:, 0], p[:, 1])[0, 1])


def ks2d_pvalue(statistic, a, b) -> float:
    """Asymptotic p-value with the correlation-adjusted effective sample size."""
    a, b = _points(a), _points(b)
    sqen = np.sqrt(len(a) * len(b) / (len(a) + len(b)))
    r1, r2 = _corr_or_zero(a), _corr_or_zero(b)
    rr = np.sqrt(1 - 0.5 * (r1 ** 2 + r2 ** 2))
    d = statistic * sqen / (1 + rr * (0.25 - 0.75 / sqen))
    return float(np.clip(kstwobign.sf(d), 0.0, 1.0))


def ks2d(a, b, min_size=10) -> KSResult:
    a, b = _points(a), _points(b)
    if len(a) < min_size or len(b) < min_size:
        raise ValueError(f"2D KS test needs at least {min_size} points per sample")
    stat = ks2d_statistic(a, b)
    return KSResult(stat, ks2d_pvalue(stat, a, b), len(a), len(b))


def ks2d_peacock(a, b) -> float:
    """Peacock's statistic: quadrant gaps maximized over every pooled
    (x_i, y_j) origin. O(n^3); only meant for small samples."""
    a, b = _points(a), _points(b)
    pooled = np.vstack([a, b])
    xs, ys = np.unique(pooled[:, 0]), np.unique(pooled[:, 1])
    origins = np.array([(x, y) for x in xs for y in ys])
    return _max_quadrant_gap(origins, a, b)


def exact_mi(joint) -> float:
    """Mutual information (nats) of a discrete joint probability table."""
    p = np.asarray(joint, dtype=float)
    if p.ndim != 2 or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("joint table must be 2-D, non-negative and sum to 1")
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (px @ py)[nz])))


def pearson(u, v) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or len(u) < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    du, dv = u - u.mean(), v - v.mean()
    su, sv = np.sqrt(np.dot(du, du)), np.sqrt(np.dot(dv, dv))
    if su == 0 or sv == 0:
        raise DegenerateInputError("zero variance input")
    return float(np.clip(np.dot(du, dv) / (su * sv), -1.0, 1.0))


def bin_midpoints(num_bins=NUM_BINS, lo=RETURN_RANGE[0], hi=RETURN_RANGE[1]) -> np.ndarray:
    width = (hi - lo) / num_bins
    return lo + width * (np.arange(num_bins) + 0.5)


def mean_std_of_distribution(bins, tag=0.0) -> FrontierPoint:
    p = np.asarray(bins, dtype=float)
    if p.shape != (NUM_BINS,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValueError(f"expected a normalized {NUM_BINS}-bin distribution")
    m = bin_midpoints()
    mean = float(np.dot(p, m))
    var = float(np.dot(p, m * m)) - mean ** 2
    return FrontierPoint(mean, float(np.sqrt(max(var, 0.0))), float(tag))


def code_correlations(spec: gen.GeneratorSpec, code_indices, rng, n=2000) -> np.ndarray:
    """Pearson correlation of each latent entry with each output coordinate.

    Returns (len(code_indices), 2) for a point generator; entries whose
    output has zero variance are reported as 0.
    """
    z = gen.sample_latents(rng, n, spec)
    out = gen.generate_batch(spec, z)
    corr = np.zeros((len(code_indices), out.shape[1]))
    for i, c in enumerate(code_indices):
        for j in range(out.shape[1]):
            try:
                corr[i, j] = pearson(z[:, c], out[:, j])
            except DegenerateInputError:
                corr[i, j] = 0.0
    return corr


def segment_codes(spec: gen.GeneratorSpec, segments) -> np.ndarray:
    lo, hi = spec.domain
    return lo + (hi - lo) * (np.arange(segments) + 0.5) / segments


def sweep_outputs(spec: gen.GeneratorSpec, code_index, segments, draws, rng):
    """Yield ``(code_value, outputs)`` with the latent entry ``code_index``
    pinned to each segment midpoint and the other entries drawn at random."""
    if not 0 <= code_index < spec.qubits:
        raise IndexError(f"code index {code_index} outside latent width {spec.qubits}")
    if segments < 2:
        raise ValueError("need at least 2 segments")
    for code in segment_codes(spec, segments):
        z = gen.sample_latents(rng, draws, spec)
        z[:, code_index] = code
        yield float(code), gen.generate_batch(spec, z)


def code_sweep(spec: gen.GeneratorSpec, code_index, segments, draws, rng):
    """Finance generators: one FrontierPoint per segment from the averaged
    distribution. Point generators: list of ``(code_value, points)``."""
    if spec.readout == gen.DISTRIBUTION:
        return [mean_std_of_distribution(out.mean(axis=0), code)
                for code, out in sweep_outputs(spec, code_index, segments, draws, rng)]
    return list(sweep_outputs(spec, code_index, segments, draws, rng))


def sweep_histograms(spec: gen.GeneratorSpec, code_index, segments, draws, rng):
    """Averaged distribution per code segment: ``(codes, (segments, 16))``."""
    codes, hists = [], []
    for code, out in sweep_outputs(spec, code_index, segments, draws, rng):
        codes.append(code)
        hists.append(out.mean(axis=0))
    return np.array(codes), np.array(hists)
