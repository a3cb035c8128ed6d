"""Streaming moments, ratio confidence intervals and distances between samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateExperiment, DomainError

__all__ = [
    "StreamingMoments",
    "PairedMoments",
    "delta_ratio_ci",
    "bootstrap_ratio_ci",
    "WeightedEcdf",
    "ks_distance",
    "ks_to_cdf",
    "l1_distance",
    "effective_sample_size",
]


@dataclass
class StreamingMoments:
    """Count, mean and sum of squared deviations; mergeable (Chan et al.)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "StreamingMoments":
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(int(v.size), mu, float(np.sum((v - mu) ** 2)))

    def push(self, values) -> "StreamingMoments":
        merged = self.merge(StreamingMoments.of(values))
        self.n, self.mean, self.m2 = merged.n, merged.mean, merged.m2
        return self

    def merge(self, other: "StreamingMoments") -> "StreamingMoments":
        if other.n == 0:
            return StreamingMoments(self.n, self.mean, self.m2)
        if self.n == 0:
            return StreamingMoments(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return StreamingMoments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std_err(self) -> float:
        return float(np.sqrt(self.variance / self.n)) if self.n > 1 else 0.0


@dataclass
class PairedMoments:
    """Moments of ``(a, b)`` pairs with their co-moment, mergeable."""

    a: StreamingMoments
    b: StreamingMoments
    cm: float = 0.0

    @classmethod
    def of(cls, a, b) -> "PairedMoments":
        a = np.asarray(a, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        if a.shape != b.shape:
            raise DomainError("paired samples must have equal length")
        ma, mb = StreamingMoments.of(a), StreamingMoments.of(b)
        cm = float(np.sum((a - ma.mean) * (b - mb.mean))) if a.size else 0.0
        return cls(ma, mb, cm)

    def merge(self, other: "PairedMoments") -> "PairedMoments":
        na, nb = self.a.n, other.a.n
        if nb == 0:
            return PairedMoments(self.a, self.b, self.cm)
        if na == 0:
            return PairedMoments(other.a, other.b, other.cm)
        n = na + nb
        da = other.a.mean - self.a.mean
        db = other.b.mean - self.b.mean
        cm = self.cm + other.cm + da * db * na * nb / n
        return PairedMoments(self.a.merge(other.a), self.b.merge(other.b), cm)

    @property
    def n(self) -> int:
        return self.a.n

    @property
    def covariance(self) -> float:
        return self.cm / (self.n - 1) if self.n > 1 else 0.0


def delta_ratio_ci(pair: PairedMoments) -> tuple[float, float]:
    """Ratio of means ``mean(a)/mean(b)`` with its delta-method standard error.

    ``var = (s_a^2 - 2 R s_ab + R^2 s_b^2) / (n mean(b)^2)``.
    """
    d = pair.b.mean
    if not d > 0:
        raise DegenerateExperiment(
            "denominator mean is not positive; increase the number of paths or use a "
            "weight with more mass near 0"
        )
    r = pair.a.mean / d
    n = pair.n
    var = (pair.a.variance - 2.0 * r * pair.covariance + r * r * pair.b.variance) / (n * d * d)
    return r, float(np.sqrt(max(var, 0.0)))


def bootstrap_ratio_ci(a, b, n_boot: int = 200, seed: int = 0) -> tuple[float, float]:
    """Bootstrap standard error of ``mean(a)/mean(b)``; for audits of :func:`delta_ratio_ci`."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not b.mean() > 0:
        raise DegenerateExperiment("denominator mean is not positive")
    rng = np.random.default_rng(seed)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        idx = rng.integers(0, a.size, a.size)
        reps[i] = a[idx].mean() / b[idx].mean()
    return float(a.mean() / b.mean()), float(reps.std(ddof=1))


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


class WeightedEcdf:
    """Right-continuous step CDF of a weighted sample (weights normalised to 1)."""

    def __init__(self, values, weights=None):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise DomainError("empirical CDF of an empty sample")
        w = np.ones(v.size) if weights is None else np.asarray(weights, dtype=float).ravel()
        if w.shape != v.shape or np.any(w < 0) or np.any(~np.isfinite(w)):
            raise DomainError("weights must be finite, nonnegative and match the values")
        total = w.sum()
        if not total > 0:
            raise DomainError("weights sum to zero")
        order = np.argsort(v, kind="stable")
        v, w = v[order], w[order] / total
        # merge tied values so the jump points are unique
        uniq, start = np.unique(v, return_index=True)
        self.values = uniq
        self.weights = np.add.reduceat(w, start)
        self._cum = np.cumsum(self.weights)
        self._cum[-1] = 1.0

    def __call__(self, x) -> np.ndarray:
        i = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        return np.where(i > 0, self._cum[np.maximum(i - 1, 0)], 0.0)


def ks_distance(a: WeightedEcdf, b: WeightedEcdf) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` over the union of jump points."""
    pts = np.union1d(a.values, b.values)
    return float(np.max(np.abs(a(pts) - b(pts))))


def ks_to_cdf(a: WeightedEcdf, cdf) -> float:
    """Distance between a step CDF and a continuous CDF (both one-sided limits)."""
    f = np.asarray(cdf(a.values), dtype=float)
    after = a._cum
    before = np.concatenate([[0.0], after[:-1]])
    return float(max(np.max(np.abs(after - f)), np.max(np.abs(before - f))))


def l1_distance(a: WeightedEcdf, b: WeightedEcdf, bins: int = 50) -> float:
    """Histogram L1 distance on the common range; lies in ``[0, 2]``."""
    if bins < 10:
        raise DomainError("need at least 10 bins")
    lo = min(a.values[0], b.values[0])
    hi = max(a.values[-1], b.values[-1])
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a.values, edges, weights=a.weights)
    hb, _ = np.histogram(b.values, edges, weights=b.weights)
    return float(np.sum(np.abs(ha - hb)))
