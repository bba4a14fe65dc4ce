"""Calibration metrics over a subset of nodes.

Every function takes the full ``(N, K)`` probability matrix, per-node labels
and the evaluated node ids; nodes are always visited in ascending id order so
the float summation order is fixed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyEvalSet, NotAProbability, TooFewSamples

DEFAULT_BINS = 15
KDE_GRID_POINTS = 1024
KDE_MIN_BANDWIDTH = 1e-3
NLL_FLOOR = 1e-12


@dataclass(frozen=True)
class BinStats:
    """Equal-width confidence bins ((m-1)/M, m/M]; empty bins hold NaN acc/conf."""

    num_bins: int
    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class EvalResult:
    ece: float
    classwise_ece: float
    kde_ece: float
    nll: float
    brier: float
    accuracy: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def _prepare(probs, labels, eval_set):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.unique(np.asarray(eval_set, dtype=np.int64))
    if idx.size == 0:
        raise EmptyEvalSet("no nodes to evaluate")
    p = probs[idx]
    if not np.isfinite(p).all() or (p < 0).any() or np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise NotAProbability("probability rows must be nonnegative and sum to 1")
    return p, labels[idx]


def argmax_rows(p: np.ndarray) -> np.ndarray:
    """Row argmax; ties resolve to the lowest class index."""
    return np.argmax(p, axis=-1)


def _bin_index(values: np.ndarray, num_bins: int) -> np.ndarray:
    """0-based bin of each value; bin m covers ((m)/M, (m+1)/M], 0 goes to bin 0."""
    edges = np.arange(num_bins + 1) / num_bins
    return np.clip(np.searchsorted(edges, values, side="left") - 1, 0, num_bins - 1)


def _binned(values, hits, num_bins):
    b = _bin_index(values, num_bins)
    counts = np.bincount(b, minlength=num_bins)
    hit_sum = np.bincount(b, weights=hits.astype(np.float64), minlength=num_bins)
    val_sum = np.bincount(b, weights=values, minlength=num_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, hit_sum / counts, np.nan)
        conf = np.where(counts > 0, val_sum / counts, np.nan)
    return BinStats(num_bins, counts, acc, conf), b


def reliability_bins(probs, labels, eval_set, num_bins: int = DEFAULT_BINS) -> BinStats:
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    p, y = _prepare(probs, labels, eval_set)
    stats, _ = _binned(p.max(axis=1), argmax_rows(p) == y, num_bins)
    return stats


def _weighted_gap(stats: BinStats, n: int) -> float:
    total = 0.0
    for m in range(stats.num_bins):
        c = int(stats.counts[m])
        if c:
            total += c / n * abs(stats.accuracy[m] - stats.confidence[m])
    return total


def ece(bins: BinStats) -> float:
    """Expected calibration error: sum of |acc - conf| weighted by bin mass."""
    return _weighted_gap(bins, bins.total)


def nodewise_calibration_error(bins: BinStats, probs, labels, eval_set) -> np.ndarray:
    """Calibration error of each evaluated node's confidence bin (ascending node order)."""
    p, _ = _prepare(probs, labels, eval_set)
    gap = np.abs(bins.accuracy - bins.confidence)
    return gap[_bin_index(p.max(axis=1), bins.num_bins)]


def classwise_ece(probs, labels, eval_set, num_bins: int = DEFAULT_BINS) -> float:
    p, y = _prepare(probs, labels, eval_set)
    n, k = p.shape
    total = 0.0
    for c in range(k):
        stats, _ = _binned(p[:, c], y == c, num_bins)
        total += _weighted_gap(stats, n)
    return total / k


def triweight(u: np.ndarray, h: float) -> np.ndarray:
    """Triweight kernel (1/h)(35/32)(1 - (u/h)^2)^3 on |u| <= h."""
    r = u / h
    return np.where(np.abs(r) <= 1.0, (35.0 / 32.0) * (1.0 - r * r) ** 3 / h, 0.0)


def kde_bandwidth(conf: np.ndarray) -> float:
    sigma = float(np.std(conf, ddof=1))
    return max(1.06 * sigma * conf.size ** (-0.2), KDE_MIN_BANDWIDTH)


def kde_ece(probs, labels, eval_set, bandwidth: float | None = None) -> float:
    """Binning-free ECE with a triweight kernel, integrated on a uniform grid."""
    p, y = _prepare(probs, labels, eval_set)
    if p.shape[0] < 2:
        raise TooFewSamples("kde_ece needs at least two evaluated nodes")
    conf = p.max(axis=1)
    hit = (argmax_rows(p) == y).astype(np.float64)
    h = kde_bandwidth(conf) if bandwidth is None else bandwidth
    grid = np.linspace(0.0, 1.0, KDE_GRID_POINTS)
    dens = np.zeros_like(grid)
    acc_mass = np.zeros_like(grid)
    for start in range(0, conf.size, 2048):
        w = triweight(grid[None, :] - conf[start:start + 2048, None], h)
        dens += w.sum(axis=0)
        acc_mass += hit[start:start + 2048] @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(dens > 0, acc_mass / dens, 0.0)
    integrand = np.where(dens > 0, np.abs(acc - grid) * dens / conf.size, 0.0)
    return float(np.trapezoid(integrand, grid))


def nll(probs, labels, eval_set) -> float:
    p, y = _prepare(probs, labels, eval_set)
    return float(np.mean(-np.log(np.maximum(p[np.arange(y.size), y], NLL_FLOOR))))


def brier(probs, labels, eval_set) -> float:
    p, y = _prepare(probs, labels, eval_set)
    onehot = np.zeros_like(p)
    onehot[np.arange(y.size), y] = 1.0
    return float(np.mean(((p - onehot) ** 2).sum(axis=1)))


def accuracy(probs, labels, eval_set) -> float:
    p, y = _prepare(probs, labels, eval_set)
    return float(np.mean(argmax_rows(p) == y))


def entropy_per_node(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=1)


def evaluate(probs, labels, eval_set, num_bins: int = DEFAULT_BINS) -> EvalResult:
    """All scalar metrics for one set of predictions."""
    bins = reliability_bins(probs, labels, eval_set, num_bins)
    kde = kde_ece(probs, labels, eval_set) if np.unique(eval_set).size >= 2 else math.nan
    return EvalResult(
        ece=ece(bins),
        classwise_ece=classwise_ece(probs, labels, eval_set, num_bins),
        kde_ece=kde,
        nll=nll(probs, labels, eval_set),
        brier=brier(probs, labels, eval_set),
        accuracy=accuracy(probs, labels, eval_set),
    )
