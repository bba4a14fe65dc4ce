"""Per-node calibration factors and their binned summaries, emitted as CSV."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .data import Dataset, atomic_write_text
from .errors import InputError, UnknownColumn
from .graph import Graph, bfs_distance_to_set, node_homophily

COLUMNS = ("node_id", "dist_train", "delta_conf", "homophily", "entropy", "nce", "conf")
FACTORS = ("dist_train", "delta_conf", "homophily")
INTEGER_COLUMNS = {"node_id", "dist_train"}
DEFAULT_FACTOR_BINS = 10


def relative_confidence(probs, g: Graph) -> np.ndarray:
    """Node confidence minus the mean confidence of its neighbours (0 if isolated)."""
    conf = np.asarray(probs, dtype=np.float64).max(axis=1)
    deg = g.degrees
    src = np.repeat(np.arange(g.num_nodes), deg)
    nb_sum = np.bincount(src, weights=conf[g.col_indices], minlength=g.num_nodes)
    nb_mean = np.divide(nb_sum, deg, out=conf.copy(), where=deg > 0)
    return conf - nb_mean


@dataclass(frozen=True)
class FactorReport:
    """Column-oriented per-node factors for the evaluated nodes."""

    node_id: np.ndarray
    dist_train: np.ndarray
    delta_conf: np.ndarray
    homophily: np.ndarray
    entropy: np.ndarray
    nce: np.ndarray
    conf: np.ndarray

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise UnknownColumn(f"unknown column {name!r}; expected one of {', '.join(COLUMNS)}")
        return getattr(self, name)

    def __len__(self) -> int:
        return int(self.node_id.size)

    def to_csv(self) -> str:
        lines = [",".join(COLUMNS)]
        cols = [self.column(c) for c in COLUMNS]
        for row in zip(*cols):
            lines.append(",".join(_fmt(v, name in INTEGER_COLUMNS) for v, name in zip(row, COLUMNS)))
        return "\n".join(lines) + "\n"


def _fmt(v, integer: bool = False) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if integer:
        return str(int(v))
    return repr(v)


def factor_report(dataset: Dataset, probs, num_bins: int = metrics.DEFAULT_BINS,
                  nodes=None) -> FactorReport:
    """Per-node factors over ``nodes`` (default: the test mask)."""
    probs = np.asarray(probs, dtype=np.float64)
    nodes = dataset.mask.test if nodes is None else np.unique(np.asarray(nodes, dtype=np.int64))
    g = dataset.graph
    bins = metrics.reliability_bins(probs, dataset.labels, nodes, num_bins)
    nce = metrics.nodewise_calibration_error(bins, probs, dataset.labels, nodes)
    pred = metrics.argmax_rows(probs)
    return FactorReport(
        node_id=nodes.copy(),
        dist_train=bfs_distance_to_set(g, dataset.mask.train)[nodes],
        delta_conf=relative_confidence(probs, g)[nodes],
        homophily=node_homophily(g, pred)[nodes],
        entropy=metrics.entropy_per_node(probs[nodes]),
        nce=nce,
        conf=probs[nodes].max(axis=1),
    )


@dataclass(frozen=True)
class CurveRow:
    center: float
    mean: float  # NaN for empty bins
    count: int


def binned_factor_curve(report: FactorReport, factor: str, value_column: str,
                        bins: int | Sequence[float] | None = None) -> list[CurveRow]:
    """Mean of ``value_column`` per bin of ``factor``.

    Integer factors get one bin per integer value; continuous ones get
    ``bins`` equal-width bins over the observed range (or explicit edges).
    Rows with an unreachable distance in either column are skipped.
    """
    x = report.column(factor).astype(np.float64)
    y = report.column(value_column).astype(np.float64)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size == 0:
        return []
    if factor in INTEGER_COLUMNS and bins is None:
        lo, hi = int(x.min()), int(x.max())
        centers = np.arange(lo, hi + 1, dtype=np.float64)
        idx = (x - lo).astype(np.int64)
    else:
        if bins is None or np.isscalar(bins):
            nb = DEFAULT_FACTOR_BINS if bins is None else int(bins)
            if nb < 1:
                raise InputError("need at least one bin")
            lo, hi = float(x.min()), float(x.max())
            edges = np.linspace(lo, hi if hi > lo else lo + 1.0, nb + 1)
            idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nb - 1)
        else:
            edges = np.asarray(bins, dtype=np.float64)
            nb = edges.size - 1
            if nb < 1 or (np.diff(edges) <= 0).any():
                raise InputError("explicit bin edges must be strictly increasing")
            inside = (x >= edges[0]) & (x <= edges[-1])
            x, y = x[inside], y[inside]
            idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, nb - 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
    counts = np.bincount(idx, minlength=centers.size)
    sums = np.bincount(idx, weights=y, minlength=centers.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / counts, np.nan)
    return [CurveRow(float(c), float(m), int(k)) for c, m, k in zip(centers, means, counts)]


def reliability_curve(probs, labels, eval_set, num_bins: int = metrics.DEFAULT_BINS) -> list[CurveRow]:
    """One row per confidence bin: (mean confidence, accuracy, count)."""
    b = metrics.reliability_bins(probs, labels, eval_set, num_bins)
    return [CurveRow(float(c), float(a), int(k)) for c, a, k in zip(b.confidence, b.accuracy, b.counts)]


def factor_correlations(report: FactorReport) -> list[tuple[str, str, float, int]]:
    """Pearson correlation for each pair of local factors and with the nodewise error."""
    out = []
    for a, b in itertools.combinations((*FACTORS, "nce"), 2):
        x, y = report.column(a).astype(float), report.column(b).astype(float)
        keep = np.isfinite(x) & np.isfinite(y)
        x, y = x[keep], y[keep]
        r = float(np.corrcoef(x, y)[0, 1]) if x.size > 1 and x.std() > 0 and y.std() > 0 else math.nan
        out.append((a, b, r, int(x.size)))
    return out


def curve_csv(rows: list[CurveRow], header: tuple[str, str, str] = ("bin_center", "mean", "count")) -> str:
    lines = [",".join(header)]
    lines += [f"{_fmt(r.center)},{_fmt(r.mean)},{r.count}" for r in rows]
    return "\n".join(lines) + "\n"


def write_diagnostics(out_dir: str | Path, dataset: Dataset, probs,
                      num_bins: int = metrics.DEFAULT_BINS, all_nodes: bool = False) -> list[Path]:
    """Write every diagnostics CSV into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes = np.arange(dataset.num_nodes) if all_nodes else dataset.mask.test
    report = factor_report(dataset, probs, num_bins, nodes)
    files: dict[str, str] = {"factors.csv": report.to_csv()}
    files["reliability.csv"] = curve_csv(
        reliability_curve(probs, dataset.labels, nodes, num_bins), ("conf", "acc", "count"))
    for factor in FACTORS:
        for value in (*FACTORS, "nce"):
            if value != factor:
                rows = binned_factor_curve(report, factor, value)
                files[f"curve_{factor}__{value}.csv"] = curve_csv(rows)
        rows = binned_factor_curve(report, factor, "conf")
        files[f"counts_{factor}.csv"] = "bin_center,count\n" + "".join(
            f"{_fmt(r.center)},{r.count}\n" for r in rows)
    files["factor_correlations.csv"] = "factor_a,factor_b,pearson,count\n" + "".join(
        f"{a},{b},{_fmt(r)},{n}\n" for a, b, r, n in factor_correlations(report))
    paths = []
    for name, text in files.items():
        atomic_write_text(out / name, text)
        paths.append(out / name)
    return paths
