"""Synthetic stochastic-block-model datasets with controlled miscalibration.

Clean logits are ``s * onehot(block) + sigma * noise`` and labels are drawn
from their softmax, so the clean logits are calibrated by construction. The
emitted logits are the clean ones multiplied by a per-node factor ``c_i``
(1, a global constant, or ``a + b * node_homophily_i``), so ``c_i`` is
exactly the temperature that restores calibration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import rng as rngmod
from .data import Dataset
from .errors import InvalidConfig
from .graph import build_graph, node_homophily
from .kernels import softmax_rows
from .trainer import stratified_split

MISCAL_MODES = ("none", "global_T", "homophily_T")
HOMOPHILY_T_FLOOR = 0.1


@dataclass(frozen=True)
class SynthConfig:
    num_nodes: int = 2000
    num_classes: int = 4
    intra_p: float = 0.01
    inter_p: float = 0.001
    signal: float = 2.0
    noise_sigma: float = 1.0
    miscal_mode: str = "none"
    global_T: float = 2.0
    homophily_coeffs: tuple[float, float] = (1.0, 0.5)
    labeled_fraction: float = 0.15
    folds: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.num_nodes < 1 or self.num_classes < 2:
            raise InvalidConfig("need at least one node and two classes")
        for name in ("intra_p", "inter_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must be a probability")
        if self.signal < 0 or self.noise_sigma < 0:
            raise InvalidConfig("signal and noise_sigma must be nonnegative")
        if self.miscal_mode not in MISCAL_MODES:
            raise InvalidConfig(f"miscal_mode must be one of {MISCAL_MODES}")
        if self.global_T <= 0:
            raise InvalidConfig("global_T must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["homophily_coeffs"] = list(self.homophily_coeffs)
        return d


@dataclass(frozen=True)
class SynthTruth:
    clean_logits: np.ndarray
    blocks: np.ndarray
    temperatures: np.ndarray  # the per-node factor applied to the clean logits


def _triangle_pairs(idx: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Decode linear indices into (row, col) of the strict upper triangle of an n x n matrix."""
    rows = np.arange(n, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    r = np.searchsorted(starts, idx, side="right") - 1
    return r, idx - starts[r] + r + 1


def _sbm_edges(blocks: np.ndarray, k: int, intra_p: float, inter_p: float, r) -> np.ndarray:
    members = [np.flatnonzero(blocks == b) for b in range(k)]
    out = []
    for a in range(k):
        for b in range(a, k):
            ma, mb = members[a], members[b]
            p = intra_p if a == b else inter_p
            pairs = ma.size * (ma.size - 1) // 2 if a == b else ma.size * mb.size
            if pairs == 0 or p == 0.0:
                continue
            count = int(r.binomial(pairs, p))
            idx = np.sort(r.choice(pairs, size=count, replace=False)) if count else np.zeros(0, np.int64)
            if a == b:
                i, j = _triangle_pairs(idx, ma.size)
                out.append(np.stack([ma[i], ma[j]], axis=1))
            else:
                i, j = np.divmod(idx, mb.size)
                out.append(np.stack([ma[i], mb[j]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def generate_with_truth(config: SynthConfig) -> tuple[Dataset, SynthTruth]:
    config.validate()
    n, k, seed = config.num_nodes, config.num_classes, config.seed
    blocks = np.arange(n) % k
    blocks = blocks[rngmod.make_rng(seed, rngmod.SYNTH_LABELS).permutation(n)]
    g = build_graph(_sbm_edges(blocks, k, config.intra_p, config.inter_p,
                               rngmod.make_rng(seed, rngmod.SYNTH_EDGES)), n)

    clean = config.noise_sigma * rngmod.box_muller(rngmod.make_rng(seed, rngmod.SYNTH_NOISE), (n, k))
    clean[np.arange(n), blocks] += config.signal
    cdf = np.cumsum(softmax_rows(clean), axis=1)
    u = rngmod.make_rng(seed, rngmod.SYNTH_SAMPLE).random(n)
    labels = np.minimum((u[:, None] > cdf).sum(axis=1), k - 1)

    if config.miscal_mode == "none":
        factor = np.ones(n)
    elif config.miscal_mode == "global_T":
        factor = np.full(n, config.global_T)
    else:
        a, b = config.homophily_coeffs
        hom = node_homophily(g, np.argmax(clean, axis=1))
        factor = np.maximum(a + b * hom, HOMOPHILY_T_FLOOR)
    logits = clean * factor[:, None]

    plan = stratified_split(labels, n, labeled_fraction=config.labeled_fraction,
                            folds=config.folds, splits=1, seed=seed)
    ds = Dataset(g, logits, labels, plan.assignments[0][0])
    return ds, SynthTruth(clean, blocks, factor)


def generate(config: SynthConfig) -> Dataset:
    return generate_with_truth(config)[0]
