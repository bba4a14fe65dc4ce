"""Adam, early stopping and stratified labelled/unlabelled splitting."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng as rngmod
from .errors import FitDiverged, InputError, NonFiniteInput, ShapeMismatch

log = logging.getLogger(__name__)

DEFAULT_LR = 0.01
DEFAULT_MAX_EPOCHS = 2000
DEFAULT_PATIENCE = 100


@dataclass
class AdamState:
    """Adam with coupled L2: ``weight_decay * param`` is added to the gradient."""

    lr: float = DEFAULT_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              trainable: np.ndarray | None = None) -> np.ndarray:
    """One bias-corrected Adam update; returns new params and advances ``state``.

    Entries where ``trainable`` is False are left untouched.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeMismatch(f"params {params.shape} vs grads {grads.shape}")
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    elif state.m.shape != params.shape:
        raise ShapeMismatch(f"optimizer state {state.m.shape} vs params {params.shape}")
    g = grads + state.weight_decay * params
    if trainable is not None:
        g = np.where(trainable, g, 0.0)
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if trainable is not None:
        new = np.where(trainable, new, params)
    return new


@dataclass
class FitTrace:
    best_params: np.ndarray
    best_monitor: float
    epochs: int
    monitor_history: list[float] = field(default_factory=list)
    best_history: list[float] = field(default_factory=list)


def fit_with_early_stopping(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    monitor: Callable[[np.ndarray], float],
    params: np.ndarray,
    *,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    adam: AdamState | None = None,
    trainable: np.ndarray | None = None,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
) -> FitTrace:
    """Full-batch Adam on ``objective``, keeping the snapshot with the lowest monitor.

    Stops once the monitor has failed to improve for more than ``patience``
    consecutive epochs. ``project`` (if given) is applied after every step.
    """
    if patience > max_epochs:
        raise InputError("patience must not exceed max_epochs")
    adam = adam or AdamState()
    params = np.array(params, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            return _fit(objective, monitor, params, max_epochs, patience, adam, trainable, project)
        except NonFiniteInput as exc:
            # a step pushed intermediate values to inf/nan
            raise FitDiverged(f"fit produced non-finite values: {exc}") from None


def _fit(objective, monitor, params, max_epochs, patience, adam, trainable, project) -> FitTrace:
    best = float(monitor(params))
    if not math.isfinite(best):
        raise FitDiverged("monitor loss is not finite at the initial parameters")
    trace = FitTrace(params.copy(), best, 0, [best], [best])
    wait = 0
    for epoch in range(1, max_epochs + 1):
        loss, grad = objective(params)
        if not (math.isfinite(loss) and np.isfinite(grad).all()):
            raise FitDiverged(f"objective became non-finite at epoch {epoch}")
        params = adam_step(adam, params, grad, trainable)
        if project is not None:
            params = project(params)
        current = float(monitor(params))
        if not math.isfinite(current):
            raise FitDiverged(f"monitor loss became non-finite at epoch {epoch}")
        trace.epochs = epoch
        trace.monitor_history.append(current)
        if current < trace.best_monitor:
            trace.best_monitor = current
            trace.best_params = params.copy()
            wait = 0
        else:
            wait += 1
        trace.best_history.append(trace.best_monitor)
        if wait > patience:
            break
    return trace


@dataclass(frozen=True)
class NodeMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            a = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def validate(self, num_nodes: int) -> None:
        allnodes = np.concatenate([self.train, self.val, self.test])
        if allnodes.size and (allnodes.min() < 0 or allnodes.max() >= num_nodes):
            raise InputError("mask node id out of range")
        if np.unique(allnodes).size != allnodes.size:
            raise InputError("train/val/test masks overlap")

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


@dataclass(frozen=True)
class SplitPlan:
    """Labelled/unlabelled splits, each cross-validated into folds.

    ``assignments[s][f]`` is the mask for split ``s`` and fold ``f``: val is
    fold ``f`` of the labelled set, train is the remaining folds, test is the
    unlabelled remainder.
    """

    seed: int
    labeled_fraction: float
    folds: int
    assignments: list[list[NodeMask]]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "seed": self.seed,
            "labeled_fraction": self.labeled_fraction,
            "folds": self.folds,
            "splits": [[m.to_dict() for m in split] for split in self.assignments],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls(int(d["seed"]), float(d["labeled_fraction"]), int(d["folds"]),
                   [[NodeMask(m["train"], m["val"], m["test"]) for m in split] for split in d["splits"]])


def _largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    base = np.floor(quotas).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # stable: equal remainders go to the lower class id
        order = np.argsort(-(quotas - base), kind="stable")
        base[order[:short]] += 1
    return base


def stratified_folds(labels: np.ndarray, nodes: np.ndarray, folds: int, rng) -> list[np.ndarray]:
    """Deal ``nodes`` class by class into ``folds`` near-equal stratified groups."""
    labels = np.asarray(labels)
    groups: list[list[int]] = [[] for _ in range(folds)]
    pointer = 0
    small = []
    for c in np.unique(labels[nodes]):
        members = nodes[labels[nodes] == c]
        members = members[rng.permutation(members.size)]
        if members.size < folds:
            small.append(int(c))
        for node in members.tolist():
            groups[pointer % folds].append(node)
            pointer += 1
    if small:
        warnings.warn(f"classes {small} have fewer labelled nodes than folds; assigned round-robin",
                      stacklevel=2)
    return [np.sort(np.asarray(g, dtype=np.int64)) for g in groups]


def stratified_split(
    labels,
    num_nodes: int | None = None,
    *,
    labeled_fraction: float = 0.15,
    folds: int = 3,
    splits: int = 1,
    seed: int = 0,
) -> SplitPlan:
    """Stratified labelled/unlabelled splits, each with stratified k-fold train/val masks."""
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size if num_nodes is None else num_nodes
    if labels.size != n:
        raise ShapeMismatch(f"{labels.size} labels for {n} nodes")
    if not 0.0 < labeled_fraction < 1.0:
        raise InputError("labeled_fraction must be in (0, 1)")
    if folds < 2:
        raise InputError("need at least two folds")
    classes, class_sizes = np.unique(labels, return_counts=True)
    total = int(math.floor(labeled_fraction * n + 0.5))
    per_class = _largest_remainder(labeled_fraction * class_sizes, total)
    assignments = []
    for s in range(splits):
        r = rngmod.make_rng(seed, rngmod.SPLIT, s)
        labeled = []
        for c, take in zip(classes, per_class):
            members = np.flatnonzero(labels == c)
            labeled.append(members[r.permutation(members.size)[:take]])
        labeled = np.sort(np.concatenate(labeled))
        test = np.setdiff1d(np.arange(n), labeled)
        groups = stratified_folds(labels, labeled, folds, rngmod.make_rng(seed, rngmod.FOLD, s))
        split_masks = []
        for f in range(folds):
            train = np.concatenate([g for i, g in enumerate(groups) if i != f])
            split_masks.append(NodeMask(train, groups[f], test))
        assignments.append(split_masks)
    return SplitPlan(seed, labeled_fraction, folds, assignments)
