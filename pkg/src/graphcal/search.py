"""Hyperparameter grid search and the repeated split/fold/init evaluation protocol."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import metrics
from .calibrators import CalibratorConfig, apply_calibrator, fit_calibrator
from .calibrators.base import Calibrator
from .data import Dataset
from .errors import FitDiverged, GridExhausted
from .trainer import SplitPlan

WEIGHT_DECAY_GRID = (0.0, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 2e-1, 3e-1)
INITIAL_T0_GRID = (1.0, 1.5)


@dataclass(frozen=True)
class GridCell:
    weight_decay: float
    initial_T0: float
    mean_monitor_nll: float  # NaN when any fit in the cell diverged

    @property
    def valid(self) -> bool:
        return not math.isnan(self.mean_monitor_nll)


@dataclass(frozen=True)
class GridResult:
    best: CalibratorConfig
    best_index: int
    cells: list[GridCell]

    def to_dict(self) -> dict:
        return {
            "best_index": self.best_index,
            "best": {"weight_decay": self.best.weight_decay, "initial_T0": self.best.initial_T0},
            "cells": [{"weight_decay": c.weight_decay, "initial_T0": c.initial_T0,
                       "mean_monitor_nll": None if not c.valid else c.mean_monitor_nll}
                      for c in self.cells],
        }


def grid_search(dataset: Dataset, config: CalibratorConfig, plan: SplitPlan,
                weight_decays=WEIGHT_DECAY_GRID, initial_T0s=INITIAL_T0_GRID, seed: int = 0) -> GridResult:
    """Pick the (weight decay, initial T0) cell with the lowest mean early-stopped monitor NLL.

    Every cell is fitted on every (split, fold) of ``plan``; ties go to the
    earliest cell in grid order.
    """
    cells = []
    for wd in weight_decays:
        for t0 in initial_T0s:
            cfg = replace(config, weight_decay=float(wd), initial_T0=float(t0))
            total, runs = 0.0, 0
            try:
                for split in plan.assignments:
                    for mask in split:
                        c = fit_calibrator(cfg, dataset.with_mask(mask), seed)
                        total += c.fit_info["best_monitor_nll"]
                        runs += 1
                score = total / runs
            except FitDiverged:
                score = math.nan
            cells.append(GridCell(float(wd), float(t0), score))
    if not cells:
        raise GridExhausted("empty hyperparameter grid")
    best_i, best_score = -1, math.inf
    for i, cell in enumerate(cells):
        if cell.valid and cell.mean_monitor_nll < best_score:
            best_i, best_score = i, cell.mean_monitor_nll
    if best_i < 0:
        raise GridExhausted("every grid cell diverged")
    best = cells[best_i]
    return GridResult(replace(config, weight_decay=best.weight_decay, initial_T0=best.initial_T0), best_i, cells)


@dataclass(frozen=True)
class ProtocolRun:
    split: int
    fold: int
    init: int
    result: metrics.EvalResult
    calibrator: Calibrator


def run_protocol(dataset: Dataset, config: CalibratorConfig, plan: SplitPlan,
                 inits: int = 1, seed: int = 0) -> list[ProtocolRun]:
    """Fit and evaluate once per (split, fold, init); test metrics on each split's unlabelled nodes."""
    runs = []
    for s, split in enumerate(plan.assignments):
        for f, mask in enumerate(split):
            ds = dataset.with_mask(mask)
            for i in range(inits):
                c = fit_calibrator(config, ds, seed + i)
                probs = apply_calibrator(c, ds).probs
                runs.append(ProtocolRun(s, f, i, metrics.evaluate(probs, ds.labels, mask.test, config.bins), c))
    return runs


def summarize(runs: list[ProtocolRun]) -> dict[str, dict[str, float]]:
    """Mean and population standard deviation of each metric, accumulated in run order."""
    keys = list(metrics.EvalResult.__dataclass_fields__)
    out = {}
    for k in keys:
        vals = np.array([getattr(r.result, k) for r in runs])
        out[k] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out
