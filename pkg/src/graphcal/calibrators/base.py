"""Shared calibrator machinery: config, fitted-calibrator object, fit/apply, JSON."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import ClassVar

import numpy as np

from .. import metrics, trainer
from ..data import Dataset
from ..errors import EmptyCalibrationSet, InputError, InvalidConfig, NonFiniteParameter, ShapeMismatch
from ..kernels import log_softmax_rows, softmax_rows

TEMPERATURE_FLOOR = 1e-3
ABLATIONS = ("no_T0", "no_gamma", "no_dconf", "no_attention", "no_sorting")
METHODS = ("ts", "vs", "ets", "cagcn", "gats")


@dataclass(frozen=True)
class CalibratorConfig:
    method: str = "gats"
    heads: int = 8
    bins: int = metrics.DEFAULT_BINS
    weight_decay: float = 0.0
    initial_T0: float = 1.0
    leaky_slope: float = 0.2
    ablations: tuple[str, ...] = ()
    cagcn_hidden: int = 16
    lr: float = trainer.DEFAULT_LR
    max_epochs: int = trainer.DEFAULT_MAX_EPOCHS
    patience: int = trainer.DEFAULT_PATIENCE

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.lower())
        object.__setattr__(self, "ablations", tuple(sorted(set(self.ablations))))
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.heads < 1:
            raise InvalidConfig("heads must be >= 1")
        if self.weight_decay < 0:
            raise InvalidConfig("weight_decay must be >= 0")
        if not 0 < self.leaky_slope < 1:
            raise InvalidConfig("leaky_slope must lie in (0, 1)")
        bad = [a for a in self.ablations if a not in ABLATIONS]
        if bad:
            raise InvalidConfig(f"unknown ablation(s) {bad}; choose from {', '.join(ABLATIONS)}")
        if self.ablations and self.method != "gats":
            raise InvalidConfig("ablation flags only apply to gats")
        if self.patience > self.max_epochs:
            raise InvalidConfig("patience must not exceed max_epochs")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablations"] = list(self.ablations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratorConfig":
        d = dict(d)
        d["ablations"] = tuple(d.get("ablations", ()))
        return cls(**d)


@dataclass(frozen=True)
class CalibratedOutput:
    probs: np.ndarray
    temperatures: np.ndarray | None = None


def scaled_nll(u: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL of softmax(u) and its gradient with respect to ``u``."""
    logp = log_softmax_rows(u)
    n = y.size
    loss = -float(logp[np.arange(n), y].sum()) / n
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    return loss, g / n


def temperature_grad(g_u: np.ndarray, z: np.ndarray, t: np.ndarray) -> np.ndarray:
    """dL/dT_i for u_i = z_i / T_i, given dL/du."""
    return -(g_u * z).sum(axis=1) / (t * t)


class Model:
    """A differentiable calibration map bound to one dataset.

    Subclasses declare ``param_shapes`` and implement ``initial``,
    ``loss_grad`` and ``predict``. Parameters travel as one flat vector.
    """

    method: ClassVar[str]
    projected: ClassVar[bool] = False

    def __init__(self, config: CalibratorConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        self.z = dataset.logits
        self.labels = dataset.labels
        self.param_shapes: dict[str, tuple[int, ...]] = {}

    # flat-vector helpers
    @property
    def size(self) -> int:
        return sum(math.prod(s) for s in self.param_shapes.values())

    def unpack(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        out, pos = {}, 0
        for name, shape in self.param_shapes.items():
            k = math.prod(shape)
            out[name] = vec[pos:pos + k].reshape(shape)
            pos += k
        return out

    def pack(self, params: dict[str, np.ndarray]) -> np.ndarray:
        parts = []
        for name, shape in self.param_shapes.items():
            a = np.asarray(params[name], dtype=np.float64)
            if a.shape != shape:
                raise ShapeMismatch(f"parameter {name}: expected shape {shape}, got {a.shape}")
            parts.append(a.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def trainable(self) -> np.ndarray:
        return np.ones(self.size, dtype=bool)

    def initial(self, seed: int) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def loss_grad(self, vec: np.ndarray, rows: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean NLL over ``rows`` and its gradient."""
        raise NotImplementedError

    def loss(self, vec: np.ndarray, rows: np.ndarray) -> float:
        return self.loss_grad(vec, rows)[0]

    def predict(self, vec: np.ndarray) -> CalibratedOutput:
        raise NotImplementedError

    def project(self, vec: np.ndarray) -> np.ndarray:
        return vec

    def prepare(self, seed: int) -> None:
        """Hook run before optimisation (ETS fits its inner temperature here)."""


@dataclass
class Calibrator:
    """A fitted calibrator: method, config echo, named parameters and seed."""

    config: CalibratorConfig
    params: dict[str, np.ndarray]
    num_classes: int
    seed: int = 0
    fit_info: dict = field(default_factory=dict)

    @property
    def method(self) -> str:
        return self.config.method

    @property
    def num_parameters(self) -> int:
        return int(sum(np.asarray(v).size for v in self.params.values()))

    def bind(self, dataset: Dataset) -> tuple[Model, np.ndarray]:
        if dataset.num_classes != self.num_classes:
            raise ShapeMismatch(f"calibrator fitted for {self.num_classes} classes, "
                                f"dataset has {dataset.num_classes}")
        model = make_model(self.config, dataset)
        vec = model.pack(self.params)
        if not np.isfinite(vec).all():
            raise NonFiniteParameter("calibrator parameters must be finite")
        return model, vec

    def apply(self, dataset: Dataset) -> CalibratedOutput:
        return apply_calibrator(self, dataset)

    def with_params(self, **params) -> "Calibrator":
        new = {k: np.asarray(v, dtype=np.float64) for k, v in self.params.items()}
        new.update({k: np.asarray(v, dtype=np.float64) for k, v in params.items()})
        return replace(self, params=new)


_REGISTRY: dict[str, type[Model]] = {}


def register(cls: type[Model]) -> type[Model]:
    _REGISTRY[cls.method] = cls
    return cls


def make_model(config: CalibratorConfig, dataset: Dataset) -> Model:
    return _REGISTRY[config.method](config, dataset)


def initial_calibrator(config: CalibratorConfig, dataset: Dataset, seed: int = 0) -> Calibrator:
    """An unfitted calibrator holding the method's initial parameters."""
    model = make_model(config, dataset)
    model.prepare(seed)
    return Calibrator(config, model.unpack(model.pack(model.initial(seed)).copy()), dataset.num_classes, seed)


def fit_calibrator(config: CalibratorConfig, dataset: Dataset, seed: int = 0) -> Calibrator:
    """Minimise NLL on the val mask with Adam, early-stopped on train-mask NLL."""
    val, train = dataset.mask.val, dataset.mask.train
    if val.size == 0:
        raise EmptyCalibrationSet("the validation mask is empty")
    if train.size == 0:
        raise InputError("the train mask is empty; it is needed for early stopping")
    model = make_model(config, dataset)
    model.prepare(seed)
    x0 = model.pack(model.initial(seed))
    result = trainer.fit_with_early_stopping(
        lambda v: model.loss_grad(v, val),
        lambda v: model.loss(v, train),
        x0,
        max_epochs=config.max_epochs,
        patience=config.patience,
        adam=trainer.AdamState(lr=config.lr, weight_decay=config.weight_decay),
        trainable=model.trainable(),
        project=model.project if model.projected else None,
    )
    info = {"epochs": result.epochs, "best_monitor_nll": result.best_monitor,
            "initial_monitor_nll": result.monitor_history[0]}
    return Calibrator(config, model.unpack(result.best_params.copy()), dataset.num_classes, seed, info)


def apply_calibrator(c: Calibrator, dataset: Dataset) -> CalibratedOutput:
    model, vec = c.bind(dataset)
    return model.predict(vec)


def uncalibrated(dataset: Dataset) -> CalibratedOutput:
    return CalibratedOutput(softmax_rows(dataset.logits))
