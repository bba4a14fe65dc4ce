"""Graph-agnostic baselines: temperature, vector and ensemble temperature scaling."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..kernels import softmax_rows
from ..metrics import NLL_FLOOR
from .base import (
    TEMPERATURE_FLOOR,
    CalibratedOutput,
    Model,
    fit_calibrator,
    register,
    scaled_nll,
    temperature_grad,
)


@register
class TemperatureScaling(Model):
    """softmax(z / T) with one global temperature."""

    method = "ts"

    def __init__(self, config, dataset):
        super().__init__(config, dataset)
        self.param_shapes = {"T": (1,)}

    def initial(self, seed):
        return {"T": np.ones(1)}

    def _t(self, vec):
        return max(float(vec[0]), TEMPERATURE_FLOOR)

    def loss_grad(self, vec, rows):
        t = self._t(vec)
        z = self.z[rows]
        loss, g_u = scaled_nll(z / t, self.labels[rows])
        if vec[0] < TEMPERATURE_FLOOR:
            return loss, np.zeros(1)
        return loss, np.array([temperature_grad(g_u, z, np.full(len(rows), t)).sum()])

    def predict(self, vec):
        t = self._t(vec)
        return CalibratedOutput(softmax_rows(self.z / t), np.full(self.z.shape[0], t))


@register
class VectorScaling(Model):
    """softmax(w * z + b) with per-class scale and bias. Not accuracy-preserving."""

    method = "vs"

    def __init__(self, config, dataset):
        super().__init__(config, dataset)
        k = dataset.num_classes
        self.param_shapes = {"w": (k,), "b": (k,)}

    def initial(self, seed):
        k = self.dataset.num_classes
        return {"w": np.ones(k), "b": np.zeros(k)}

    def loss_grad(self, vec, rows):
        p = self.unpack(vec)
        z = self.z[rows]
        loss, g_u = scaled_nll(z * p["w"] + p["b"], self.labels[rows])
        return loss, np.concatenate([(g_u * z).sum(axis=0), g_u.sum(axis=0)])

    def predict(self, vec):
        p = self.unpack(vec)
        return CalibratedOutput(softmax_rows(self.z * p["w"] + p["b"]))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum(x) = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@register
class EnsembleTemperatureScaling(Model):
    """w1 * softmax(z / T) + w2 * softmax(z) + w3 / K with w on the simplex.

    ``T`` comes from a temperature-scaling fit done in :meth:`prepare`
    and is frozen afterwards.
    """

    method = "ets"
    projected = True

    def __init__(self, config, dataset):
        super().__init__(config, dataset)
        self.param_shapes = {"weights": (3,), "T_ts": (1,)}
        self._raw = softmax_rows(self.z)
        self._t_ts = None

    def prepare(self, seed):
        ts = fit_calibrator(replace(self.config, method="ts"), self.dataset, seed)
        self._t_ts = float(ts.params["T"][0])

    def initial(self, seed):
        if self._t_ts is None:
            self.prepare(seed)
        return {"weights": np.array([1.0, 0.0, 0.0]), "T_ts": np.array([self._t_ts])}

    def trainable(self):
        return np.array([True, True, True, False])

    def project(self, vec):
        out = vec.copy()
        out[:3] = project_to_simplex(vec[:3])
        return out

    def _components(self, vec, rows):
        t = max(float(vec[3]), TEMPERATURE_FLOOR)
        k = self.z.shape[1]
        sharp = softmax_rows(self.z[rows] / t)
        return sharp, self._raw[rows], np.full((len(rows), k), 1.0 / k)

    def loss_grad(self, vec, rows):
        w = vec[:3]
        comps = self._components(vec, rows)
        y = self.labels[rows]
        picked = np.stack([c[np.arange(y.size), y] for c in comps], axis=1)
        py = picked @ w
        clipped = py < NLL_FLOOR
        py = np.maximum(py, NLL_FLOOR)
        loss = -float(np.mean(np.log(py)))
        inv = np.where(clipped, 0.0, 1.0 / py)
        gw = -(inv[:, None] * picked).mean(axis=0)
        # T_ts is frozen during fitting, but its derivative keeps the gradient complete
        t = float(vec[3])
        if t < TEMPERATURE_FLOOR:
            gt = 0.0
        else:
            z = self.z[rows]
            sharp = comps[0]
            dq = picked[:, 0] * -(z[np.arange(y.size), y] - (sharp * z).sum(axis=1)) / (t * t)
            gt = -float(np.mean(inv * w[0] * dq))
        return loss, np.concatenate([gw, [gt]])

    def predict(self, vec):
        w = vec[:3]
        sharp, raw, unif = self._components(vec, np.arange(self.z.shape[0]))
        return CalibratedOutput(w[0] * sharp + w[1] * raw + w[2] * unif)
