"""Graph attention temperature scaling.

Each node gets its own temperature

    T_i = mean_h softplus(omega * dconf_i + sum_{j in N(i)+i} alpha_ij * gamma_j * tau_ij^h) + T0

where ``tau_j^h = theta_h . zt_j`` is a linear read-out of the node's min-max
normalised, descending-sorted logits, ``dconf`` is the node's confidence minus
its neighbours' mean confidence (from the uncalibrated softmax, held fixed),
``gamma`` is ``gamma_t`` on train nodes, ``gamma_n`` on their direct
neighbours and 1 elsewhere, and ``alpha_i.`` is a softmax over the
self-looped neighbourhood of leaky_relu(z_i . z_j / (gamma_i gamma_j)).
Temperatures are floored at 1e-3 so they stay positive whatever T0 learns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rng as rngmod
from ..diagnostics import relative_confidence
from ..errors import NonFiniteParameter
from ..graph import neighbors_of_set, self_loop_csr
from ..kernels import normalize_and_sort_logits, softmax_rows, softplus, softplus_grad
from .base import TEMPERATURE_FLOOR, CalibratedOutput, Model, register, scaled_nll, temperature_grad

TRAIN, TRAIN_NEIGHBOR, OTHER = 0, 1, 2
_SCORE_LIMIT = 1e300


@dataclass
class _Rows:
    """Self-looped neighbourhoods of a fixed set of target rows, flattened to edges."""

    rows: np.ndarray
    local: np.ndarray   # edge -> position of its target row in ``rows``
    src: np.ndarray     # edge -> target node id
    dst: np.ndarray     # edge -> neighbour node id
    starts: np.ndarray  # first edge of each row
    dots: np.ndarray    # z_src . z_dst


@register
class GATS(Model):
    method = "gats"

    def __init__(self, config, dataset):
        super().__init__(config, dataset)
        k, h = dataset.num_classes, config.heads
        self.param_shapes = {"T0": (1,), "omega": (1,), "gamma_t": (1,), "gamma_n": (1,), "theta": (h, k)}
        ab = set(config.ablations)
        self.use_attention = "no_attention" not in ab
        self.zt = normalize_and_sort_logits(self.z, sort="no_sorting" not in ab)
        self.dconf = relative_confidence(softmax_rows(self.z), dataset.graph)
        g = dataset.graph
        self.category = np.full(g.num_nodes, OTHER, dtype=np.int64)
        if dataset.mask.train.size:
            self.category[neighbors_of_set(g, dataset.mask.train)] = TRAIN_NEIGHBOR
            self.category[dataset.mask.train] = TRAIN
        self._offsets, self._cols = self_loop_csr(g)
        self._cache: dict[bytes, _Rows] = {}

    def initial(self, seed):
        k, h = self.dataset.num_classes, self.config.heads
        ab = set(self.config.ablations)
        bound = 1.0 / np.sqrt(k)
        theta = np.stack([rngmod.make_rng(seed, rngmod.INIT, head).uniform(-bound, bound, k)
                          for head in range(h)])
        return {
            "T0": np.array([0.0 if "no_T0" in ab else self.config.initial_T0]),
            "omega": np.zeros(1),
            "gamma_t": np.ones(1),
            "gamma_n": np.ones(1),
            "theta": theta,
        }

    def trainable(self):
        ab = set(self.config.ablations)
        frozen = {
            "T0": "no_T0" in ab,
            "omega": "no_dconf" in ab,
            "gamma_t": "no_gamma" in ab or "no_attention" in ab,
            "gamma_n": "no_gamma" in ab or "no_attention" in ab,
            "theta": "no_attention" in ab,
        }
        return np.concatenate([np.full(int(np.prod(s)), not frozen[n]) for n, s in self.param_shapes.items()])

    def _rows(self, rows) -> _Rows:
        rows = np.asarray(rows, dtype=np.int64)
        key = rows.tobytes()
        if key not in self._cache:
            first = self._offsets[rows]
            counts = self._offsets[rows + 1] - first
            starts = np.zeros(rows.size, dtype=np.int64)
            np.cumsum(counts[:-1], out=starts[1:])
            local = np.repeat(np.arange(rows.size), counts)
            edge = np.arange(counts.sum()) - starts[local] + first[local]
            src, dst = rows[local], self._cols[edge]
            dots = np.einsum("ek,ek->e", self.z[src], self.z[dst])
            self._cache[key] = _Rows(rows, local, src, dst, starts, dots)
        return self._cache[key]

    def _gamma(self, p) -> np.ndarray:
        return np.array([p["gamma_t"][0], p["gamma_n"][0], 1.0])[self.category]

    def _forward(self, vec, r: _Rows):
        if not np.isfinite(vec).all():
            raise NonFiniteParameter("gats parameters must be finite")
        p = self.unpack(vec)
        a = p["omega"][0] * self.dconf[r.rows][:, None]
        a = np.repeat(a, self.config.heads, axis=1)
        cache = {"p": p}
        if self.use_attention:
            gamma = self._gamma(p)
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                s = r.dots / (gamma[r.src] * gamma[r.dst])
            # gamma near 0 overflows the score; keep it finite so the softmax stays defined
            s = np.nan_to_num(s, nan=0.0, posinf=_SCORE_LIMIT, neginf=-_SCORE_LIMIT)
            e = np.where(s >= 0, s, self.config.leaky_slope * s)
            ex = np.exp(e - np.maximum.reduceat(e, r.starts)[r.local])
            alpha = ex / np.add.reduceat(ex, r.starts)[r.local]
            tau = self.zt @ p["theta"].T                       # (N, H)
            v = gamma[:, None] * tau
            a = a + np.add.reduceat(alpha[:, None] * v[r.dst], r.starts, axis=0)
            cache.update(gamma=gamma, s=s, alpha=alpha, tau=tau, v=v)
        t_raw = softplus(a).mean(axis=1) + p["T0"][0]
        cache.update(a=a, t_raw=t_raw)
        return np.maximum(t_raw, TEMPERATURE_FLOOR), cache

    def temperatures(self, vec, rows=None) -> np.ndarray:
        rows = np.arange(self.z.shape[0]) if rows is None else rows
        return self._forward(vec, self._rows(rows))[0]

    def loss_grad(self, vec, rows):
        r = self._rows(rows)
        t, c = self._forward(vec, r)
        p = c["p"]
        z = self.z[r.rows]
        loss, g_u = scaled_nll(z / t[:, None], self.labels[r.rows])
        g_t = np.where(c["t_raw"] >= TEMPERATURE_FLOOR, temperature_grad(g_u, z, t), 0.0)

        h = self.config.heads
        g_a = g_t[:, None] * softplus_grad(c["a"]) / h          # (R, H)
        grads = {
            "T0": np.array([g_t.sum()]),
            "omega": np.array([(g_a * self.dconf[r.rows][:, None]).sum()]),
            "gamma_t": np.zeros(1),
            "gamma_n": np.zeros(1),
            "theta": np.zeros_like(p["theta"]),
        }
        if self.use_attention:
            n = self.z.shape[0]
            alpha, gamma, s, v = c["alpha"], c["gamma"], c["s"], c["v"]
            g_a_edge = g_a[r.local]                              # (E, H)
            contrib = alpha[:, None] * g_a_edge
            g_v = np.stack([np.bincount(r.dst, weights=contrib[:, k], minlength=n) for k in range(h)], axis=1)
            grads["theta"] = (g_v * gamma[:, None]).T @ self.zt
            g_gamma = (g_v * c["tau"]).sum(axis=1)
            # softmax over each neighbourhood, then leaky relu
            g_alpha = (g_a_edge * v[r.dst]).sum(axis=1)
            g_e = alpha * (g_alpha - np.add.reduceat(alpha * g_alpha, r.starts)[r.local])
            g_s = g_e * np.where(s >= 0, 1.0, self.config.leaky_slope)
            g_gamma += np.bincount(r.src, weights=-g_s * s / gamma[r.src], minlength=n)
            g_gamma += np.bincount(r.dst, weights=-g_s * s / gamma[r.dst], minlength=n)
            grads["gamma_t"] = np.array([g_gamma[self.category == TRAIN].sum()])
            grads["gamma_n"] = np.array([g_gamma[self.category == TRAIN_NEIGHBOR].sum()])
        return loss, self.pack(grads)

    def predict(self, vec):
        t = self.temperatures(vec)
        return CalibratedOutput(softmax_rows(self.z / t[:, None]), t)
