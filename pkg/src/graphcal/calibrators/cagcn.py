"""CaGCN baseline: a two-layer GCN over the logits that outputs one temperature per node."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .. import rng as rngmod
from ..graph import Graph
from ..kernels import softmax_rows, softplus, softplus_grad
from .base import TEMPERATURE_FLOOR, CalibratedOutput, Model, register, scaled_nll, temperature_grad


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with degrees counted after adding self-loops."""
    n = g.num_nodes
    a = sp.csr_matrix((np.ones(g.col_indices.size), g.col_indices, g.row_offsets), shape=(n, n))
    a = a + sp.identity(n, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel() ** -0.5
    return sp.csr_matrix(sp.diags(d) @ a @ sp.diags(d))


@register
class CaGCN(Model):
    method = "cagcn"

    def __init__(self, config, dataset):
        super().__init__(config, dataset)
        k, hid = dataset.num_classes, config.cagcn_hidden
        self.param_shapes = {"W1": (k, hid), "b1": (hid,), "W2": (hid,), "b2": (1,)}
        self.adj = normalized_adjacency(dataset.graph)
        self.x1 = self.adj @ self.z

    def initial(self, seed):
        k, hid = self.dataset.num_classes, self.config.cagcn_hidden
        r = rngmod.make_rng(seed, rngmod.INIT)
        b_in, b_hid = 1.0 / np.sqrt(k), 1.0 / np.sqrt(hid)
        return {
            "W1": r.uniform(-b_in, b_in, (k, hid)),
            "b1": r.uniform(-b_in, b_in, hid),
            "W2": r.uniform(-b_hid, b_hid, hid),
            "b2": r.uniform(-b_hid, b_hid, 1),
        }

    def _forward(self, vec):
        p = self.unpack(vec)
        pre = self.x1 @ p["W1"] + p["b1"]
        hidden = np.maximum(pre, 0.0)
        out = self.adj @ (hidden @ p["W2"]) + p["b2"][0]
        return p, pre, hidden, out, softplus(out) + TEMPERATURE_FLOOR

    def loss_grad(self, vec, rows):
        p, pre, hidden, out, t = self._forward(vec)
        z = self.z[rows]
        loss, g_u = scaled_nll(z / t[rows, None], self.labels[rows])
        g_t = np.zeros(self.z.shape[0])
        g_t[rows] = temperature_grad(g_u, z, t[rows])
        g_out = g_t * softplus_grad(out)
        g_hw = self.adj.T @ g_out
        g_pre = np.outer(g_hw, p["W2"]) * (pre > 0)
        grads = {
            "W1": self.x1.T @ g_pre,
            "b1": g_pre.sum(axis=0),
            "W2": hidden.T @ g_hw,
            "b2": np.array([g_out.sum()]),
        }
        return loss, self.pack(grads)

    def predict(self, vec):
        t = self._forward(vec)[-1]
        return CalibratedOutput(softmax_rows(self.z / t[:, None]), t)
