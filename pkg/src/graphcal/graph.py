"""Undirected graphs in compressed sparse row form.

Distances to unreachable nodes are reported as ``UNREACHABLE`` (``math.inf``)
in a float array, so no finite value can be mistaken for the marker.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EmptySourceSet, InputError, InvalidEdge

UNREACHABLE = math.inf


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected graph without self-loops or parallel edges."""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.row_offsets[-1]) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i]:self.row_offsets[i + 1]]

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once as ``(u, v)`` with ``u < v``, shape (E, 2)."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = src < self.col_indices
        return np.stack([src[keep], self.col_indices[keep]], axis=1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices))


def build_graph(edges: Iterable[tuple[int, int]] | np.ndarray, num_nodes: int) -> Graph:
    """Symmetric CSR graph from an edge list; loops dropped, duplicates merged."""
    e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    e = e.reshape(-1, 2)
    if num_nodes < 0:
        raise InputError(f"num_nodes must be nonnegative, got {num_nodes}")
    bad = (e < 0) | (e >= num_nodes)
    if bad.any():
        u, v = e[np.flatnonzero(bad.any(axis=1))[0]]
        raise InvalidEdge(f"edge ({u}, {v}) out of range for {num_nodes} nodes")
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]])
    # unique on a linearised key also sorts by (row, col)
    key = np.unique(both[:, 0] * max(num_nodes, 1) + both[:, 1])
    rows, cols = np.divmod(key, max(num_nodes, 1))
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return Graph(num_nodes, _frozen(offsets), _frozen(cols.astype(np.int64)))


def neighbors_with_self(g: Graph, i: int) -> list[int]:
    nb = g.neighbors(i)
    pos = int(np.searchsorted(nb, i))
    return [*nb[:pos].tolist(), i, *nb[pos:].tolist()]


def self_loop_csr(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """Row offsets and sorted columns of the graph with a self-loop on every node."""
    rows = np.concatenate([np.repeat(np.arange(g.num_nodes), g.degrees), np.arange(g.num_nodes)])
    cols = np.concatenate([g.col_indices, np.arange(g.num_nodes)])
    order = np.lexsort((cols, rows))
    offsets = g.row_offsets + np.arange(g.num_nodes + 1)
    return offsets, cols[order]


def bfs_distance_to_set(g: Graph, sources: Iterable[int]) -> np.ndarray:
    """Hop distance from every node to the nearest source (``UNREACHABLE`` if none)."""
    src = np.unique(np.asarray(list(sources) if not isinstance(sources, np.ndarray) else sources,
                               dtype=np.int64))
    if src.size == 0:
        raise EmptySourceSet("bfs needs at least one source node")
    if src[0] < 0 or src[-1] >= g.num_nodes:
        raise InputError("source node out of range")
    dist = np.full(g.num_nodes, UNREACHABLE)
    dist[src] = 0.0
    queue = deque(src.tolist())
    offsets, cols = g.row_offsets, g.col_indices
    while queue:
        u = queue.popleft()
        du = dist[u] + 1.0
        for v in cols[offsets[u]:offsets[u + 1]].tolist():
            if dist[v] == UNREACHABLE:
                dist[v] = du
                queue.append(v)
    return dist


def _agreement_counts(g: Graph, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels)
    if labels.shape != (g.num_nodes,):
        raise InputError(f"expected {g.num_nodes} labels, got shape {labels.shape}")
    src = np.repeat(np.arange(g.num_nodes), g.degrees)
    same = labels[src] == labels[g.col_indices]
    agree = np.bincount(src[same], minlength=g.num_nodes)
    return agree, g.degrees - agree


def node_homophily(g: Graph, pred_labels: np.ndarray) -> np.ndarray:
    """ln((n_agree + 1) / (n_disagree + 1)) per node, under the given labels."""
    agree, disagree = _agreement_counts(g, pred_labels)
    return np.log((agree + 1.0) / (disagree + 1.0))


def homophily_index(g: Graph, true_labels: np.ndarray) -> float:
    """Mean same-label neighbour fraction; isolated nodes count as 0."""
    if g.num_nodes == 0:
        return 0.0
    agree, _ = _agreement_counts(g, true_labels)
    deg = g.degrees
    frac = np.divide(agree, deg, out=np.zeros(g.num_nodes), where=deg > 0)
    return float(frac.mean())


def neighbors_of_set(g: Graph, nodes: np.ndarray) -> np.ndarray:
    """Direct neighbours of ``nodes`` that are not themselves in ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    inside = np.zeros(g.num_nodes, dtype=bool)
    inside[nodes] = True
    src = np.repeat(np.arange(g.num_nodes), g.degrees)
    hit = np.zeros(g.num_nodes, dtype=bool)
    hit[g.col_indices[inside[src]]] = True
    return np.flatnonzero(hit & ~inside)


def read_edge_file(path: str | Path, num_nodes: int) -> Graph:
    """Parse a whitespace edge list; ``#`` lines are comments."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected two node ids, got {s!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise InvalidEdge(f"{path}:{lineno}: edge ({u}, {v}) out of range for {num_nodes} nodes")
            edges.append((u, v))
    return build_graph(np.asarray(edges, dtype=np.int64).reshape(-1, 2), num_nodes)


def write_edge_file(path: str | Path, g: Graph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v in g.edge_array().tolist():
            fh.write(f"{u} {v}\n")
