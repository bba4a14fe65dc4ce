"""Dataset container and the plain-text file formats it is stored in."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, ManifestError, ShapeMismatch
from .graph import Graph, read_edge_file, write_edge_file
from .trainer import NodeMask

FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Dataset:
    """A graph, per-node logits and labels, and one train/val/test mask."""

    graph: Graph
    logits: np.ndarray
    labels: np.ndarray
    mask: NodeMask

    def __post_init__(self):
        n = self.graph.num_nodes
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if logits.ndim != 2 or logits.shape[0] != n:
            raise ShapeMismatch(f"logits shape {logits.shape} does not match {n} nodes")
        if labels.shape != (n,):
            raise ShapeMismatch(f"labels shape {labels.shape} does not match {n} nodes")
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
            raise InputError("label outside [0, num_classes)")
        self.mask.validate(n)
        logits.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_classes(self) -> int:
        return self.logits.shape[1]

    def with_mask(self, mask: NodeMask) -> "Dataset":
        return Dataset(self.graph, self.logits, self.labels, mask)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def read_labels(path: str | Path, num_nodes: int) -> np.ndarray:
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            try:
                node, cls = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: expected 'node_id<TAB>class_id', got {s!r}") from None
            if len(parts) != 2 or not 0 <= node < num_nodes:
                raise InputError(f"{path}:{lineno}: bad label line {s!r}")
            if labels[node] != -1:
                raise InputError(f"{path}:{lineno}: duplicate label for node {node}")
            labels[node] = cls
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise InputError(f"{path}: no label for node {missing[0]} ({missing.size} missing)")
    return labels


def read_matrix(path: str | Path, num_nodes: int, num_cols: int) -> np.ndarray:
    """Rows of ``node_id v_1 ... v_K``; also used for probability files."""
    out = np.full((num_nodes, num_cols), np.nan)
    seen = np.zeros(num_nodes, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != num_cols + 1:
                raise InputError(f"{path}:{lineno}: expected node id and {num_cols} values, got {len(parts)} fields")
            try:
                node = int(parts[0])
                row = [float(x) for x in parts[1:]]
            except ValueError:
                raise InputError(f"{path}:{lineno}: unparseable number in {s!r}") from None
            if not 0 <= node < num_nodes:
                raise InputError(f"{path}:{lineno}: node id {node} out of range")
            if seen[node]:
                raise InputError(f"{path}:{lineno}: duplicate row for node {node}")
            if not np.isfinite(row).all():
                raise InputError(f"{path}:{lineno}: non-finite value")
            out[node] = row
            seen[node] = True
    if not seen.all():
        raise InputError(f"{path}: missing row for node {int(np.flatnonzero(~seen)[0])}")
    return out


def read_split(path: str | Path) -> NodeMask:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return NodeMask(d["train"], d["val"], d["test"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: invalid split file ({exc})") from None


def format_labels(labels: np.ndarray) -> str:
    return "".join(f"{i}\t{int(c)}\n" for i, c in enumerate(labels))


def format_matrix(m: np.ndarray) -> str:
    return "".join(f"{i} " + " ".join(repr(float(x)) for x in row) + "\n" for i, row in enumerate(m))


def split_json(mask: NodeMask, **extra) -> dict:
    return {"format_version": FORMAT_VERSION, **extra, **mask.to_dict()}


@dataclass(frozen=True)
class Manifest:
    path: Path
    edges: Path
    labels: Path
    logits: Path
    split: Path | None
    num_nodes: int
    num_classes: int
    seed: int

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise ManifestError(f"{path}: manifest not found") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        base = path.parent
        try:
            m = cls(
                path=path,
                edges=base / d["edges"],
                labels=base / d["labels"],
                logits=base / d["logits"],
                split=(base / d["split"]) if d.get("split") else None,
                num_nodes=int(d["num_nodes"]),
                num_classes=int(d["num_classes"]),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: missing or invalid field {exc}") from None
        for f in (m.edges, m.labels, m.logits, m.split):
            if f is not None and not f.is_file():
                raise ManifestError(f"{path}: referenced file not found: {f}")
        return m

    def load_dataset(self, mask: NodeMask | None = None) -> Dataset:
        g = read_edge_file(self.edges, self.num_nodes)
        labels = read_labels(self.labels, self.num_nodes)
        logits = read_matrix(self.logits, self.num_nodes, self.num_classes)
        if mask is None:
            if self.split is None:
                raise ManifestError(f"{self.path}: no split file; pass --split-seed to derive one")
            mask = read_split(self.split)
        return Dataset(g, logits, labels, mask)


def write_dataset(out_dir: str | Path, ds: Dataset, seed: int = 0, prefix: str = "") -> Path:
    """Write the four dataset files plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {k: f"{prefix}{k}" for k in ("edges.txt", "labels.tsv", "logits.txt", "split.json")}
    tmp_edges = out / (names["edges.txt"] + ".tmp")
    write_edge_file(tmp_edges, ds.graph)
    os.replace(tmp_edges, out / names["edges.txt"])
    atomic_write_text(out / names["labels.tsv"], format_labels(ds.labels))
    atomic_write_text(out / names["logits.txt"], format_matrix(ds.logits))
    atomic_write_text(out / names["split.json"], dump_json(split_json(ds.mask)))
    manifest = {
        "format_version": FORMAT_VERSION,
        "edges": names["edges.txt"],
        "labels": names["labels.tsv"],
        "logits": names["logits.txt"],
        "split": names["split.json"],
        "num_nodes": ds.num_nodes,
        "num_classes": ds.num_classes,
        "seed": seed,
    }
    path = out / f"{prefix}manifest.json"
    atomic_write_text(path, dump_json(manifest))
    return path
