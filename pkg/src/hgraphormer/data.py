"""Dataset container, on-disk format, synthetic fixtures and checkpoints.

On-disk layout (all paths in the manifest are relative to the manifest)::

    manifest.json   {"name", "num_nodes", "num_classes", "edges",
                     "features", "labels", optional "weights"}
    edges.txt       one hyperedge per line, whitespace-separated node ids,
                    '#' starts a comment
    features.tsv    one row per node, tab-separated reals
    labels.tsv      node_id<TAB>class_id, one line per node
    weights.txt     optional, one positive real per hyperedge line
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import Params
from .errors import (
    DataError,
    InvalidParameters,
    LabelOutOfRange,
    MalformedLine,
    ShapeMismatch,
    StratificationWarning,
)
from .hypergraph import Hypergraph, from_edge_list, hypergraph_stats


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    hypergraph: Hypergraph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        n = self.hypergraph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ShapeMismatch(f"features shape {self.features.shape} does not match {n} nodes")
        if self.labels.shape != (n,):
            raise ShapeMismatch(f"{self.labels.shape[0]} labels for {n} nodes")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {self.num_classes})")
        counts = np.bincount(self.labels, minlength=self.num_classes)
        if np.any(counts < 10):
            warnings.warn(
                f"dataset {self.name!r}: some classes have fewer than 10 nodes "
                f"({counts.tolist()}); 10-fold stratification degenerates",
                StratificationWarning,
                stacklevel=3,
            )

    @property
    def num_nodes(self) -> int:
        return self.hypergraph.num_nodes

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and self.num_classes == other.num_classes
            and self.hypergraph == other.hypergraph
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def stats(self) -> dict:
        out = {"name": self.name}
        out.update(hypergraph_stats(self.hypergraph))
        out["feature_dim"] = self.feature_dim
        out["num_classes"] = self.num_classes
        out["class_counts"] = np.bincount(self.labels, minlength=self.num_classes).tolist()
        return out


# ----------------------------------------------------------------- loading


def _data_lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def read_edges(path, num_nodes: int) -> list:
    path = Path(path)
    edges = []
    for lineno, line in _data_lines(path):
        try:
            ids = [int(tok) for tok in line.split()]
        except ValueError:
            raise MalformedLine(path, lineno, f"non-integer node id in {line!r}") from None
        if len(set(ids)) != len(ids):
            raise MalformedLine(path, lineno, "duplicate node id within a hyperedge")
        if len(ids) < 2:
            raise MalformedLine(path, lineno, "hyperedge needs at least 2 nodes")
        bad = [v for v in ids if not 0 <= v < num_nodes]
        if bad:
            raise MalformedLine(path, lineno, f"node id {bad[0]} not in [0, {num_nodes})")
        edges.append(ids)
    return edges


def read_weights(path) -> np.ndarray:
    path = Path(path)
    out = []
    for lineno, line in _data_lines(path):
        try:
            out.append(float(line))
        except ValueError:
            raise MalformedLine(path, lineno, f"not a real number: {line!r}") from None
    return np.array(out)


def read_features(path) -> np.ndarray:
    path = Path(path)
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                row = [float(tok) for tok in raw.split()]
            except ValueError:
                raise MalformedLine(path, lineno, "non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise MalformedLine(path, lineno, f"expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise ShapeMismatch(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def read_labels(path, num_nodes: int) -> np.ndarray:
    path = Path(path)
    labels = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(path, lineno, "expected 'node_id<TAB>class_id'")
        try:
            node, cls = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedLine(path, lineno, "node and class ids must be integers") from None
        if not 0 <= node < num_nodes:
            raise MalformedLine(path, lineno, f"node id {node} not in [0, {num_nodes})")
        if labels[node] != -1:
            raise MalformedLine(path, lineno, f"node {node} labelled twice")
        labels[node] = cls
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise ShapeMismatch(
            f"{path}: {num_nodes - missing.size} labels for {num_nodes} nodes "
            f"(first unlabelled node {missing[0]})"
        )
    return labels


def load_dataset(manifest_path) -> Dataset:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedLine(manifest_path, exc.lineno, f"invalid JSON: {exc.msg}") from None
    required = ("name", "num_nodes", "num_classes", "edges", "features", "labels")
    missing = [k for k in required if k not in manifest]
    if missing:
        raise DataError(f"{manifest_path}: manifest lacks {missing}")
    base = manifest_path.parent
    paths = {}
    for key in ("edges", "features", "labels", "weights"):
        if manifest.get(key):
            p = base / manifest[key]
            if not p.is_file():
                raise FileNotFoundError(f"{key} file not found: {p}")
            paths[key] = p

    n = int(manifest["num_nodes"])
    C = int(manifest["num_classes"])
    edges = read_edges(paths["edges"], n)
    weights = read_weights(paths["weights"]) if "weights" in paths else None
    if weights is not None and weights.shape[0] != len(edges):
        raise ShapeMismatch(f"{paths['weights']}: {weights.shape[0]} weights for {len(edges)} hyperedges")
    features = read_features(paths["features"])
    if features.shape[0] != n:
        raise ShapeMismatch(f"{paths['features']}: {features.shape[0]} feature rows, manifest declares {n} nodes")
    labels = read_labels(paths["labels"], n)
    if labels.max() >= C:
        raise LabelOutOfRange(f"{paths['labels']}: class id {labels.max()} >= num_classes {C}")
    hg = from_edge_list(edges, n, weights)
    return Dataset(str(manifest["name"]), hg, features, labels, C)


def save_dataset(ds: Dataset, directory) -> Path:
    """Write ``ds`` in the manifest layout; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    hg = ds.hypergraph
    with open(d / "edges.txt", "w", encoding="utf-8") as fh:
        for edge in hg.hyperedges:
            fh.write(" ".join(map(str, edge)) + "\n")
    manifest = {
        "name": ds.name,
        "num_nodes": ds.num_nodes,
        "num_classes": ds.num_classes,
        "edges": "edges.txt",
        "features": "features.tsv",
        "labels": "labels.tsv",
    }
    if not np.all(hg.weights == 1.0):
        np.savetxt(d / "weights.txt", hg.weights, fmt="%.17g")
        manifest["weights"] = "weights.txt"
    np.savetxt(d / "features.tsv", ds.features, fmt="%.17g", delimiter="\t")
    with open(d / "labels.tsv", "w", encoding="utf-8") as fh:
        for i, c in enumerate(ds.labels):
            fh.write(f"{i}\t{c}\n")
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


# --------------------------------------------------------------- synthetic


def generate_synthetic(
    num_nodes: int = 60,
    num_classes: int = 3,
    edges_per_class: int = 20,
    edge_size: int = 4,
    noise: float = 1.0,
    seed: int = 0,
    cross_fraction: float = 0.1,
) -> Dataset:
    """Community hypergraph with noisy class-indicator features.

    Node ``i`` gets class ``i % num_classes``. Each class receives
    ``edges_per_class`` hyperedges inside the class; the first few are
    chunks of a shuffled member list so every node is covered (a class
    gets more edges than requested if covering needs them). Then
    ``round(cross_fraction * intra_edges)`` hyperedges mixing at least two
    classes are added. Features are one-hot class indicators plus
    ``uniform(-noise, noise)`` noise.
    """
    if num_nodes < 2 or num_classes < 1 or edges_per_class < 1 or noise < 0:
        raise InvalidParameters("num_nodes >= 2, num_classes >= 1, edges_per_class >= 1, noise >= 0 required")
    if edge_size < 2:
        raise InvalidParameters(f"edge_size must be >= 2, got {edge_size}")
    labels = np.arange(num_nodes) % num_classes
    smallest = np.bincount(labels, minlength=num_classes).min()
    if smallest < edge_size:
        raise InvalidParameters(f"a class has {smallest} nodes, fewer than edge_size={edge_size}")
    rng = np.random.default_rng(seed)

    edges = []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        perm = rng.permutation(members)
        cover = [perm[i : i + edge_size] for i in range(0, len(perm), edge_size)]
        class_edges = []
        for chunk in cover:
            if len(chunk) < edge_size:
                extra = rng.choice(np.setdiff1d(members, chunk), size=edge_size - len(chunk), replace=False)
                chunk = np.concatenate([chunk, extra])
            class_edges.append(chunk)
        while len(class_edges) < edges_per_class:
            class_edges.append(rng.choice(members, size=edge_size, replace=False))
        edges.extend(class_edges)

    n_cross = int(round(cross_fraction * len(edges)))
    if num_classes > 1:
        for _ in range(n_cross):
            while True:
                e = rng.choice(num_nodes, size=edge_size, replace=False)
                if len(set(labels[e].tolist())) > 1:
                    break
            edges.append(e)

    features = np.eye(num_classes)[labels] + rng.uniform(-noise, noise, size=(num_nodes, num_classes))
    hg = from_edge_list([e.tolist() for e in edges], num_nodes)
    return Dataset(f"synthetic-n{num_nodes}-c{num_classes}-s{seed}", hg, features, labels, num_classes)


# -------------------------------------------------------------- checkpoints


def save_checkpoint(params: Params, path, config: Optional[dict] = None):
    """Text records: ``<name> <rows> <cols>`` then one line per row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# hgraphormer checkpoint v1\n")
        if config is not None:
            fh.write("# config " + json.dumps(config, sort_keys=True) + "\n")
        for name, t in params.items():
            rows, cols = t.shape
            fh.write(f"{name} {rows} {cols}\n")
            for row in t.data:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_checkpoint(path) -> tuple:
    """Returns ``(params, config_or_None)``."""
    path = Path(path)
    config = None
    tensors = {}
    with open(path, encoding="utf-8") as fh:
        lines = list(enumerate(fh, start=1))
    i = 0
    while i < len(lines):
        lineno, raw = lines[i]
        i += 1
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# config "):
            config = json.loads(line[len("# config "):])
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise MalformedLine(path, lineno, "expected '<name> <rows> <cols>'")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        block = []
        for _ in range(rows):
            if i >= len(lines):
                raise MalformedLine(path, lineno, f"truncated record for {name}")
            rlineno, rraw = lines[i]
            i += 1
            vals = [float(x) for x in rraw.split()]
            if len(vals) != cols:
                raise MalformedLine(path, rlineno, f"expected {cols} values for {name}")
            block.append(vals)
        tensors[name] = np.array(block, dtype=np.float64).reshape(rows, cols)
    return Params(tensors), config
