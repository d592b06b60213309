"""Two-stage (node -> hyperedge -> node) updates for HyperSAGE and UniGCN,
their merged one-stage (node -> node) forms, and a generic one-stage
operator driven by a pairwise weight function.

The two-stage functions materialize hyperedge representations; the
one-stage functions never do, accumulating a node-to-node weight matrix
instead. Agreement between the two is checked by :func:`verify_equivalence`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IsolatedNode, NegativeFeatureWithFractionalPower, ShapeMismatch
from .hypergraph import Hypergraph, compute_degrees, from_edge_list, neighborhood

WeightFn = Callable[[frozenset, int, int], float]


def _features(hg: Hypergraph, V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    if V.shape[0] != hg.num_nodes:
        raise ShapeMismatch(f"{V.shape[0]} feature rows for {hg.num_nodes} nodes")
    return V


def _edge_weights(hg: Hypergraph, w) -> np.ndarray:
    if w is None:
        return np.ones(hg.num_edges)
    if callable(w):
        return np.array([float(w(j)) for j in range(hg.num_edges)])
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != hg.num_edges:
        raise ShapeMismatch(f"{w.shape[0]} edge weights for {hg.num_edges} hyperedges")
    return w


def _require_degrees(hg: Hypergraph, need_neighbors: bool):
    dv = compute_degrees(hg).node_degrees
    bad = np.flatnonzero(dv <= 0)
    if bad.size:
        raise IsolatedNode(f"node {bad[0]} belongs to no hyperedge")
    if need_neighbors:
        sizes = np.array([len(neighborhood(hg, v)) for v in range(hg.num_nodes)])
        bad = np.flatnonzero(sizes == 0)
        if bad.size:
            raise IsolatedNode(f"node {bad[0]} has an empty neighborhood")
        return dv, sizes
    return dv, None


# ------------------------------------------------------------------ HyperSAGE


def hypersage_two_stage(hg: Hypergraph, V, p: float = 1.0) -> np.ndarray:
    """Power-mean aggregation node -> hyperedge -> node with exponent ``p``."""
    V = _features(hg, V)
    if p < 1:
        raise ValueError(f"power p must be >= 1, got {p}")
    if p != 1 and np.any(V < 0):
        raise NegativeFeatureWithFractionalPower(
            f"p={p} needs non-negative features"
        )
    dv, n_neigh = _require_degrees(hg, need_neighbors=True)
    de = compute_degrees(hg).edge_degrees

    E = np.empty((hg.num_edges, V.shape[1]))
    for j, edge in enumerate(hg.hyperedges):
        E[j] = (V[list(edge)] ** p).sum(axis=0) / de[j]
        E[j] = E[j] ** (1.0 / p)

    out = np.zeros_like(V)
    for i in range(hg.num_nodes):
        acc = np.zeros(V.shape[1])
        for j in hg.incident_edges[i]:
            acc += (de[j] / n_neigh[i]) * E[j] ** p
        out[i] = (acc / dv[i]) ** (1.0 / p)
    return out


def hypersage_weight(hg: Hypergraph) -> WeightFn:
    """Pairwise weight reproducing the merged HyperSAGE update (p = 1)."""
    dv, n_neigh = _require_degrees(hg, need_neighbors=True)

    def weight(shared: frozenset, k: int, i: int) -> float:
        return len(shared) / (dv[i] * n_neigh[i])

    return weight


def hypersage_one_stage(hg: Hypergraph, V) -> np.ndarray:
    V = _features(hg, V)
    dv, n_neigh = _require_degrees(hg, need_neighbors=True)
    W = np.zeros((hg.num_nodes, hg.num_nodes))
    for i in range(hg.num_nodes):
        for j in hg.incident_edges[i]:
            for k in hg.hyperedges[j]:
                W[i, k] += 1.0
        W[i] /= dv[i] * n_neigh[i]
    return W @ V


# --------------------------------------------------------------------- UniGCN


def unigcn_two_stage(hg: Hypergraph, V, w=None) -> np.ndarray:
    """Mean over each hyperedge, then a degree-normalized weighted sum.

    ``w`` gives one weight per hyperedge (array or ``j -> weight``
    callable); all ones when omitted.
    """
    V = _features(hg, V)
    w = _edge_weights(hg, w)
    dv, _ = _require_degrees(hg, need_neighbors=False)
    de = compute_degrees(hg).edge_degrees

    E = np.empty((hg.num_edges, V.shape[1]))
    for j, edge in enumerate(hg.hyperedges):
        E[j] = V[list(edge)].sum(axis=0) / de[j]

    out = np.zeros_like(V)
    for i in range(hg.num_nodes):
        for j in hg.incident_edges[i]:
            out[i] += (w[j] / np.sqrt(de[j])) * E[j]
        out[i] /= np.sqrt(dv[i])
    return out


def unigcn_weight(hg: Hypergraph, w=None) -> WeightFn:
    w = _edge_weights(hg, w)
    dv, _ = _require_degrees(hg, need_neighbors=False)
    de = compute_degrees(hg).edge_degrees

    def weight(shared: frozenset, k: int, i: int) -> float:
        return sum(w[j] / de[j] ** 1.5 for j in shared) / np.sqrt(dv[i])

    return weight


def unigcn_one_stage(hg: Hypergraph, V, w=None) -> np.ndarray:
    V = _features(hg, V)
    w = _edge_weights(hg, w)
    dv, _ = _require_degrees(hg, need_neighbors=False)
    de = compute_degrees(hg).edge_degrees
    W = np.zeros((hg.num_nodes, hg.num_nodes))
    for i in range(hg.num_nodes):
        for j in hg.incident_edges[i]:
            c = w[j] / de[j] / np.sqrt(de[j])
            for k in hg.hyperedges[j]:
                W[i, k] += c
        W[i] /= np.sqrt(dv[i])
    return W @ V


# -------------------------------------------------------------------- generic


def generic_one_stage(hg: Hypergraph, V, weight_fn: WeightFn) -> np.ndarray:
    """``v_i <- sum_k weight_fn(shared_edges(k, i), k, i) * v_k``.

    Pairs sharing no hyperedge contribute nothing; ``weight_fn`` is only
    called for pairs with a non-empty shared edge set.
    """
    V = _features(hg, V)
    edge_sets = [frozenset(x) for x in hg.incident_edges]
    out = np.zeros_like(V)
    for i in range(hg.num_nodes):
        for k in range(hg.num_nodes):
            shared = edge_sets[i] & edge_sets[k]
            if shared:
                out[i] += weight_fn(shared, k, i) * V[k]
    return out


# --------------------------------------------------------------- equivalence


@dataclass
class EquivalenceReport:
    trials: int
    seed: Optional[int]
    hypersage_max_dev: float
    unigcn_max_dev: float
    tol: float = 1e-9

    @property
    def passed(self) -> bool:
        return self.hypersage_max_dev < self.tol and self.unigcn_max_dev < self.tol

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "hypersage_max_dev": self.hypersage_max_dev,
            "unigcn_max_dev": self.unigcn_max_dev,
            "tol": self.tol,
            "passed": self.passed,
        }


def random_covering_hypergraph(rng: np.random.Generator, max_nodes: int = 12, max_edges: int = 8) -> Hypergraph:
    """Random hypergraph where every node lies in at least one hyperedge."""
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    edges = []
    for _ in range(m):
        size = int(rng.integers(2, n + 1))
        edges.append(set(rng.choice(n, size=size, replace=False).tolist()))
    for v in range(n):
        if not any(v in e for e in edges):
            edges[int(rng.integers(m))].add(v)
    return from_edge_list(edges, n)


def equivalence_deviation(hg: Hypergraph, V, w=None) -> tuple:
    """Max abs difference (HyperSAGE, UniGCN) between two- and one-stage forms."""
    hs = np.max(np.abs(hypersage_two_stage(hg, V, p=1.0) - hypersage_one_stage(hg, V)))
    ug = np.max(np.abs(unigcn_two_stage(hg, V, w) - unigcn_one_stage(hg, V, w)))
    return float(hs), float(ug)


def verify_equivalence(
    trials: int = 100,
    max_nodes: int = 12,
    seed: Optional[int] = 0,
    max_edges: int = 8,
    hypergraphs: Optional[Sequence[tuple]] = None,
) -> EquivalenceReport:
    """Compare two-stage and merged one-stage forms on random hypergraphs.

    ``hypergraphs`` overrides the random generator with explicit
    ``(hypergraph, features)`` pairs.
    """
    if hypergraphs is None:
        if trials < 1:
            raise ValueError("trials must be >= 1")
        rng = np.random.default_rng(seed)
        cases = []
        for _ in range(trials):
            hg = random_covering_hypergraph(rng, max_nodes, max_edges)
            dim = int(rng.integers(1, 5))
            cases.append((hg, rng.uniform(-1.0, 1.0, size=(hg.num_nodes, dim))))
    else:
        cases = list(hypergraphs)
    hs = ug = 0.0
    for hg, V in cases:
        a, b = equivalence_deviation(hg, V)
        hs, ug = max(hs, a), max(ug, b)
    return EquivalenceReport(len(cases), seed, hs, ug)
