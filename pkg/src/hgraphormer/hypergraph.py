"""Hypergraph container, degrees, incidence and the normalized Laplacian."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DuplicateNodeId,
    EdgeTooSmall,
    IsolatedNodeWarning,
    NodeIdOutOfRange,
    NonPositiveWeight,
)


@dataclass(frozen=True)
class DegreeVectors:
    node_degrees: np.ndarray  # d(v) = sum_e W_e H[v, e]
    edge_degrees: np.ndarray  # d(e) = |e|


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Undirected weighted hypergraph on nodes ``0..num_nodes-1``.

    Hyperedges are stored as sorted tuples of node ids. Instances are
    immutable; derived quantities are cached on first access.
    """

    num_nodes: int
    hyperedges: tuple
    weights: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.hyperedges)

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.hyperedges == other.hyperedges
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.num_nodes, self.hyperedges, self.weights.tobytes()))

    def __repr__(self):
        return f"Hypergraph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"

    @cached_property
    def incident_edges(self) -> tuple:
        """``incident_edges[v]`` lists the indices of hyperedges containing ``v``."""
        inc = [[] for _ in range(self.num_nodes)]
        for j, edge in enumerate(self.hyperedges):
            for v in edge:
                inc[v].append(j)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def incidence_sparse(self) -> sp.csr_matrix:
        rows = [v for edge in self.hyperedges for v in edge]
        cols = [j for j, edge in enumerate(self.hyperedges) for _ in edge]
        data = np.ones(len(rows))
        return sp.csr_matrix((data, (rows, cols)), shape=(self.num_nodes, self.num_edges))


def from_edge_list(
    edges: Iterable[Iterable[int]],
    num_nodes: int,
    weights: Optional[Sequence[float]] = None,
) -> Hypergraph:
    """Build a :class:`Hypergraph`, validating every hyperedge.

    Raises ``EdgeTooSmall`` for edges with fewer than two nodes,
    ``DuplicateNodeId`` when an edge lists a node twice,
    ``NodeIdOutOfRange`` for ids outside ``[0, num_nodes)`` and
    ``NonPositiveWeight`` for weights <= 0.
    """
    num_nodes = int(num_nodes)
    if num_nodes < 1:
        raise NodeIdOutOfRange(f"num_nodes must be positive, got {num_nodes}")
    normalized = []
    for j, edge in enumerate(edges):
        ids = [int(v) for v in edge]
        if len(set(ids)) != len(ids):
            raise DuplicateNodeId(f"hyperedge {j} repeats a node id: {ids}")
        if len(ids) < 2:
            raise EdgeTooSmall(f"hyperedge {j} has {len(ids)} node(s); at least 2 required")
        for v in ids:
            if not 0 <= v < num_nodes:
                raise NodeIdOutOfRange(f"hyperedge {j}: node id {v} not in [0, {num_nodes})")
        normalized.append(tuple(sorted(ids)))
    if not normalized:
        raise EdgeTooSmall("hypergraph needs at least one hyperedge")

    if weights is None:
        w = np.ones(len(normalized))
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != len(normalized):
            raise NonPositiveWeight(
                f"got {w.shape[0]} weights for {len(normalized)} hyperedges"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise NonPositiveWeight("hyperedge weights must be finite and > 0")
    w = w.copy()
    w.flags.writeable = False
    return Hypergraph(num_nodes, tuple(normalized), w)


def compute_degrees(hg: Hypergraph) -> DegreeVectors:
    H = hg.incidence_sparse
    node = np.asarray(H @ hg.weights).reshape(-1)
    edge = np.array([len(e) for e in hg.hyperedges], dtype=np.int64)
    return DegreeVectors(node_degrees=node, edge_degrees=edge)


def incidence_dense(hg: Hypergraph) -> np.ndarray:
    H = np.zeros((hg.num_nodes, hg.num_edges))
    for j, edge in enumerate(hg.hyperedges):
        H[list(edge), j] = 1.0
    return H


def laplacian(hg: Hypergraph, dtype=np.float64) -> np.ndarray:
    """Dense normalized Laplacian ``Dv^-1/2 H W De^-1 H^T Dv^-1/2``.

    Nodes that belong to no hyperedge get an all-zero row and column
    (pseudo-inverse of ``Dv``) and trigger an ``IsolatedNodeWarning``.
    """
    deg = compute_degrees(hg)
    dv = deg.node_degrees
    isolated = np.flatnonzero(dv <= 0)
    if isolated.size:
        warnings.warn(
            f"{isolated.size} isolated node(s) get zero Laplacian rows "
            f"(first: {isolated[:5].tolist()})",
            IsolatedNodeWarning,
            stacklevel=2,
        )
    inv_sqrt_dv = np.zeros_like(dv)
    pos = dv > 0
    inv_sqrt_dv[pos] = 1.0 / np.sqrt(dv[pos])

    H = hg.incidence_sparse
    left = sp.diags(inv_sqrt_dv) @ H @ sp.diags(hg.weights / deg.edge_degrees)
    right = H.T @ sp.diags(inv_sqrt_dv)
    L = (left @ right).toarray()
    # the sparse product is not bitwise symmetric
    L = 0.5 * (L + L.T)
    return L.astype(dtype, copy=False)


def neighborhood(hg: Hypergraph, v: int) -> set:
    """Nodes sharing at least one hyperedge with ``v``, excluding ``v``."""
    if not 0 <= v < hg.num_nodes:
        raise NodeIdOutOfRange(f"node id {v} not in [0, {hg.num_nodes})")
    out = set()
    for j in hg.incident_edges[v]:
        out.update(hg.hyperedges[j])
    out.discard(v)
    return out


def hypergraph_stats(hg: Hypergraph) -> dict:
    deg = compute_degrees(hg)
    incident_counts = np.array([len(x) for x in hg.incident_edges])
    neigh = np.array([len(neighborhood(hg, v)) for v in range(hg.num_nodes)])
    return {
        "num_nodes": hg.num_nodes,
        "num_edges": hg.num_edges,
        "avg_node_degree": float(incident_counts.mean()),
        "avg_edge_degree": float(deg.edge_degrees.mean()),
        "avg_neighborhood": float(neigh.mean()),
        "isolated_nodes": int(np.sum(incident_counts == 0)),
    }
