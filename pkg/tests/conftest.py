import numpy as np
import pytest
from hypothesis import strategies as st

from hgraphormer.hypergraph import from_edge_list, laplacian
from hgraphormer.model import ModelConfig, init_params


@st.composite
def hypergraphs(draw, max_nodes=12, max_edges=8, cover=True, weighted=False):
    """Random hypergraphs; with ``cover`` every node lies in some edge."""
    n = draw(st.integers(2, max_nodes))
    m = draw(st.integers(1, max_edges))
    edges = [
        set(draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=n, unique=True)))
        for _ in range(m)
    ]
    if cover:
        for v in range(n):
            if not any(v in e for e in edges):
                edges[draw(st.integers(0, m - 1))].add(v)
    weights = None
    if weighted:
        weights = draw(st.lists(st.floats(0.1, 10.0), min_size=m, max_size=m))
    return from_edge_list(edges, n, weights)


def random_hypergraph(rng, max_nodes=12, max_edges=8):
    n = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_edges + 1))
    edges = [set(rng.choice(n, size=int(rng.integers(2, n + 1)), replace=False).tolist()) for _ in range(m)]
    for v in range(n):
        if not any(v in e for e in edges):
            edges[int(rng.integers(m))].add(v)
    return from_edge_list(edges, n)


@pytest.fixture
def tiny_hg():
    return from_edge_list([{0, 1, 2}, {2, 3}, {3, 4, 5}, {0, 5}], 6)


@pytest.fixture
def tiny_cfg():
    return ModelConfig(
        gamma=0.5, num_layers=2, num_heads=2, d_h=8, d_k=4, d_q=4,
        dropout_p=0.0, num_classes=3, feature_dim=4, seed=0,
    )


@pytest.fixture
def tiny_problem(tiny_hg, tiny_cfg):
    """(X, L, labels, cfg, params) for the 6-node model fixture."""
    rng = np.random.default_rng(42)
    X = rng.normal(size=(6, 4))
    y = np.array([0, 1, 2, 0, 1, 2])
    return X, laplacian(tiny_hg), y, tiny_cfg, init_params(tiny_cfg)


# acceptance lines collected by tests/test_acceptance.py, echoed at the end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
