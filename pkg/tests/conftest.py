import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mincutpool.graph import Graph
from mincutpool.sparse import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def graph_from_edges(n, edges, features=None, labels=None):
    """Unit-weight undirected graph from ``(i, j)`` pairs."""
    adj = SparseMatrix.from_edges(n, [(i, j, 1.0) for i, j in edges])
    if features is None:
        features = np.zeros((n, 1))
    return Graph(adj, features, labels)


def random_connected_graph(rng, n, p=0.3, features=2, weighted=False):
    """Ring backbone plus random chords, so always connected."""
    edges = {(i, (i + 1) % n) if i < (i + 1) % n else ((i + 1) % n, i) for i in range(n)}
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < p:
                edges.add((i, j))
    triples = [(i, j, float(rng.uniform(0.1, 2.0)) if weighted else 1.0) for i, j in sorted(edges)]
    adj = SparseMatrix.from_edges(n, triples)
    return Graph(adj, rng.uniform(-1, 1, (n, features)))


def random_stochastic(rng, n, k):
    s = rng.uniform(0, 1, (n, k)) + 1e-3
    return s / s.sum(axis=1, keepdims=True)


def one_hot(labels, k):
    return np.eye(k)[np.asarray(labels)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


# criterion number -> (status, title, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {status:<4} {title}: {detail}")
