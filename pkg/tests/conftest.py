import numpy as np
import pytest

from leci.graphs import Graph
from leci.tensor import Rng


def random_graph(rng: Rng, num_nodes=None, d=3, with_motif=False) -> Graph:
    """Small random connected graph for harness tests."""
    n = int(num_nodes if num_nodes is not None else rng.integers(2, 9))
    edges = {(i - 1, i) for i in range(1, n)}  # spanning path keeps it connected
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    edges = sorted(edges)
    mask = np.zeros(len(edges), dtype=bool)
    if with_motif and edges:
        mask[: max(1, len(edges) // 3)] = True
    return Graph(
        num_nodes=n,
        x=rng.uniform(size=(n, d), low=-1.0, high=1.0),
        edges=np.array(edges, dtype=np.int64),
        y=int(rng.integers(0, 3)),
        env=int(rng.integers(0, 3)),
        motif_mask=mask,
    )


@pytest.fixture
def rng():
    return Rng(1234)
