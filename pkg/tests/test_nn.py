import numpy as np
import pytest

import leci.tensor as T
from leci.errors import ContractError
from leci.graphs import Graph, batch
from leci.nn import GinEncoder, Linear, MLP, assign_params, graph_readout, load_params, save_params
from leci.tensor import Rng, Tensor

from conftest import random_graph
from fdcheck import gradcheck


def permute_graph(g: Graph, perm: np.ndarray) -> Graph:
    """Relabel nodes by ``perm`` (node i becomes perm[i])."""
    edges = np.array([[min(perm[u], perm[v]), max(perm[u], perm[v])]
                      for u, v in g.edges])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    x = np.empty_like(g.x)
    x[perm] = g.x
    return Graph(num_nodes=g.num_nodes, x=x, edges=edges[order], y=g.y, env=g.env,
                 motif_mask=g.motif_mask[order],
                 edge_weight=g.edge_weight[order])


def forward_pooled(enc: GinEncoder, head: Linear, graphs, weights=None):
    b = batch(graphs)
    w = Tensor(weights if weights is not None else np.ones(b.num_edges))
    h = enc.encode(b, w, train=False)
    return head(graph_readout(h, b)).data


@pytest.fixture
def model(rng):
    enc = GinEncoder(3, 16, 3, rng.fork("enc"), dropout_p=0.0)
    head = Linear(16, 4, rng.fork("head"))
    return enc, head


def test_permutation_invariance_of_pooled_logits(model, rng):
    enc, head = model
    for i in range(5):
        g = random_graph(rng.fork(i), num_nodes=7)
        perm = rng.fork(f"p{i}").permutation(7)
        base = forward_pooled(enc, head, [g])
        permuted = forward_pooled(enc, head, [permute_graph(g, perm)])
        assert np.max(np.abs(base - permuted)) <= 1e-9


def test_isomorphic_graphs_same_embedding(model, rng):
    enc, head = model
    g = random_graph(rng.fork("iso"), num_nodes=6)
    uniform = Graph(num_nodes=6, x=np.ones((6, 3)), edges=g.edges, y=0, env=0,
                    motif_mask=g.motif_mask)
    perm = rng.fork("perm").permutation(6)
    twin = permute_graph(uniform, perm)
    a = forward_pooled(enc, head, [uniform])
    b = forward_pooled(enc, head, [twin])
    assert np.max(np.abs(a - b)) <= 1e-9


def test_batching_equivalence(model, rng):
    enc, head = model
    graphs = [random_graph(rng.fork(i), d=3) for i in range(6)]
    batched = forward_pooled(enc, head, graphs)
    singles = np.concatenate([forward_pooled(enc, head, [g]) for g in graphs])
    assert np.max(np.abs(batched - singles)) <= 1e-9


def test_zero_edge_weights_isolate_nodes(model, rng):
    enc, _ = model
    g = random_graph(rng.fork("z"), num_nodes=5, d=3)
    b = batch([g])
    h = enc.encode(b, Tensor(np.zeros(b.num_edges)), train=False)
    # isolated twin: same nodes, no edges at all
    iso = Graph(num_nodes=5, x=g.x, edges=np.zeros((0, 2), dtype=np.int64),
                y=g.y, env=g.env, motif_mask=np.zeros(0, dtype=bool))
    h_iso = enc.encode(batch([iso]), Tensor(np.zeros(0)), train=False)
    assert np.max(np.abs(h.data - h_iso.data)) <= 1e-12


def test_virtual_node_keeps_graphs_isolated(rng):
    enc = GinEncoder(3, 8, 2, rng.fork("vn"), dropout_p=0.0, use_virtual_node=True)
    head = Linear(8, 2, rng.fork("vh"))
    g1 = random_graph(rng.fork(1), num_nodes=5)
    g2 = random_graph(rng.fork(2), num_nodes=6)
    base = forward_pooled(enc, head, [g1, g2])
    g1_mod = Graph(num_nodes=5, x=g1.x + 3.0, edges=g1.edges, y=g1.y, env=g1.env,
                   motif_mask=g1.motif_mask)
    mod = forward_pooled(enc, head, [g1_mod, g2])
    assert np.array_equal(base[1], mod[1])  # exact isolation
    assert not np.array_equal(base[0], mod[0])


def test_virtual_node_changes_output(rng):
    g = random_graph(rng.fork(9), num_nodes=5)
    plain = GinEncoder(3, 8, 2, rng.fork("a"), dropout_p=0.0)
    virt = GinEncoder(3, 8, 2, rng.fork("a"), dropout_p=0.0, use_virtual_node=True)
    b = batch([g])
    w = Tensor(np.ones(b.num_edges))
    h1 = plain.encode(b, w)
    h2 = virt.encode(b, w)
    assert h1.data.shape == h2.data.shape
    assert not np.allclose(h1.data, h2.data)


def test_readout_single_node_and_duplication(rng):
    enc = GinEncoder(2, 4, 1, rng.fork("r"), dropout_p=0.0)
    single = Graph(num_nodes=1, x=np.array([[1.0, 2.0]]),
                   edges=np.zeros((0, 2), dtype=np.int64), y=0, env=0,
                   motif_mask=np.zeros(0, dtype=bool))
    b = batch([single])
    h = enc.encode(b, Tensor(np.zeros(0)))
    pooled = graph_readout(h, b)
    assert np.allclose(pooled.data[0], h.data[0])
    # duplicating identical node embeddings leaves the mean unchanged
    emb = Tensor(np.tile(h.data[0], (3, 1)))
    ids = np.zeros(3, dtype=np.int64)
    assert np.allclose(T.segment_mean(emb, ids, 1).data[0], h.data[0])


def test_readout_batched_equals_pergraph(model, rng):
    enc, _ = model
    graphs = [random_graph(rng.fork(i + 50)) for i in range(4)]
    b = batch(graphs)
    pooled = graph_readout(enc.encode(b, Tensor(np.ones(b.num_edges))), b).data
    for i, g in enumerate(graphs):
        bi = batch([g])
        one = graph_readout(enc.encode(bi, Tensor(np.ones(bi.num_edges))), bi).data
        assert np.max(np.abs(pooled[i] - one[0])) <= 1e-9


def test_classifier_zero_init_gives_uniform_softmax(rng):
    head = Linear(8, 3, zero_init=True)
    logits = head(Tensor(np.ones((2, 8)))).data
    assert np.array_equal(logits, np.zeros((2, 3)))


def test_classifier_gradient_matches_finite_differences(rng):
    emb = Rng(0).uniform(size=(4, 6))
    targets = [0, 2, 1, 2]

    def build(w):
        logits = T.add(T.matmul(Tensor(emb), w), Tensor(np.zeros(3)))
        return T.nll_loss(T.log_softmax(logits), targets)

    gradcheck(build, Rng(1).uniform(size=(6, 3), low=-0.5, high=0.5))


def test_edge_weight_gradient_matches_finite_differences(rng):
    enc = GinEncoder(2, 6, 2, rng.fork("gw"), dropout_p=0.0)
    head = Linear(6, 2, rng.fork("gh"))
    g = random_graph(rng.fork(77), num_nodes=6, d=2)
    b = batch([g])

    def build(w):
        h = enc.encode(b, T.sigmoid(w), train=False)  # keep weights in [0,1]
        return T.nll_loss(T.log_softmax(head(graph_readout(h, b))), [g.y % 2])

    gradcheck(build, Rng(3).uniform(size=(b.num_edges,), low=-1, high=1))


def test_encoder_rejects_bad_weights(model):
    enc, _ = model
    g = random_graph(Rng(5), num_nodes=4)
    b = batch([g])
    with pytest.raises(ContractError):
        enc.encode(b, Tensor(np.ones(b.num_edges + 1)))
    with pytest.raises(ContractError):
        enc.encode(b, Tensor(np.full(b.num_edges, 2.0)))


def test_readout_rejects_empty_graph():
    with pytest.raises(ContractError):
        graph_readout(Tensor(np.ones((0, 3))), _EmptyBatch())


class _EmptyBatch:
    graph_num_nodes = np.array([0])
    node_graph_id = np.zeros(0, dtype=np.int64)
    num_graphs = 1


def test_checkpoint_round_trip(tmp_path, rng):
    mlp = MLP([3, 5, 2], rng.fork("ck"))
    named = mlp.params("m")
    path = tmp_path / "params.bin"
    save_params(path, named, meta={"kind": "mlp"})
    meta, arrays = load_params(path)
    assert meta == {"kind": "mlp"}
    twin = MLP([3, 5, 2], rng.fork("other"))
    assign_params(twin.params("m"), arrays)
    for (_, a), (_, b) in zip(named, twin.params("m")):
        assert np.array_equal(a.data, b.data)
