import itertools

import numpy as np
import pytest

from leci.datasets import (
    BASES,
    GenConfig,
    build_micro_universe,
    generate,
    make_base,
    make_motif,
    manifest,
)
from leci.errors import ConfigError
from leci.graphs import save_jsonl
from leci.metrics import plugin_mi
from leci.tensor import Rng


def brute_force_isomorphic(n1, edges1, n2, edges2) -> bool:
    """Exhaustive isomorphism check for tiny graphs (<= 8 nodes)."""
    if n1 != n2 or len(edges1) != len(edges2):
        return False
    target = {(min(u, v), max(u, v)) for u, v in edges2}
    for perm in itertools.permutations(range(n1)):
        mapped = {(min(perm[u], perm[v]), max(perm[u], perm[v])) for u, v in edges1}
        if mapped == target:
            return True
    return False


def degrees(n, edges):
    d = [0] * n
    for u, v in edges:
        d[u] += 1
        d[v] += 1
    return d


def is_connected(n, edges):
    adj = {i: set() for i in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, frontier = {0}, [0]
    while frontier:
        u = frontier.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return len(seen) == n


# ---------------------------------------------------------------------------
# motifs


def test_house_shape():
    n, edges = make_motif("house")
    assert n == 5 and len(edges) == 6
    assert sorted(degrees(n, edges)) == [2, 2, 2, 3, 3]


def test_cycle_shape():
    n, edges = make_motif("cycle")
    assert n == 5 and len(edges) == 5
    assert degrees(n, edges) == [2] * 5


def test_crane_shape():
    n, edges = make_motif("crane")
    assert n == 5 and len(edges) == 5
    assert sorted(degrees(n, edges)) == [1, 1, 2, 3, 3]


def test_motifs_pairwise_non_isomorphic():
    shapes = {k: make_motif(k) for k in ("house", "cycle", "crane")}
    for a, b in itertools.combinations(shapes, 2):
        n1, e1 = shapes[a]
        n2, e2 = shapes[b]
        assert not brute_force_isomorphic(n1, e1, n2, e2), (a, b)


def test_unknown_motif_rejected():
    with pytest.raises(ConfigError):
        make_motif("pentagon")


# ---------------------------------------------------------------------------
# bases


def test_wheel_counts_and_hub():
    edges = make_base("wheel", 6, Rng(0))
    assert len(edges) == 10  # 2(n-1)
    assert max(degrees(6, edges)) == 5


def test_path_counts():
    edges = make_base("path", 5, Rng(0))
    assert len(edges) == 4
    assert sorted(degrees(5, edges))[:2] == [1, 1]


def test_dorogovtsev_mendes_edge_count():
    for n in (3, 5, 10, 17):
        edges = make_base("dorogovtsev_mendes", n, Rng(n))
        assert len(edges) == 2 * n - 3


def test_ladder_and_circular_ladder():
    edges = make_base("ladder", 8, Rng(0))
    assert len(edges) == 3 * 8 // 2 - 2
    cl = make_base("circular_ladder", 8, Rng(0))
    assert len(cl) == 3 * 8 // 2
    assert degrees(8, cl) == [3] * 8


def test_star_and_tree():
    star = make_base("star", 7, Rng(0))
    assert len(star) == 6 and max(degrees(7, star)) == 6
    tree = make_base("tree", 9, Rng(3))
    assert len(tree) == 8 and is_connected(9, tree)


def test_all_bases_connected():
    for kind in BASES:
        n = 12
        assert is_connected(n, make_base(kind, n, Rng(1))), kind


def test_base_minimum_size_enforced():
    with pytest.raises(ConfigError):
        make_base("wheel", 3, Rng(0))
    with pytest.raises(ConfigError):
        make_base("ladder", 7, Rng(0))


# ---------------------------------------------------------------------------
# full generation


def small_cfg(**kw):
    defaults = dict(seed=7, n_per_class_per_env=10, n_val_per_class=6,
                    n_id_val_per_class_per_env=2)
    defaults.update(kw)
    return GenConfig(**defaults)


def test_generate_counts_and_bases():
    cfg = small_cfg()
    split = generate(cfg)
    assert len(split.train) == 3 * 3 * 10
    assert len(split.id_val) == 3 * 3 * 2
    assert len(split.ood_val) == 3 * 6
    assert len(split.ood_test) == 3 * 6
    # every ood_test base is a path: path bases have >= 2 degree-1 nodes
    # outside the motif; check env bookkeeping instead of shapes directly
    assert {g.env for g in split.train} == {0, 1, 2}
    assert all(g.env == 0 for g in split.ood_test)


def test_label_marginal_uniform_in_every_split():
    split = generate(small_cfg())
    for _, part in split.parts():
        counts = np.bincount([g.y for g in part], minlength=3)
        assert counts.min() == counts.max()


def test_train_env_label_mi_is_zero():
    split = generate(small_cfg())
    table = np.zeros((3, 3))
    for g in split.train:
        table[g.env, g.y] += 1
    assert plugin_mi(table) == 0.0


def test_every_generated_graph_is_connected_with_motif_mask():
    split = generate(small_cfg())
    for _, part in split.parts():
        for g in part:
            assert is_connected(g.num_nodes, [tuple(e) for e in g.edges])
            assert g.motif_mask.sum() in (5, 6)


def test_motif_mask_subgraph_isomorphic_to_configured_motif():
    split = generate(small_cfg(n_per_class_per_env=4, n_val_per_class=3))
    motif_shapes = {i: make_motif(k) for i, k in enumerate(("house", "cycle", "crane"))}
    for g in split.train[:30] + split.ood_test[:9]:
        sub = [tuple(e) for e, m in zip(g.edges, g.motif_mask) if m]
        nodes = sorted({v for e in sub for v in e})
        relabel = {v: i for i, v in enumerate(nodes)}
        sub = [(relabel[u], relabel[v]) for u, v in sub]
        n_m, motif_edges = motif_shapes[g.y]
        assert brute_force_isomorphic(len(nodes), sub, n_m, motif_edges)


def test_generation_deterministic_and_byte_identical(tmp_path):
    cfg = small_cfg()
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_jsonl(generate(cfg), p1)
    save_jsonl(generate(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_different_seeds_differ(tmp_path):
    a = generate(small_cfg(seed=1))
    b = generate(small_cfg(seed=2))
    assert not all(x.equals(y) for x, y in zip(a.train, b.train))


def test_base_split_train_and_oodtest_bases_disjoint():
    cfg = small_cfg()
    assert cfg.oodtest_base not in cfg.train_bases
    m = manifest(cfg, generate(cfg))
    assert m["env_map"] == {"0": "wheel", "1": "tree", "2": "ladder"}
    assert m["variant"] == "motif"


def test_motif2_variant_flagged():
    cfg = small_cfg(oodval_base="circular_ladder", oodtest_base="dorogovtsev_mendes")
    m = manifest(cfg, generate(cfg))
    assert m["variant"] == "motif2"


def test_size_split_ordering():
    cfg = small_cfg(split_by="size")
    split = generate(cfg)
    motif_nodes = 5
    max_train_base = max(g.num_nodes for g in split.train) - motif_nodes
    min_test_base = min(g.num_nodes for g in split.ood_test) - motif_nodes
    assert max_train_base < min_test_base
    assert {g.env for g in split.train} == {0, 1, 2}


def test_feature_split_colors():
    cfg = small_cfg(split_by="feature")
    split = generate(cfg)
    d = cfg.feature_dim()
    assert d == 1 + 3 + 2
    for g in split.train:
        color_block = g.x[:, 1:]
        active = np.nonzero(color_block[0])[0]
        assert len(active) == 1 and active[0] == g.env
    test_colors = {int(np.nonzero(g.x[0, 1:])[0][0]) for g in split.ood_test}
    val_colors = {int(np.nonzero(g.x[0, 1:])[0][0]) for g in split.ood_val}
    train_colors = {int(np.nonzero(g.x[0, 1:])[0][0]) for g in split.train}
    assert test_colors == {4} and val_colors == {3}
    assert train_colors == {0, 1, 2}


def test_noise_edges_do_not_enter_motif_mask():
    cfg = small_cfg(noise_edge_prob=0.2)
    split = generate(cfg)
    for g in split.train[:20]:
        assert g.motif_mask.sum() in (5, 6)


def test_degree_onehot_features():
    split = generate(small_cfg(feature_mode="degree_onehot",
                               n_per_class_per_env=2, n_val_per_class=2))
    g = split.train[0]
    assert g.x.shape[1] == 8
    assert np.all(g.x.sum(axis=1) == 1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(train_bases=("wheel", "blob"))
    with pytest.raises(ConfigError):
        GenConfig(feature_mode="rainbow")
    with pytest.raises(ConfigError):
        GenConfig(noise_edge_prob=1.0)


# ---------------------------------------------------------------------------
# micro universe


def test_micro_universe_probabilities_sum_to_one():
    uni = build_micro_universe()
    assert abs(uni.total_prob() - 1.0) < 1e-12
    assert len({(o.env, o.y) for o in uni.outcomes}) == 4


def test_micro_universe_structural_outcomes():
    uni = build_micro_universe()
    # 2 envs x 2 motifs before attachment randomization
    structures = {(o.env, o.y, o.causal_edges) for o in uni.outcomes}
    assert len(structures) == 4
    for o in uni.outcomes:
        assert len(o.edges) <= 8
        assert o.causal_edges <= o.edges


def test_micro_universe_env_marginal_uniform():
    uni = build_micro_universe()
    p_env = [sum(o.prob for o in uni.outcomes if o.env == e) for e in (0, 1)]
    assert np.allclose(p_env, [0.5, 0.5])
