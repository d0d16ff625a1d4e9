"""Synthetic motif benchmarks and an exhaustively enumerable micro universe.

Each generated graph is one base graph joined to one label-determining motif
by a single attachment edge.  Environments control the base family (base
split), the base size bucket (size split), or an appended node-feature color
block (feature split).  Generation is a pure function of the seed: every
graph draws from its own forked stream, so output is identical no matter how
work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError
from .graphs import DatasetSplit, Graph
from .tensor import Rng

MOTIFS = ("house", "cycle", "crane")
BASES = ("wheel", "tree", "ladder", "star", "path", "dorogovtsev_mendes",
         "circular_ladder")
FEATURE_MODES = ("constant", "degree_onehot", "env_color")
SPLIT_MODES = ("base", "size", "feature")

_DEGREE_BINS = 8       # degree_onehot feature width
_COLOR_SCALE = 2.0     # magnitude of the env_color one-hot block


# ---------------------------------------------------------------------------
# motifs: fixed 5-node shapes; the label is the motif index


def make_motif(kind: str) -> tuple[int, list[tuple[int, int]]]:
    """Node count and edge list of a label-determining motif."""
    if kind == "house":
        # 4-cycle plus a roof apex joined to two adjacent cycle nodes
        return 5, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 4)]
    if kind == "cycle":
        return 5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]
    if kind == "crane":
        # triangle with two pendant legs
        return 5, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4)]
    raise ConfigError(f"unknown motif kind {kind!r}")


# ---------------------------------------------------------------------------
# base families


def make_base(kind: str, n_nodes: int, rng: Rng) -> list[tuple[int, int]]:
    """Edge list of a connected label-irrelevant base graph on ``n_nodes`` nodes."""
    if kind == "wheel":
        if n_nodes < 4:
            raise ConfigError(f"wheel needs >= 4 nodes, got {n_nodes}")
        rim = n_nodes - 1
        edges = [(0, i) for i in range(1, n_nodes)]
        edges += [(i, i % rim + 1) for i in range(1, n_nodes)]
        return _canon(edges)
    if kind == "tree":
        if n_nodes < 2:
            raise ConfigError(f"tree needs >= 2 nodes, got {n_nodes}")
        # random recursive tree: node i attaches to a uniform earlier node
        return _canon([(int(rng.integers(0, i)), i) for i in range(1, n_nodes)])
    if kind == "ladder":
        if n_nodes < 4 or n_nodes % 2:
            raise ConfigError(f"ladder needs an even node count >= 4, got {n_nodes}")
        k = n_nodes // 2
        edges = [(i, i + 1) for i in range(k - 1)]
        edges += [(k + i, k + i + 1) for i in range(k - 1)]
        edges += [(i, k + i) for i in range(k)]
        return _canon(edges)
    if kind == "star":
        if n_nodes < 3:
            raise ConfigError(f"star needs >= 3 nodes, got {n_nodes}")
        return [(0, i) for i in range(1, n_nodes)]
    if kind == "path":
        if n_nodes < 2:
            raise ConfigError(f"path needs >= 2 nodes, got {n_nodes}")
        return [(i, i + 1) for i in range(n_nodes - 1)]
    if kind == "dorogovtsev_mendes":
        if n_nodes < 3:
            raise ConfigError(f"dorogovtsev_mendes needs >= 3 nodes, got {n_nodes}")
        # grow from a seed triangle; each new node joins both endpoints of a
        # uniformly random existing edge
        edges = [(0, 1), (0, 2), (1, 2)]
        for i in range(3, n_nodes):
            u, v = edges[int(rng.integers(0, len(edges)))]
            edges += [(u, i), (v, i)]
        return _canon(edges)
    if kind == "circular_ladder":
        if n_nodes < 6 or n_nodes % 2:
            raise ConfigError(f"circular_ladder needs an even node count >= 6, got {n_nodes}")
        k = n_nodes // 2
        edges = [(i, (i + 1) % k) for i in range(k)]
        edges += [(k + i, k + (i + 1) % k) for i in range(k)]
        edges += [(i, k + i) for i in range(k)]
        return _canon(edges)
    raise ConfigError(f"unknown base kind {kind!r}")


def _canon(edges: list[tuple[int, int]]) -> list[tuple[int, int]]:
    return sorted((min(u, v), max(u, v)) for u, v in edges)


# ---------------------------------------------------------------------------
# generator configuration


@dataclass
class GenConfig:
    seed: int = 0
    split_by: str = "base"                       # base | size | feature
    n_per_class_per_env: int = 200               # train
    n_val_per_class: int = 100                   # ood_val and ood_test, per class
    n_id_val_per_class_per_env: int = 34
    motifs: tuple[str, ...] = MOTIFS
    train_bases: tuple[str, ...] = ("wheel", "tree", "ladder")
    oodval_base: str = "star"
    oodtest_base: str = "path"
    base_size_range: tuple[int, int] = (10, 20)
    # size split only: train buckets and held-out ranges
    size_buckets: tuple[tuple[int, int], ...] = ((10, 14), (16, 20), (22, 26))
    oodval_size_range: tuple[int, int] = (28, 32)
    oodtest_size_range: tuple[int, int] = (34, 44)
    # feature split only: number of training colors (= environments)
    n_color_envs: int = 3
    feature_mode: str = "constant"
    noise_edge_prob: float = 0.0

    def __post_init__(self):
        for m in self.motifs:
            if m not in MOTIFS:
                raise ConfigError(f"unknown motif {m!r}")
        for b in (*self.train_bases, self.oodval_base, self.oodtest_base):
            if b not in BASES:
                raise ConfigError(f"unknown base kind {b!r}")
        if self.split_by not in SPLIT_MODES:
            raise ConfigError(f"split_by must be one of {SPLIT_MODES}, got {self.split_by!r}")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(
                f"feature_mode must be one of {FEATURE_MODES}, got {self.feature_mode!r}")
        if not 0.0 <= self.noise_edge_prob < 1.0:
            raise ConfigError("noise_edge_prob must lie in [0, 1)")
        if self.base_size_range[0] > self.base_size_range[1]:
            raise ConfigError("base_size_range is empty")
        if len(self.train_bases) < 2 and self.split_by == "base":
            raise ConfigError("base split needs >= 2 training base kinds")
        if self.split_by == "size":
            hi = max(hi for _, hi in self.size_buckets)
            if hi >= self.oodtest_size_range[0]:
                raise ConfigError("train size buckets must end below the ood_test sizes")

    @property
    def n_envs(self) -> int:
        if self.split_by == "base":
            return len(self.train_bases)
        if self.split_by == "size":
            return len(self.size_buckets)
        return self.n_color_envs

    def env_names(self) -> list[str]:
        if self.split_by == "base":
            return list(self.train_bases)
        if self.split_by == "size":
            return [f"size_{lo}_{hi}" for lo, hi in self.size_buckets]
        return [f"color_{i}" for i in range(self.n_color_envs)]

    def feature_dim(self) -> int:
        mode = self.resolved_feature_mode()
        if mode == "constant":
            return 1
        if mode == "degree_onehot":
            return _DEGREE_BINS
        return 1 + self.n_color_envs + 2  # constant column + train/val/test colors

    def resolved_feature_mode(self) -> str:
        # the feature split is only meaningful with the color block present
        if self.split_by == "feature":
            return "env_color"
        return self.feature_mode


def _pick_size(kind: str, lo: int, hi: int, rng: Rng) -> int:
    n = int(rng.integers(lo, hi + 1))
    if kind in ("ladder", "circular_ladder") and n % 2:
        n = n + 1 if n < hi else n - 1
    if kind == "wheel":
        n = max(n, 4)
    if kind == "circular_ladder":
        n = max(n, 6)
    return n


def _compose(base_edges, n_base, motif_kind, rng: Rng):
    """Join base and motif with one uniformly random attachment edge."""
    n_motif, motif_edges = make_motif(motif_kind)
    edges = list(base_edges)
    offset = n_base
    edges += [(u + offset, v + offset) for u, v in motif_edges]
    mask = [False] * len(base_edges) + [True] * len(motif_edges)
    attach = (int(rng.integers(0, n_base)), offset + int(rng.integers(0, n_motif)))
    edges.append(attach)
    mask.append(False)
    return n_base + n_motif, edges, mask


def _add_noise_edges(n, edges, mask, p, rng: Rng):
    if p <= 0.0:
        return edges, mask
    existing = {(u, v) for u, v in edges}
    k = int(rng.gen.binomial(len(edges), p))
    added = 0
    attempts = 0
    out_edges, out_mask = list(edges), list(mask)
    while added < k and attempts < 50 * (k + 1):
        attempts += 1
        u, v = int(rng.integers(0, n)), int(rng.integers(0, n))
        if u == v:
            continue
        u, v = min(u, v), max(u, v)
        if (u, v) in existing:
            continue
        existing.add((u, v))
        out_edges.append((u, v))
        out_mask.append(False)
        added += 1
    return out_edges, out_mask


def _features(n, edges, mode, color, n_colors):
    if mode == "constant":
        return np.ones((n, 1))
    if mode == "degree_onehot":
        deg = np.zeros(n, dtype=np.int64)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        x = np.zeros((n, _DEGREE_BINS))
        x[np.arange(n), np.minimum(deg, _DEGREE_BINS - 1)] = 1.0
        return x
    x = np.zeros((n, 1 + n_colors))
    x[:, 0] = 1.0
    x[:, 1 + color] = _COLOR_SCALE
    return x


def _make_graph(cfg: GenConfig, base_kind: str, size_range, motif_idx: int,
                env: int, color: int, rng: Rng) -> Graph:
    base_rng = rng.fork("base")
    n_base = _pick_size(base_kind, size_range[0], size_range[1], base_rng)
    base_edges = make_base(base_kind, n_base, base_rng)
    n, edges, mask = _compose(base_edges, n_base, cfg.motifs[motif_idx], rng.fork("attach"))
    edges, mask = _add_noise_edges(n, edges, mask, cfg.noise_edge_prob, rng.fork("noise"))
    order = np.lexsort((np.array([v for _, v in edges]), np.array([u for u, _ in edges])))
    edges_arr = np.array(edges, dtype=np.int64)[order]
    mask_arr = np.array(mask, dtype=bool)[order]
    mode = cfg.resolved_feature_mode()
    x = _features(n, edges, mode, color, cfg.n_color_envs + 2)
    return Graph(num_nodes=n, x=x, edges=edges_arr, y=motif_idx, env=env,
                 motif_mask=mask_arr)


def generate(cfg: GenConfig) -> DatasetSplit:
    """Produce a full deterministic DatasetSplit for the configured shift."""
    master = Rng(cfg.seed)
    split = DatasetSplit()
    plan = _plan(cfg)
    for gi, (split_name, base_kind, size_range, motif_idx, env, color) in enumerate(plan):
        g = _make_graph(cfg, base_kind, size_range, motif_idx, env, color,
                        master.fork(gi))
        getattr(split, split_name).append(g)
    split.validate()
    return split


def _plan(cfg: GenConfig):
    """Flat list of per-graph recipes; index in this list keys the rng fork."""
    plan = []
    n_classes = len(cfg.motifs)
    if cfg.split_by == "base":
        for env, kind in enumerate(cfg.train_bases):
            for c in range(n_classes):
                plan += [("train", kind, cfg.base_size_range, c, env, env)] * cfg.n_per_class_per_env
                plan += [("id_val", kind, cfg.base_size_range, c, env, env)] * cfg.n_id_val_per_class_per_env
        for c in range(n_classes):
            plan += [("ood_val", cfg.oodval_base, cfg.base_size_range, c, 0,
                      cfg.n_color_envs)] * cfg.n_val_per_class
            plan += [("ood_test", cfg.oodtest_base, cfg.base_size_range, c, 0,
                      cfg.n_color_envs + 1)] * cfg.n_val_per_class
    elif cfg.split_by == "size":
        kinds = cfg.train_bases
        for env, bucket in enumerate(cfg.size_buckets):
            for c in range(n_classes):
                for i in range(cfg.n_per_class_per_env):
                    plan.append(("train", kinds[i % len(kinds)], bucket, c, env, env))
                for i in range(cfg.n_id_val_per_class_per_env):
                    plan.append(("id_val", kinds[i % len(kinds)], bucket, c, env, env))
        for c in range(n_classes):
            for i in range(cfg.n_val_per_class):
                plan.append(("ood_val", kinds[i % len(kinds)], cfg.oodval_size_range, c, 0,
                             cfg.n_color_envs))
                plan.append(("ood_test", kinds[i % len(kinds)], cfg.oodtest_size_range, c, 0,
                             cfg.n_color_envs + 1))
    else:  # feature split: same structure everywhere, envs are colors
        kinds = cfg.train_bases
        for env in range(cfg.n_color_envs):
            for c in range(n_classes):
                for i in range(cfg.n_per_class_per_env):
                    plan.append(("train", kinds[i % len(kinds)], cfg.base_size_range, c, env, env))
                for i in range(cfg.n_id_val_per_class_per_env):
                    plan.append(("id_val", kinds[i % len(kinds)], cfg.base_size_range, c, env, env))
        for c in range(n_classes):
            for i in range(cfg.n_val_per_class):
                plan.append(("ood_val", kinds[i % len(kinds)], cfg.base_size_range, c, 0,
                             cfg.n_color_envs))
                plan.append(("ood_test", kinds[i % len(kinds)], cfg.base_size_range, c, 0,
                             cfg.n_color_envs + 1))
    return plan


def manifest(cfg: GenConfig, split: DatasetSplit) -> dict:
    variant = "motif2" if cfg.oodtest_base == "dorogovtsev_mendes" else "motif"
    return {
        "format_version": 1,
        "variant": variant,
        "split_by": cfg.split_by,
        "config": asdict(cfg),
        "env_map": {str(i): name for i, name in enumerate(cfg.env_names())},
        "counts": {name: len(graphs) for name, graphs in split.parts()},
        "feature_dim": cfg.feature_dim(),
        "num_classes": len(cfg.motifs),
        "num_envs": cfg.n_envs,
    }


# ---------------------------------------------------------------------------
# micro universe: a fully enumerable covariate SCM for the independence oracle
#
# Node index layout (fixed, disjoint per role so that any base or attachment
# pattern identifies its environment while motif patterns never do):
#   0..1   motif 0: 2-node path, one edge
#   2..5   motif 1: star with three leaves
#   6..8   env 0 base: 3-node path
#   9..11  env 1 base: triangle


@dataclass(frozen=True)
class MicroOutcome:
    env: int
    y: int
    edges: frozenset  # frozenset[tuple[int, int]]
    causal_edges: frozenset
    prob: float


@dataclass(frozen=True)
class MicroUniverse:
    outcomes: tuple[MicroOutcome, ...]

    def total_prob(self) -> float:
        return sum(o.prob for o in self.outcomes)


_MICRO_MOTIFS = {0: [(0, 1)], 1: [(2, 3), (2, 4), (2, 5)]}
_MICRO_MOTIF_NODES = {0: [0, 1], 1: [2, 3, 4, 5]}
_MICRO_BASES = {0: [(6, 7), (7, 8)], 1: [(9, 10), (9, 11), (10, 11)]}
_MICRO_BASE_NODES = {0: [6, 7, 8], 1: [9, 10, 11]}
MICRO_NUM_NODES = 12


def build_micro_universe() -> MicroUniverse:
    """Tabulate the joint P(E, G) of the micro covariate SCM.

    Environments and labels are uniform and independent; the attachment edge
    is uniform over (motif node, base node) pairs given (E, Y).
    """
    outcomes = []
    for env in (0, 1):
        for y in (0, 1):
            attachments = [
                (m, b) for m in _MICRO_MOTIF_NODES[y] for b in _MICRO_BASE_NODES[env]
            ]
            p = 0.25 / len(attachments)
            for m, b in attachments:
                edges = frozenset(
                    _MICRO_MOTIFS[y] + _MICRO_BASES[env] + [(min(m, b), max(m, b))]
                )
                outcomes.append(MicroOutcome(
                    env=env, y=y, edges=edges,
                    causal_edges=frozenset(_MICRO_MOTIFS[y]), prob=p,
                ))
    return MicroUniverse(outcomes=tuple(outcomes))
