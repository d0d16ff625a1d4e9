"""Graph and batch containers, dataset splits, and a line-delimited file format.

Graphs are undirected, stored as (u, v) pairs with u < v; per-edge weights in
[0, 1] and a boolean ground-truth motif mask travel with the edges.  All
containers are immutable after construction (numpy buffers are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParseError, ValidationError

JSONL_HEADER = {"format": "leci-graphs", "version": 1}
_SPLIT_NAMES = ("train", "id_val", "ood_val", "ood_test")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """One undirected attributed graph with label, environment id and motif mask."""

    num_nodes: int
    x: np.ndarray            # (num_nodes, d) float64
    edges: np.ndarray        # (E, 2) int64, each row (u, v) with u < v
    y: int
    env: int
    motif_mask: np.ndarray   # (E,) bool
    edge_weight: np.ndarray | None = None  # (E,) float64 in [0, 1]; default all-ones

    def __post_init__(self):
        x = _frozen(np.asarray(self.x, dtype=np.float64))
        edges = _frozen(np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        mask = _frozen(np.asarray(self.motif_mask, dtype=bool))
        w = self.edge_weight
        w = np.ones(len(edges)) if w is None else np.asarray(w, dtype=np.float64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "motif_mask", mask)
        object.__setattr__(self, "edge_weight", _frozen(w))
        validate_graph(self)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def equals(self, other: "Graph") -> bool:
        return (
            self.num_nodes == other.num_nodes
            and self.y == other.y
            and self.env == other.env
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.motif_mask, other.motif_mask)
            and np.array_equal(self.edge_weight, other.edge_weight)
        )


def validate_graph(g: Graph) -> None:
    if g.num_nodes <= 0:
        raise ValidationError("num_nodes", f"must be positive, got {g.num_nodes}")
    if g.x.ndim != 2 or g.x.shape[0] != g.num_nodes:
        raise ValidationError("x", f"expected ({g.num_nodes}, d) features, got {g.x.shape}")
    e = g.edges
    if len(e):
        if e.min() < 0 or e.max() >= g.num_nodes:
            raise ValidationError("edges", "endpoint out of range")
        if np.any(e[:, 0] >= e[:, 1]):
            raise ValidationError("edges", "edges must satisfy u < v (no self-loops)")
        keys = e[:, 0] * g.num_nodes + e[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise ValidationError("edges", "duplicate edge pair")
    if g.motif_mask.shape != (len(e),):
        raise ValidationError("motif_mask", f"length {g.motif_mask.shape} != edge count {len(e)}")
    if g.edge_weight.shape != (len(e),):
        raise ValidationError("edge_weight", "length must equal edge count")
    if len(e) and (g.edge_weight.min() < 0.0 or g.edge_weight.max() > 1.0):
        raise ValidationError("edge_weight", "weights must lie in [0, 1]")


@dataclass(frozen=True)
class Batch:
    """Disjoint union of graphs; nodes carry contiguous per-graph segment ids."""

    num_nodes: int
    num_graphs: int
    x: np.ndarray
    edges: np.ndarray          # (E, 2) with offset endpoints, u < v
    edge_weight: np.ndarray
    motif_mask: np.ndarray
    node_graph_id: np.ndarray  # (num_nodes,) nondecreasing contiguous labels
    edge_graph_id: np.ndarray  # (E,)
    y: np.ndarray              # (num_graphs,)
    env: np.ndarray            # (num_graphs,)
    graph_num_nodes: np.ndarray
    graph_num_edges: np.ndarray
    # directed expansion, precomputed for message passing: each undirected
    # edge i appears as src[i]->dst[i] and src[E+i]->dst[E+i]
    src: np.ndarray = field(init=False)
    dst: np.ndarray = field(init=False)

    def __post_init__(self):
        u, v = self.edges[:, 0], self.edges[:, 1]
        object.__setattr__(self, "src", _frozen(np.concatenate([u, v])))
        object.__setattr__(self, "dst", _frozen(np.concatenate([v, u])))
        object.__setattr__(self, "_scatter_memo", {})

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def scatter(self, key: str, ids: np.ndarray, num_segments: int):
        """Memoized SegmentScatter; one grouping is reused across all layers
        and encoders that process this batch."""
        from .tensor import SegmentScatter

        memo = self._scatter_memo
        if key not in memo:
            memo[key] = SegmentScatter(ids, num_segments)
        return memo[key]


def batch(graphs: list[Graph]) -> Batch:
    """Pack graphs into one disjoint union; invertible via ``unbatch``."""
    if not graphs:
        raise ContractError("batch expects a nonempty list of graphs")
    d = graphs[0].x.shape[1]
    for g in graphs:
        if g.x.shape[1] != d:
            raise ContractError(
                f"mixed feature dimensions in batch: {g.x.shape[1]} != {d}")
    n_nodes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    n_edges = np.array([g.num_edges for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(n_nodes)[:-1]])
    edges = (
        np.concatenate([g.edges + off for g, off in zip(graphs, offsets)])
        if n_edges.sum() else np.zeros((0, 2), dtype=np.int64)
    )
    return Batch(
        num_nodes=int(n_nodes.sum()),
        num_graphs=len(graphs),
        x=_frozen(np.concatenate([g.x for g in graphs])),
        edges=_frozen(edges),
        edge_weight=_frozen(np.concatenate([g.edge_weight for g in graphs])),
        motif_mask=_frozen(np.concatenate([g.motif_mask for g in graphs])),
        node_graph_id=_frozen(np.repeat(np.arange(len(graphs)), n_nodes)),
        edge_graph_id=_frozen(np.repeat(np.arange(len(graphs)), n_edges)),
        y=_frozen(np.array([g.y for g in graphs], dtype=np.int64)),
        env=_frozen(np.array([g.env for g in graphs], dtype=np.int64)),
        graph_num_nodes=_frozen(n_nodes),
        graph_num_edges=_frozen(n_edges),
    )


def unbatch(b: Batch) -> list[Graph]:
    graphs = []
    node_off = 0
    edge_off = 0
    for i in range(b.num_graphs):
        n = int(b.graph_num_nodes[i])
        m = int(b.graph_num_edges[i])
        graphs.append(Graph(
            num_nodes=n,
            x=b.x[node_off:node_off + n],
            edges=b.edges[edge_off:edge_off + m] - node_off,
            y=int(b.y[i]),
            env=int(b.env[i]),
            motif_mask=b.motif_mask[edge_off:edge_off + m],
            edge_weight=b.edge_weight[edge_off:edge_off + m],
        ))
        node_off += n
        edge_off += m
    return graphs


@dataclass
class DatasetSplit:
    """Train / in-distribution-val / OOD-val / OOD-test graph lists."""

    train: list[Graph] = field(default_factory=list)
    id_val: list[Graph] = field(default_factory=list)
    ood_val: list[Graph] = field(default_factory=list)
    ood_test: list[Graph] = field(default_factory=list)

    def parts(self):
        return [(name, getattr(self, name)) for name in _SPLIT_NAMES]

    def validate(self) -> None:
        seen: set[int] = set()
        for name, graphs in self.parts():
            for g in graphs:
                if id(g) in seen:
                    raise ValidationError("splits", "splits must be disjoint")
                seen.add(id(g))
                validate_graph(g)
        counts: dict[int, int] = {}
        for g in self.train:
            counts[g.env] = counts.get(g.env, 0) + 1
        for env, c in counts.items():
            if c < 2:
                raise ValidationError(
                    "env", f"train environment {env} appears only {c} time(s)")


# ---------------------------------------------------------------------------
# JSONL serialization: deterministic key order, floats at 17 significant
# digits (enough to round-trip any float64 exactly)


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ",".join(
        "[" + ",".join(_fmt_float(v) for v in row) + "]" for row in m
    )
    return "[" + rows + "]"


def _graph_line(g: Graph, split_name: str) -> str:
    edges = ",".join(f"[{int(u)},{int(v)}]" for u, v in g.edges)
    mask = ",".join("true" if m else "false" for m in g.motif_mask)
    return (
        "{"
        f'"num_nodes":{g.num_nodes},'
        f'"edges":[{edges}],'
        f'"x":{_fmt_matrix(g.x)},'
        f'"y":{g.y},'
        f'"env":{g.env},'
        f'"motif_mask":[{mask}],'
        f'"split":"{split_name}"'
        "}"
    )


def save_jsonl(split: DatasetSplit, path) -> None:
    """Write a whole DatasetSplit as UTF-8 JSON-lines, one graph per line."""
    split.validate()
    lines = [json.dumps(JSONL_HEADER, separators=(",", ":"))]
    for name, graphs in split.parts():
        for g in graphs:
            if len(g.edge_weight) and not np.all(g.edge_weight == 1.0):
                raise ValidationError(
                    "edge_weight", "the file format stores unit edge weights only")
        lines.extend(_graph_line(g, name) for g in graphs)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_jsonl(path) -> DatasetSplit:
    split = DatasetSplit()
    with open(path, encoding="utf-8") as f:
        raw_lines = f.read().splitlines()
    if not raw_lines:
        raise ParseError(1, "missing header line")
    try:
        header = json.loads(raw_lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(1, f"bad header: {e}") from e
    if header.get("format") != JSONL_HEADER["format"]:
        raise ParseError(1, f"unexpected format {header.get('format')!r}")
    for lineno, raw in enumerate(raw_lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(lineno, str(e)) from e
        missing = {"num_nodes", "edges", "x", "y", "env", "motif_mask", "split"} - set(obj)
        if missing:
            raise ParseError(lineno, f"missing keys {sorted(missing)}")
        if obj["split"] not in _SPLIT_NAMES:
            raise ParseError(lineno, f"unknown split {obj['split']!r}")
        x = np.asarray(obj["x"], dtype=np.float64)
        g = Graph(
            num_nodes=int(obj["num_nodes"]),
            x=x,
            edges=np.asarray(obj["edges"], dtype=np.int64).reshape(-1, 2),
            y=int(obj["y"]),
            env=int(obj["env"]),
            motif_mask=np.asarray(obj["motif_mask"], dtype=bool),
        )
        getattr(split, obj["split"]).append(g)
    split.validate()
    return split
