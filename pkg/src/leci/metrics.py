"""Accuracy and independence diagnostics.

Two kinds of check live here.  Statistical ones evaluate trained models:
split accuracies, edge-selection precision/recall/F1 against the ground-truth
motif mask, and fresh-probe accuracies that measure how much environment or
label signal a selected view still carries.  Exact ones operate on the
enumerable micro universe: plug-in mutual information over tabulated joints,
and a brute-force sweep of every edge subset verifying that a subgraph is
environment-independent precisely when it sits inside the causal part, with
the causal part the unique maximal label-informative choice.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .datasets import MicroUniverse
from .errors import ConfigError, ContractError
from .graphs import Batch, Graph, batch as make_batch
from .nn import GinEncoder, Linear, graph_readout
from .tensor import Rng, Tensor
from .training import Adam


# ---------------------------------------------------------------------------
# accuracy and edge selection


def accuracy(model, graphs: list[Graph], eval_batch_size: int = 256) -> float:
    """Argmax-logit match rate in eval mode; ties break to the lowest class."""
    if not graphs:
        raise ContractError("accuracy needs a nonempty graph list")
    hits = 0
    for i in range(0, len(graphs), eval_batch_size):
        b = make_batch(graphs[i:i + eval_batch_size])
        hits += int((model.predict_logits(b).argmax(axis=1) == b.y).sum())
    return hits / len(graphs)


@dataclass
class SelectionScore:
    precision: float
    recall: float
    f1: float
    per_graph_f1: list[float] = field(default_factory=list)


def edge_selection_score(edge_prob_fn, graphs: list[Graph]) -> SelectionScore:
    """Oracle-size top-k selection score against the motif mask.

    For each graph the k highest-probability edges are selected with
    k = (number of true motif edges); this is a measurement protocol only,
    the trained model never sees k.  Scores are micro-averaged.
    ``edge_prob_fn(graph) -> (E,) probabilities``.
    """
    tp = fp = fn = 0
    per_graph = []
    for g in graphs:
        if g.motif_mask.shape != (g.num_edges,):
            raise ConfigError("edge_selection_score needs motif masks")
        k = int(g.motif_mask.sum())
        probs = np.asarray(edge_prob_fn(g), dtype=np.float64)
        order = np.lexsort((np.arange(len(probs)), -probs))
        chosen = np.zeros(g.num_edges, dtype=bool)
        chosen[order[:k]] = True
        tp_g = int((chosen & g.motif_mask).sum())
        fp_g = int((chosen & ~g.motif_mask).sum())
        fn_g = int((~chosen & g.motif_mask).sum())
        tp, fp, fn = tp + tp_g, fp + fp_g, fn + fn_g
        denom = 2 * tp_g + fp_g + fn_g
        per_graph.append(2 * tp_g / denom if denom else 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return SelectionScore(precision=precision, recall=recall, f1=f1,
                          per_graph_f1=per_graph)


def selector_edge_probs(model):
    """Edge-probability closure over a trained model, for the scorers."""

    def fn(g: Graph) -> np.ndarray:
        b = make_batch([g])
        x_pure = model.purify(Tensor(b.x))
        return model.selector.edge_probs(b, x=x_pure)

    return fn


# ---------------------------------------------------------------------------
# independence probes: fresh discriminators trained from scratch on a view


@dataclass
class ProbeConfig:
    epochs: int = 40
    lr: float = 3e-3
    hidden_dim: int = 16
    num_layers: int = 2
    batch_size: int = 16
    holdout_fraction: float = 0.25
    seed: int = 0


def independence_probe(view_fn, target: str, train_graphs: list[Graph],
                       probe_config: ProbeConfig | None = None) -> float:
    """Best held-out accuracy of a fresh GIN probe on a frozen view.

    ``view_fn(batch) -> (E,) edge weights`` defines the view (e.g. the
    selected w_C for the environment probe, or all-ones for raw graphs);
    ``target`` is ``"env"`` or ``"label"``.
    """
    if target not in ("env", "label"):
        raise ConfigError(f"probe target must be 'env' or 'label', got {target!r}")
    cfg = probe_config or ProbeConfig()
    rng = Rng(cfg.seed)
    order = rng.fork("holdout").permutation(len(train_graphs))
    n_hold = max(1, int(len(train_graphs) * cfg.holdout_fraction))
    hold = [train_graphs[i] for i in order[:n_hold]]
    fit = [train_graphs[i] for i in order[n_hold:]]

    in_dim = train_graphs[0].x.shape[1]
    targets_of = (lambda b: b.env) if target == "env" else (lambda b: b.y)
    if target == "env":
        n_out = max(g.env for g in train_graphs) + 1
    else:
        n_out = max(g.y for g in train_graphs) + 1
    gnn = GinEncoder(in_dim, cfg.hidden_dim, cfg.num_layers, rng.fork("probe"),
                     dropout_p=0.0)
    head = Linear(cfg.hidden_dim, n_out, rng.fork("probe_head"))
    params = [t for _, t in gnn.params("p") + head.params("p.head")]
    opt = Adam(params, cfg.lr)

    def forward(b: Batch, train: bool) -> Tensor:
        w = Tensor(np.asarray(view_fn(b), dtype=np.float64))
        h = gnn.encode(b, w, train=train)
        return head(graph_readout(h, b))

    best = 0.0
    for epoch in range(cfg.epochs):
        ep = rng.fork("epoch").fork(epoch)
        order = ep.fork("shuffle").permutation(len(fit))
        for i in range(0, len(fit), cfg.batch_size):
            b = make_batch([fit[j] for j in order[i:i + cfg.batch_size]])
            loss = T.nll_loss(T.log_softmax(forward(b, True)), targets_of(b))
            opt.zero_grad()
            T.backward(loss)
            opt.step()
        hits = 0
        for i in range(0, len(hold), 256):
            b = make_batch(hold[i:i + 256])
            hits += int((forward(b, False).data.argmax(axis=1) == targets_of(b)).sum())
        best = max(best, hits / len(hold))
    return best


# ---------------------------------------------------------------------------
# plug-in mutual information


def plugin_mi(joint_counts) -> float:
    """Plug-in mutual information (nats) of a nonnegative count/probability
    table; 0*log(0) contributes zero."""
    table = np.asarray(joint_counts, dtype=np.float64)
    if table.ndim != 2 or np.any(table < 0):
        raise ContractError("plugin_mi expects a nonnegative 2-D table")
    total = table.sum()
    if total == 0:
        raise ContractError("plugin_mi: all-zero table")
    p = table / total
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, p / (px * py), 1.0)
        terms = np.where(p > 0, p * np.log(ratio), 0.0)
    return float(terms.sum())


# ---------------------------------------------------------------------------
# micro-universe oracle


@dataclass
class OracleReport:
    passed: bool
    subsets_checked: int
    mi_counterexamples: list[dict] = field(default_factory=list)
    uniqueness_counterexamples: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=str)


def pattern_env_mi(universe: MicroUniverse, pattern) -> float:
    """I(E ; [pattern present]) over the tabulated joint."""
    pattern = frozenset(pattern)
    n_envs = max(o.env for o in universe.outcomes) + 1
    table = np.zeros((n_envs, 2))
    for o in universe.outcomes:
        table[o.env, int(pattern <= o.edges)] += o.prob
    return plugin_mi(table)


def pattern_label_mi(universe: MicroUniverse, pattern) -> float:
    """I(Y ; [pattern present]) over the tabulated joint."""
    pattern = frozenset(pattern)
    n_labels = max(o.y for o in universe.outcomes) + 1
    table = np.zeros((n_labels, 2))
    for o in universe.outcomes:
        table[o.y, int(pattern <= o.edges)] += o.prob
    return plugin_mi(table)


def oracle_check_lemma1(universe: MicroUniverse, tol: float = 1e-12,
                        max_subsets_per_graph: int = 4096) -> OracleReport:
    """Exhaustive check of the independence equivalence and causal uniqueness.

    For every edge subset of every outcome graph: the subset's presence
    indicator is independent of the environment (plug-in MI zero) exactly
    when the subset lies inside that outcome's causal edges.  Additionally,
    among the environment-independent subsets of each outcome, those with
    maximal label information must have the causal edge set as their unique
    maximal element (their union), pinning the causal subgraph exactly.
    """
    report = OracleReport(passed=True, subsets_checked=0)
    distinct_graphs = {}
    for o in universe.outcomes:
        distinct_graphs.setdefault(o.edges, o)
    for edges, outcome in distinct_graphs.items():
        if 2 ** len(edges) > max_subsets_per_graph:
            raise ConfigError(
                f"universe graph has {len(edges)} edges; subset lattice too large")
        edge_list = sorted(edges)
        independent: list[frozenset] = []
        for r in range(len(edge_list) + 1):
            for combo in itertools.combinations(edge_list, r):
                pattern = frozenset(combo)
                report.subsets_checked += 1
                mi = pattern_env_mi(universe, pattern)
                inside_causal = pattern <= outcome.causal_edges
                if inside_causal and mi > tol:
                    report.passed = False
                    report.mi_counterexamples.append({
                        "pattern": sorted(pattern), "mi": mi,
                        "expected": "independent (inside causal part)"})
                elif not inside_causal and mi <= tol:
                    report.passed = False
                    report.mi_counterexamples.append({
                        "pattern": sorted(pattern), "mi": mi,
                        "expected": "dependent (touches spurious part)"})
                if mi <= tol:
                    independent.append(pattern)
        # causal uniqueness: maximal label information among independent
        # subsets, with the causal edge set as the unique maximal element
        label_mis = {p: pattern_label_mi(universe, p) for p in independent}
        best = max(label_mis.values())
        winners = [p for p, v in label_mis.items() if v >= best - tol]
        union = frozenset().union(*winners) if winners else frozenset()
        if union != outcome.causal_edges or not any(
                w == outcome.causal_edges for w in winners):
            report.passed = False
            report.uniqueness_counterexamples.append({
                "graph": sorted(edges),
                "causal": sorted(outcome.causal_edges),
                "winners": [sorted(w) for w in winners],
            })
    return report


@dataclass
class MetricsReport:
    accuracy_train: float
    accuracy_id_val: float
    accuracy_ood_val: float
    accuracy_ood_test: float
    n_envs: int
    n_classes: int
    env_chance: float
    label_chance: float
    edge_precision: float | None = None
    edge_recall: float | None = None
    edge_f1: float | None = None
    env_probe_acc: float | None = None
    label_probe_acc: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)
