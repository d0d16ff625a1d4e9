"""Interpretable edge selector: node embeddings -> edge logits -> soft masks.

The selector scores each undirected edge from the concatenated embeddings of
its endpoints (symmetrized over both orientations), relaxes the edge draw
with a Gumbel-sigmoid at temperature tau, and always returns the
complementary pair (w_C, w_S) with w_C + w_S = 1 elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .graphs import Batch, Graph, batch as make_batch
from .nn import GinEncoder, MLP
from .tensor import Rng, Tensor


class Selector:
    """Subgraph selector with its own GIN embedder and an edge-scoring MLP."""

    def __init__(self, in_dim: int, hidden_dim: int, num_layers: int, rng: Rng,
                 tau: float = 1.0, dropout_p: float = 0.5):
        if tau <= 0:
            raise ContractError("tau must be positive")
        self.tau = tau
        self.embed_gnn = GinEncoder(in_dim, hidden_dim, num_layers,
                                    rng.fork("embed"), dropout_p=dropout_p)
        # zero-initialized final layer: a fresh selector emits probability 0.5
        self.edge_mlp = MLP([2 * hidden_dim, hidden_dim, 1], rng.fork("edge_mlp"),
                            zero_init_last=True)

    def edge_logits(self, b: Batch, train: bool = False, rng: Rng | None = None,
                    x: Tensor | None = None) -> Tensor:
        """Orientation-symmetric logit per undirected edge, shape (E,)."""
        ones = Tensor(np.ones(b.num_edges))
        h = self.embed_gnn.encode(b, ones, train=train,
                                  rng=rng.fork("embed") if rng else None, x=x)
        u, v = b.edges[:, 0], b.edges[:, 1]
        hu, hv = T.gather_rows(h, u), T.gather_rows(h, v)
        fwd = self.edge_mlp(T.concat_last_dim(hu, hv))
        rev = self.edge_mlp(T.concat_last_dim(hv, hu))
        logits = T.mul(T.add(fwd, rev), 0.5)
        return T.squeeze_last(logits)

    def edge_probs(self, b: Batch, x: Tensor | None = None) -> np.ndarray:
        """Eval-mode selection probabilities in (0, 1), one per edge."""
        logits = self.edge_logits(b, train=False, x=x)
        return 1.0 / (1.0 + np.exp(-logits.data))

    def select(self, b: Batch, rng: Rng | None = None, train: bool = False,
               x: Tensor | None = None, hard: bool = False) -> tuple[Tensor, Tensor]:
        """Complementary edge-weight views (w_C, w_S), each of shape (E,).

        Train mode draws one Gumbel-sigmoid sample; eval mode returns the
        noiseless sigmoid.  Gradients reach the selector through both views.
        """
        logits = self.edge_logits(b, train=train, rng=rng, x=x)
        if train:
            w_c = T.gumbel_sigmoid(logits, self.tau, hard=hard,
                                   rng=rng.fork("gumbel") if rng else None)
        else:
            w_c = T.sigmoid(logits)
        w_s = T.add(1.0, T.mul(w_c, -1.0))
        return w_c, w_s

    def params(self, prefix: str = "selector"):
        return (self.embed_gnn.params(f"{prefix}.gnn")
                + self.edge_mlp.params(f"{prefix}.edge_mlp"))


@dataclass
class Explanation:
    edge_indices: list[int]
    probabilities: np.ndarray
    dot: str
    warning: str | None = None


def explain(sel: Selector, graph: Graph, threshold: float | None = None,
            top_k: int | None = None, x: Tensor | None = None) -> Explanation:
    """Select high-probability edges of one graph and render them as DOT.

    Exactly one of ``threshold`` / ``top_k`` must be given.  Ties in top-k
    selection break toward the lower edge index.
    """
    if (threshold is None) == (top_k is None):
        raise ContractError("explain needs exactly one of threshold or top_k")
    b = make_batch([graph])
    probs = sel.edge_probs(b, x=x)
    warning = None
    if top_k is not None:
        if top_k > len(probs):
            warning = (f"top_k={top_k} exceeds edge count {len(probs)}; "
                       f"clamped to {len(probs)}")
            top_k = len(probs)
        order = np.lexsort((np.arange(len(probs)), -probs))
        chosen = sorted(int(i) for i in order[:top_k])
    else:
        chosen = [int(i) for i in np.nonzero(probs > threshold)[0]]
    dot = render_dot(graph, chosen)
    return Explanation(edge_indices=chosen, probabilities=probs, dot=dot,
                       warning=warning)


def render_dot(graph: Graph, selected: list[int]) -> str:
    """DOT text: selected edges red, ground-truth motif nodes green."""
    sel_set = set(selected)
    motif_nodes = set()
    for i, (u, v) in enumerate(graph.edges):
        if graph.motif_mask[i]:
            motif_nodes.update((int(u), int(v)))
    lines = ["graph g {", "  node [shape=circle];"]
    for v in range(graph.num_nodes):
        if v in motif_nodes:
            lines.append(f"  {v} [style=filled, fillcolor=palegreen];")
        else:
            lines.append(f"  {v};")
    for i, (u, v) in enumerate(graph.edges):
        if i in sel_set:
            lines.append(f"  {int(u)} -- {int(v)} [color=red, penwidth=2.0];")
        else:
            lines.append(f"  {int(u)} -- {int(v)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def info_regularizer(w_c: Tensor, r: float) -> Tensor:
    """Mean KL(Bernoulli(p_e) || Bernoulli(r)) over edges, for p_e = w_c."""
    if not 0.0 < r < 1.0:
        raise ContractError("information constraint r must lie in (0, 1)")
    eps = 1e-12
    p = T.add(T.mul(w_c, 1.0 - 2 * eps), eps)  # keep logs finite
    one_m_p = T.add(1.0, T.mul(p, -1.0))
    kl = T.add(
        T.mul(p, T.add(T.log(p), -np.log(r))),
        T.mul(one_m_p, T.add(T.log(one_m_p), -np.log(1.0 - r))),
    )
    return T.mean_all(kl)
