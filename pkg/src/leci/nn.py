"""GIN message passing with scalar edge weights, MLPs, pooling, checkpoints.

The encoder follows the sum-aggregation update
``h_v <- MLP((1 + eps) * h_v + sum_u w_uv * h_u)`` over both directions of
every undirected edge, with eps fixed at 0.  An optional virtual node is
materialized as one extra node per graph connected to all of that graph's
nodes with weight 1; virtual nodes never enter the mean readout.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import tensor as T
from .errors import ContractError
from .graphs import Batch
from .tensor import Rng, Tensor


class Linear:
    """Affine map with glorot-uniform weights (or zeros when ``zero_init``)."""

    def __init__(self, d_in: int, d_out: int, rng: Rng | None = None,
                 zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            a = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(size=(d_in, d_out), low=-a, high=a)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def params(self, prefix: str):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


class MLP:
    """Stack of Linear layers with relu between them (none after the last)."""

    def __init__(self, dims: list[int], rng: Rng, zero_init_last: bool = False):
        self.layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            last = i == len(dims) - 2
            self.layers.append(
                Linear(a, b, rng.fork(i), zero_init=zero_init_last and last))

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x

    def params(self, prefix: str):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.params(f"{prefix}.{i}"))
        return out


class GinEncoder:
    """Multi-layer GIN over a weighted batch; returns per-node embeddings."""

    def __init__(self, in_dim: int, hidden_dim: int, num_layers: int, rng: Rng,
                 dropout_p: float = 0.5, use_virtual_node: bool = False):
        if num_layers < 1 or hidden_dim < 1:
            raise ContractError("GinEncoder needs num_layers >= 1 and hidden_dim >= 1")
        if not 0.0 <= dropout_p < 1.0:
            raise ContractError("dropout_p must lie in [0, 1)")
        self.hidden_dim = hidden_dim
        self.dropout_p = dropout_p
        self.use_virtual_node = use_virtual_node
        self.eps = 0.0  # fixed, non-learnable
        dims_in = [in_dim] + [hidden_dim] * (num_layers - 1)
        self.mlps = [
            MLP([d, hidden_dim, hidden_dim], rng.fork(f"layer{i}"))
            for i, d in enumerate(dims_in)
        ]

    def encode(self, batch: Batch, edge_weight: Tensor, train: bool = False,
               rng: Rng | None = None, x: Tensor | None = None) -> Tensor:
        """Node embeddings of shape (batch.num_nodes, hidden_dim).

        ``edge_weight`` holds one weight in [0, 1] per undirected edge;
        ``x`` overrides the batch's stored features (e.g. purified ones).
        """
        w = edge_weight if isinstance(edge_weight, Tensor) else Tensor(edge_weight)
        if w.data.shape != (batch.num_edges,):
            raise ContractError(
                f"edge_weight must have shape ({batch.num_edges},), got {w.data.shape}")
        if batch.num_edges and (w.data.min() < 0.0 or w.data.max() > 1.0 + 1e-12):
            raise ContractError("edge weights must lie in [0, 1]")
        h = x if x is not None else Tensor(batch.x)
        n = batch.num_nodes

        # both directions of each undirected edge share its weight
        w_dir = T.concat_rows(w, w)
        src, dst = batch.src, batch.dst
        n_total = n
        if self.use_virtual_node:
            n_total = n + batch.num_graphs
            vn_ids = n + batch.node_graph_id
            nodes = np.arange(n)
            src = np.concatenate([src, nodes, vn_ids])
            dst = np.concatenate([dst, vn_ids, nodes])
            w_dir = T.concat_rows(w_dir, Tensor(np.ones(2 * n)))
            h = T.concat_rows(h, Tensor(np.zeros((batch.num_graphs, h.data.shape[1]))))

        for i, mlp in enumerate(self.mlps):
            msgs = T.mul(T.gather_rows(h, src), T.unsqueeze_last(w_dir))
            agg = T.segment_sum(msgs, dst, n_total)
            h = mlp(T.add(T.mul(h, 1.0 + self.eps), agg))
            h = T.relu(h)
            if self.dropout_p > 0.0 and train:
                h = T.dropout(h, self.dropout_p, train=True,
                              rng=rng.fork(f"dropout{i}") if rng else None)
        if self.use_virtual_node:
            h = T.slice_rows(h, n)
        return h

    def params(self, prefix: str):
        out = []
        for i, mlp in enumerate(self.mlps):
            out.extend(mlp.params(f"{prefix}.layer{i}"))
        return out


def graph_readout(node_emb: Tensor, batch: Batch) -> Tensor:
    """Mean-pool node embeddings per graph (virtual nodes already excluded)."""
    if np.any(batch.graph_num_nodes == 0):
        raise ContractError("graph_readout: empty graph in batch")
    return T.segment_mean(node_emb, batch.node_graph_id, batch.num_graphs)


# ---------------------------------------------------------------------------
# checkpoint file: JSON header line + raw little-endian float64 payload


def save_params(path, named_params: list[tuple[str, Tensor]], meta: dict | None = None):
    entries = [{"name": name, "shape": list(t.data.shape)} for name, t in named_params]
    header = json.dumps({"meta": meta or {}, "tensors": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _, t in named_params:
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_params(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * count)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header["meta"], arrays


def assign_params(named_params: list[tuple[str, Tensor]], arrays: dict[str, np.ndarray]):
    for name, t in named_params:
        if name not in arrays:
            raise ContractError(f"checkpoint missing parameter {name}")
        if arrays[name].shape != t.data.shape:
            raise ContractError(
                f"checkpoint shape mismatch for {name}: "
                f"{arrays[name].shape} != {t.data.shape}")
        t.data = arrays[name].astype(np.float64).copy()
