"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

The engine is deliberately small: a ``Tensor`` wraps a numpy array together
with a gradient slot and a backward closure, and ``backward`` walks the
recorded dependency graph in reverse topological order.  Only the operations
the training objectives need are provided; every differentiable op is checked
against central finite differences in the test suite.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ContractError

_MASK64 = (1 << 64) - 1


def _mix64(h: int, k: int) -> int:
    # splitmix64-style avalanche; combines a parent stream id with a fork key
    z = (h + (k + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _key_of(tag) -> int:
    if isinstance(tag, str):
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    return int(tag) & _MASK64


class Rng:
    """Seedable counter-based random stream (Philox).

    ``fork(tag)`` derives a child stream from the parent identity and the tag
    alone, so the set of streams a program draws from does not depend on the
    order in which they are created.  Tags may be ints or strings.
    """

    def __init__(self, seed: int, _path: int = 0):
        self.seed = int(seed) & _MASK64
        self._path = _path & _MASK64
        key = np.array([self.seed, self._path], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def fork(self, tag) -> "Rng":
        return Rng(self.seed, _mix64(self._path, _key_of(tag)))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self.gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self.gen.integers(low, high, size=size)

    def choice(self, n, size=None, replace=True):
        return self.gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int):
        return self.gen.permutation(n)


class Tensor:
    """Dense float64 array with a gradient slot and a backward record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self):
        backward(self)

    # operator sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Fill the grad slot of every ancestor of ``loss`` with d(loss)/d(ancestor).

    Gradients accumulate additively, both across multiple paths within one
    call and across repeated calls without a grad reset.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    # per-call accumulation map, flushed into .grad so repeated calls add up
    delta: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = delta.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node._backward is None:
            continue
        for parent, pg in node._backward(g):
            if not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if id(parent) in delta:
                delta[id(parent)] = delta[id(parent)] + pg
            else:
                delta[id(parent)] = pg


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def back(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _make(out_data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def back(g):
        return (
            (a, _unbroadcast(g * b.data, a.data.shape)),
            (b, _unbroadcast(g * a.data, b.data.shape)),
        )

    return _make(out_data, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def back(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _make(out_data, (a, b), back)


def affine(x, w, b) -> Tensor:
    """Fused x @ w + b (bias broadcast over rows)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.shape[1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise ContractError(
            f"affine shape mismatch: {x.data.shape} @ {w.data.shape} + {b.data.shape}")
    out_data = x.data @ w.data + b.data

    def back(g):
        return ((x, g @ w.data.T), (w, x.data.T @ g), (b, g.sum(axis=0)))

    return _make(out_data, (x, w, b), back)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def back(g):
        return ((x, g * mask),)

    return _make(np.where(mask, x.data, 0.0), (x,), back)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # numerically stable on both tails
    s = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-x.data)),
                 np.exp(x.data) / (1.0 + np.exp(x.data)))

    def back(g):
        return ((x, g * s * (1.0 - s)),)

    return _make(s, (x,), back)


def log(x) -> Tensor:
    x = _as_tensor(x)

    def back(g):
        return ((x, g / x.data),)

    return _make(np.log(x.data), (x,), back)


def sum_all(x) -> Tensor:
    """Full reduction to a scalar."""
    x = _as_tensor(x)

    def back(g):
        return ((x, np.full_like(x.data, float(g))),)

    return _make(np.asarray(x.data.sum()), (x,), back)


def mean_all(x) -> Tensor:
    """Full mean reduction to a scalar."""
    x = _as_tensor(x)
    n = x.data.size

    def back(g):
        return ((x, np.full_like(x.data, float(g) / n)),)

    return _make(np.asarray(x.data.mean()), (x,), back)


# ---------------------------------------------------------------------------
# shape ops


def unsqueeze_last(x) -> Tensor:
    x = _as_tensor(x)

    def back(g):
        return ((x, g.reshape(x.data.shape)),)

    return _make(x.data[..., None], (x,), back)


def squeeze_last(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.shape[-1] != 1:
        raise ContractError(f"squeeze_last expects trailing extent 1, got {x.data.shape}")

    def back(g):
        return ((x, g.reshape(x.data.shape)),)

    return _make(x.data[..., 0], (x,), back)


def concat_last_dim(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise ContractError(
            f"concat_last_dim shape mismatch: {a.data.shape} vs {b.data.shape}")
    k = a.data.shape[-1]

    def back(g):
        return ((a, g[..., :k]), (b, g[..., k:]))

    return _make(np.concatenate([a.data, b.data], axis=-1), (a, b), back)


def concat_rows(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[1:] != b.data.shape[1:]:
        raise ContractError(
            f"concat_rows shape mismatch: {a.data.shape} vs {b.data.shape}")
    n = a.data.shape[0]

    def back(g):
        return ((a, g[:n]), (b, g[n:]))

    return _make(np.concatenate([a.data, b.data], axis=0), (a, b), back)


def slice_rows(x, n: int) -> Tensor:
    """First ``n`` rows; the backward pass zero-pads the rest."""
    x = _as_tensor(x)

    def back(g):
        full = np.zeros_like(x.data)
        full[:n] = g
        return ((x, full),)

    return _make(x.data[:n].copy(), (x,), back)


def gather_rows(x, index, scatter: SegmentScatter | None = None) -> Tensor:
    """Rows ``x[index]``; the backward pass scatter-adds.

    ``scatter``, when given, must be a SegmentScatter built from ``index``
    over ``x``'s row count; it accelerates the backward accumulation.
    """
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        if scatter is not None:
            return ((x, scatter.sum_rows(g)),)
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return ((x, full),)

    return _make(x.data[index], (x,), back)


# ---------------------------------------------------------------------------
# segment reductions (rows grouped by an integer segment-id vector)


class SegmentScatter:
    """Precomputed sparse scatter matrix for repeated segment sums.

    ``sum(x)`` adds the rows of ``x`` into their segments; building the CSR
    once and reusing it beats ``np.add.at`` by a wide margin when the same
    grouping is applied many times (message passing reuses one grouping per
    batch across every layer and encoder).
    """

    def __init__(self, segment_ids, num_segments: int):
        from scipy import sparse

        segment_ids = np.asarray(segment_ids, dtype=np.int64)
        n = len(segment_ids)
        self.segment_ids = segment_ids
        self.num_segments = num_segments
        self.mat = sparse.csr_matrix(
            (np.ones(n), (segment_ids, np.arange(n))), shape=(num_segments, n))

    def sum_rows(self, x: np.ndarray) -> np.ndarray:
        if x.ndim == 1:
            return self.mat @ x
        return self.mat @ x

    def gather(self, g: np.ndarray) -> np.ndarray:
        return g[self.segment_ids]


def segment_sum(x, segment_ids, num_segments: int,
                scatter: SegmentScatter | None = None) -> Tensor:
    x = _as_tensor(x)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape[0] != x.data.shape[0]:
        raise ContractError("segment_sum: segment_ids length must match rows")
    if scatter is not None:
        out_data = scatter.sum_rows(x.data)
    else:
        out_data = np.zeros((num_segments,) + x.data.shape[1:])
        np.add.at(out_data, segment_ids, x.data)

    def back(g):
        return ((x, g[segment_ids]),)

    return _make(out_data, (x,), back)


def segment_mean(x, segment_ids, num_segments: int,
                 scatter: SegmentScatter | None = None) -> Tensor:
    x = _as_tensor(x)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape[0] != x.data.shape[0]:
        raise ContractError("segment_mean: segment_ids length must match rows")
    counts = np.bincount(segment_ids, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ContractError("segment_mean: empty segment")
    if scatter is not None:
        out_data = scatter.sum_rows(x.data)
    else:
        out_data = np.zeros((num_segments,) + x.data.shape[1:])
        np.add.at(out_data, segment_ids, x.data)
    shape = (num_segments,) + (1,) * (x.data.ndim - 1)
    out_data = out_data / counts.reshape(shape)

    def back(g):
        return ((x, (g / counts.reshape(shape))[segment_ids]),)

    return _make(out_data, (x,), back)


# ---------------------------------------------------------------------------
# classification losses


def log_softmax(x) -> Tensor:
    """Row-wise log-softmax over the last axis of a 2-D tensor."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ContractError("log_softmax expects a 2-D tensor")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_data = shifted - lse
    soft = np.exp(out_data)

    def back(g):
        return ((x, g - soft * g.sum(axis=1, keepdims=True)),)

    return _make(out_data, (x,), back)


def nll_loss(log_probs, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under row log-probs."""
    log_probs = _as_tensor(log_probs)
    targets = np.asarray(targets, dtype=np.int64)
    n = log_probs.data.shape[0]
    if targets.shape != (n,):
        raise ContractError("nll_loss: targets must be one index per row")
    picked = log_probs.data[np.arange(n), targets]

    def back(g):
        full = np.zeros_like(log_probs.data)
        full[np.arange(n), targets] = -float(g) / n
        return ((log_probs, full),)

    return _make(np.asarray(-picked.mean()), (log_probs,), back)


# ---------------------------------------------------------------------------
# stochastic and special ops


def dropout(x, p: float, train: bool, rng: Rng | None = None) -> Tensor:
    """Inverted dropout: active only in train mode, scales kept units by 1/(1-p)."""
    x = _as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        def back_id(g):
            return ((x, g),)

        return _make(x.data.copy(), (x,), back_id)
    if rng is None:
        raise ContractError("dropout in train mode needs an rng")
    keep = (rng.uniform(size=x.data.shape) >= p) / (1.0 - p)

    def back(g):
        return ((x, g * keep),)

    return _make(x.data * keep, (x,), back)


def grad_reverse(x, lam: float) -> Tensor:
    """Identity forward; backward multiplies the upstream gradient by -lam."""
    x = _as_tensor(x)
    lam = float(lam)
    if lam < 0:
        raise ContractError(f"grad_reverse: lambda must be nonnegative, got {lam}")

    def back(g):
        return ((x, g * (-lam)),)

    return _make(x.data.copy(), (x,), back)


def gumbel_sigmoid(logits, tau: float, hard: bool = False, rng: Rng | None = None) -> Tensor:
    """Relaxed Bernoulli sample via logistic-noise reparameterization.

    Soft mode returns sigmoid((logits + g)/tau) with g = log u - log(1-u);
    hard mode rounds the forward value and keeps the soft gradient
    (straight-through).
    """
    logits = _as_tensor(logits)
    if tau <= 0:
        raise ContractError(f"gumbel_sigmoid: tau must be positive, got {tau}")
    if rng is None:
        raise ContractError("gumbel_sigmoid needs an rng")
    u = rng.uniform(size=logits.data.shape, low=1e-12, high=1.0)
    noise = np.log(u) - np.log1p(-u)
    z = (logits.data + noise) / tau
    soft = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))
    out_data = np.where(soft > 0.5, 1.0, 0.0) if hard else soft

    def back(g):
        return ((logits, g * soft * (1.0 - soft) / tau),)

    return _make(out_data, (logits,), back)
