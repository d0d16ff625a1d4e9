"""Adversarial training of the selector: invariant loss, environment- and
label-adversarial criteria via gradient reversal, node-feature purification,
a warm-up ramp for the adversarial weights, Adam, and an ERM baseline.

Gradient routing is the heart of this module.  The environment discriminator
must fail to read the environment from the selected view, so its loss reaches
the selector only through ``grad_reverse`` on the edge weights: the
discriminator descends while the selector ascends, scaled by the ramped
lambda.  During warm-up all lambdas are zero, which trains the discriminators
on a stable selection distribution without letting them influence it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, NumericError
from .graphs import Batch, DatasetSplit, Graph, batch as make_batch
from .nn import GinEncoder, Linear, MLP, graph_readout, save_params
from .selector import Selector, info_regularizer
from .tensor import Rng, Tensor

_TRAIN_EVAL_CAP = 600  # train-split metrics use this fixed-size prefix


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    lambda_L_max: float = 5.0
    lambda_E_max: float = 10.0
    lambda_PFSC_max: float = 1.0
    warmup_epochs: int = 30
    ramp_shape: str = "linear"  # linear | dann_sigmoid
    seed: int = 0
    info_r: float | None = None
    info_weight: float = 1.0
    strict_alternation: bool = False
    use_pfsc: bool = True
    hidden_dim: int = 32
    num_layers: int = 3
    dropout_p: float = 0.5
    use_virtual_node: bool = False
    tau: float = 1.0
    eval_batch_size: int = 256

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.epochs and not self.warmup_epochs < self.epochs:
            raise ConfigError("warmup_epochs must be smaller than epochs")
        for name in ("lambda_L_max", "lambda_E_max", "lambda_PFSC_max"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.ramp_shape not in ("linear", "dann_sigmoid"):
            raise ConfigError(f"unknown ramp_shape {self.ramp_shape!r}")


@dataclass
class EpochLog:
    epoch: int
    lambda_L: float
    lambda_E: float
    lambda_PFSC: float
    loss_inv: float
    loss_E: float | None
    loss_L: float | None
    loss_PFSC: float | None
    env_disc_acc_on_GC: float | None
    label_disc_acc_on_GS: float | None
    acc_train: float
    acc_id_val: float
    acc_ood_val: float
    acc_ood_test: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


def ramp(epoch: int, config: TrainConfig) -> tuple[float, float, float]:
    """Adversarial weights at ``epoch``: zero through warm-up, then rising
    monotonically to the configured maxima at the final epoch."""
    if not 0 <= epoch < max(config.epochs, 1):
        raise ContractError(f"epoch {epoch} outside [0, {config.epochs})")
    if epoch < config.warmup_epochs:
        return (0.0, 0.0, 0.0)
    span = config.epochs - 1 - config.warmup_epochs
    p = 1.0 if span <= 0 else (epoch - config.warmup_epochs) / span
    if config.ramp_shape == "linear":
        scale = p
    else:
        scale = 2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0
    return (config.lambda_L_max * scale,
            config.lambda_E_max * scale,
            config.lambda_PFSC_max * scale)


class Adam:
    """Adam with optional L2 weight decay folded into the gradient."""

    def __init__(self, params: list[Tensor], lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1 ** self.t)
            v_hat = self.v[i] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# models


class LeciModel:
    """Five disjoint parameter groups: feature purifier (phi_T), feature
    environment discriminator (phi_FE), selector (theta), invariant predictor
    (phi_inv), environment discriminator (phi_E), label discriminator (phi_L).
    """

    def __init__(self, in_dim: int, n_classes: int, n_envs: int,
                 config: TrainConfig, rng: Rng):
        if n_envs < 2:
            raise ConfigError("EA requires >=2 environments")
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.n_envs = n_envs
        self.config = config
        init = rng.fork("init")
        h = config.hidden_dim
        self.use_pfsc = config.use_pfsc
        if self.use_pfsc:
            # residual purifier starts as the identity (zeroed last layer)
            self.pfsc_transform = MLP([in_dim, max(in_dim, 8), in_dim],
                                      init.fork("pfsc_t"), zero_init_last=True)
            self.pfsc_disc = MLP([in_dim, 16, n_envs], init.fork("pfsc_fe"))
        else:
            self.pfsc_transform = None
            self.pfsc_disc = None
        self.selector = Selector(in_dim, h, config.num_layers, init.fork("selector"),
                                 tau=config.tau, dropout_p=config.dropout_p)
        self.inv_gnn = GinEncoder(in_dim, h, config.num_layers, init.fork("g_inv"),
                                  config.dropout_p, config.use_virtual_node)
        self.inv_head = Linear(h, n_classes, init.fork("g_inv_head"))
        self.env_gnn = GinEncoder(in_dim, h, config.num_layers, init.fork("g_env"),
                                  config.dropout_p, config.use_virtual_node)
        self.env_head = Linear(h, n_envs, init.fork("g_env_head"))
        self.label_gnn = GinEncoder(in_dim, h, config.num_layers, init.fork("g_label"),
                                    config.dropout_p, config.use_virtual_node)
        self.label_head = Linear(h, n_classes, init.fork("g_label_head"))

    # -- parameter bookkeeping ------------------------------------------------

    def param_groups(self) -> dict[str, list[tuple[str, Tensor]]]:
        groups = {
            "pfsc_t": self.pfsc_transform.params("pfsc_t") if self.use_pfsc else [],
            "pfsc_fe": self.pfsc_disc.params("pfsc_fe") if self.use_pfsc else [],
            "selector": self.selector.params("selector"),
            "g_inv": self.inv_gnn.params("g_inv") + self.inv_head.params("g_inv.head"),
            "g_env": self.env_gnn.params("g_env") + self.env_head.params("g_env.head"),
            "g_label": (self.label_gnn.params("g_label")
                        + self.label_head.params("g_label.head")),
        }
        return groups

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for params in self.param_groups().values():
            out.extend(params)
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    # -- forward pieces ---------------------------------------------------------

    def purify(self, x: Tensor) -> Tensor:
        """Environment-free node features X' = X + MLP_T(X)."""
        if not self.use_pfsc:
            return x
        return T.add(x, self.pfsc_transform(x))

    def pfsc_loss(self, b: Batch, x_pure: Tensor, lam: float) -> Tensor:
        """phi_FE descends; phi_T ascends through the reversed features."""
        node_logits = self.pfsc_disc(T.grad_reverse(x_pure, lam))
        node_logp = T.log_softmax(node_logits)
        pooled = T.segment_mean(node_logp, b.node_graph_id, b.num_graphs)
        return T.nll_loss(pooled, b.env)

    def inv_loss(self, b: Batch, x_pure: Tensor, w_c: Tensor, train: bool,
                 rng: Rng | None) -> Tensor:
        h = self.inv_gnn.encode(b, w_c, train, rng, x=x_pure)
        logits = self.inv_head(graph_readout(h, b))
        return T.nll_loss(T.log_softmax(logits), b.y)

    def env_loss(self, b: Batch, x_pure: Tensor, w_c: Tensor, lam: float,
                 train: bool, rng: Rng | None) -> Tensor:
        # detached features: the discriminator influences the purifier and the
        # selector only through the reversed edge-weight path
        h = self.env_gnn.encode(b, T.grad_reverse(w_c, lam), train, rng,
                                x=x_pure.detach())
        logits = self.env_head(graph_readout(h, b))
        return T.nll_loss(T.log_softmax(logits), b.env)

    def label_loss(self, b: Batch, x_pure: Tensor, w_s: Tensor, lam: float,
                   train: bool, rng: Rng | None) -> Tensor:
        h = self.label_gnn.encode(b, T.grad_reverse(w_s, lam), train, rng,
                                  x=x_pure.detach())
        logits = self.label_head(graph_readout(h, b))
        return T.nll_loss(T.log_softmax(logits), b.y)

    def forward_losses(self, b: Batch, lambdas: tuple[float, float, float],
                       train: bool, rng: Rng | None) -> dict[str, Tensor]:
        lam_L, lam_E, lam_P = lambdas
        x = Tensor(b.x)
        x_pure = self.purify(x)
        w_c, w_s = self.selector.select(
            b, rng=rng.fork("selector") if rng else None, train=train, x=x_pure)
        out = {
            "inv": self.inv_loss(b, x_pure, w_c, train,
                                 rng.fork("inv") if rng else None),
            "E": self.env_loss(b, x_pure, w_c, lam_E, train,
                               rng.fork("env") if rng else None),
            "L": self.label_loss(b, x_pure, w_s, lam_L, train,
                                 rng.fork("label") if rng else None),
        }
        if self.use_pfsc:
            out["PFSC"] = self.pfsc_loss(b, x_pure, lam_P)
        if self.config.info_r is not None:
            out["info"] = T.mul(info_regularizer(w_c, self.config.info_r),
                                self.config.info_weight)
        out["_w_c"] = w_c
        out["_w_s"] = w_s
        out["_x_pure"] = x_pure
        return out

    # -- evaluation -------------------------------------------------------------

    def eval_views(self, b: Batch) -> tuple[Tensor, Tensor, Tensor]:
        """Deterministic (X', w_C, w_S) with no sampling noise or dropout."""
        x_pure = self.purify(Tensor(b.x))
        w_c, w_s = self.selector.select(b, train=False, x=x_pure)
        return x_pure, w_c, w_s

    def predict_logits(self, b: Batch) -> np.ndarray:
        x_pure, w_c, _ = self.eval_views(b)
        h = self.inv_gnn.encode(b, w_c, train=False, x=x_pure)
        return self.inv_head(graph_readout(h, b)).data

    def disc_predictions(self, b: Batch) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode argmax of the env disc on w_C and label disc on w_S."""
        x_pure, w_c, w_s = self.eval_views(b)
        xd = x_pure.detach()
        h_e = self.env_gnn.encode(b, w_c, train=False, x=xd)
        env_pred = self.env_head(graph_readout(h_e, b)).data.argmax(axis=1)
        h_l = self.label_gnn.encode(b, w_s, train=False, x=xd)
        label_pred = self.label_head(graph_readout(h_l, b)).data.argmax(axis=1)
        return env_pred, label_pred

    def pfsc_probe_accuracy(self, graphs: list[Graph],
                            eval_batch_size: int = 256) -> float:
        """Accuracy of the frozen phi_FE on purified features."""
        if not self.use_pfsc:
            raise ConfigError("model was built without the feature purifier")
        hits = total = 0
        for chunk in _chunks(graphs, eval_batch_size):
            b = make_batch(chunk)
            x_pure = self.purify(Tensor(b.x))
            node_logp = T.log_softmax(self.pfsc_disc(x_pure))
            pooled = T.segment_mean(node_logp, b.node_graph_id, b.num_graphs)
            hits += int((pooled.data.argmax(axis=1) == b.env).sum())
            total += b.num_graphs
        return hits / total

    def checkpoint_meta(self) -> dict:
        return {
            "method": "leci",
            "in_dim": self.in_dim,
            "n_classes": self.n_classes,
            "n_envs": self.n_envs,
            "hidden_dim": self.config.hidden_dim,
            "num_layers": self.config.num_layers,
            "dropout_p": self.config.dropout_p,
            "use_virtual_node": self.config.use_virtual_node,
            "use_pfsc": self.use_pfsc,
            "tau": self.config.tau,
        }


class ErmModel:
    """Plain GIN encoder plus linear classifier over full graphs."""

    def __init__(self, in_dim: int, n_classes: int, config: TrainConfig, rng: Rng):
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.config = config
        init = rng.fork("init")
        self.gnn = GinEncoder(in_dim, config.hidden_dim, config.num_layers,
                              init.fork("erm"), config.dropout_p,
                              config.use_virtual_node)
        self.head = Linear(config.hidden_dim, n_classes, init.fork("erm_head"))

    def named_params(self):
        return self.gnn.params("erm") + self.head.params("erm.head")

    def parameters(self):
        return [t for _, t in self.named_params()]

    def loss(self, b: Batch, train: bool, rng: Rng | None) -> Tensor:
        w = Tensor(np.ones(b.num_edges))
        h = self.gnn.encode(b, w, train, rng)
        logits = self.head(graph_readout(h, b))
        return T.nll_loss(T.log_softmax(logits), b.y)

    def predict_logits(self, b: Batch) -> np.ndarray:
        w = Tensor(np.ones(b.num_edges))
        h = self.gnn.encode(b, w, train=False)
        return self.head(graph_readout(h, b)).data

    def checkpoint_meta(self) -> dict:
        return {
            "method": "erm",
            "in_dim": self.in_dim,
            "n_classes": self.n_classes,
            "hidden_dim": self.config.hidden_dim,
            "num_layers": self.config.num_layers,
            "dropout_p": self.config.dropout_p,
            "use_virtual_node": self.config.use_virtual_node,
        }


# ---------------------------------------------------------------------------
# standalone loss entry points (used heavily by the gradient test suite)


def loss_inv(model: LeciModel, b: Batch, train: bool = False,
             rng: Rng | None = None) -> Tensor:
    x_pure = model.purify(Tensor(b.x))
    w_c, _ = model.selector.select(b, rng=rng.fork("selector") if rng else None,
                                   train=train, x=x_pure)
    return model.inv_loss(b, x_pure, w_c, train, rng.fork("inv") if rng else None)


def loss_EA(model: LeciModel, b: Batch, lambda_E: float, train: bool = False,
            rng: Rng | None = None) -> Tensor:
    if model.n_envs < 2:
        raise ConfigError("EA requires >=2 environments")
    x_pure = model.purify(Tensor(b.x))
    w_c, _ = model.selector.select(b, rng=rng.fork("selector") if rng else None,
                                   train=train, x=x_pure)
    return model.env_loss(b, x_pure, w_c, lambda_E, train,
                          rng.fork("env") if rng else None)


def loss_LA(model: LeciModel, b: Batch, lambda_L: float, train: bool = False,
            rng: Rng | None = None) -> Tensor:
    x_pure = model.purify(Tensor(b.x))
    _, w_s = model.selector.select(b, rng=rng.fork("selector") if rng else None,
                                   train=train, x=x_pure)
    return model.label_loss(b, x_pure, w_s, lambda_L, train,
                            rng.fork("label") if rng else None)


def loss_PFSC(model: LeciModel, b: Batch,
              lambda_PFSC: float) -> tuple[Tensor, Tensor]:
    x_pure = model.purify(Tensor(b.x))
    return model.pfsc_loss(b, x_pure, lambda_PFSC), x_pure


# ---------------------------------------------------------------------------
# training loops


def _chunks(items, size):
    for i in range(0, len(items), size):
        yield items[i:i + size]


def _accuracy(predict_logits, graphs, eval_batch_size) -> float:
    hits = 0
    for chunk in _chunks(graphs, eval_batch_size):
        b = make_batch(chunk)
        hits += int((predict_logits(b).argmax(axis=1) == b.y).sum())
    return hits / len(graphs)


def _check_finite(value: float, term: str, epoch: int):
    if not math.isfinite(value):
        raise NumericError(term, epoch)


def _epoch_batches(graphs, batch_size, rng_epoch):
    order = rng_epoch.fork("shuffle").permutation(len(graphs))
    return [make_batch([graphs[j] for j in idx])
            for idx in _chunks(order, batch_size)]


def train(split: DatasetSplit, config: TrainConfig,
          log_hook=None) -> tuple[LeciModel, list[EpochLog]]:
    """Joint adversarial training; returns the model snapshot at the epoch
    with the best OOD-validation accuracy, plus the full per-epoch log."""
    if not split.train:
        raise ConfigError("empty training split")
    envs = sorted({g.env for g in split.train})
    if len(envs) < 2:
        raise ConfigError("EA requires >=2 environments")
    n_envs = max(envs) + 1
    n_classes = max(g.y for g in split.train) + 1
    in_dim = split.train[0].x.shape[1]
    rng = Rng(config.seed)
    model = LeciModel(in_dim, n_classes, n_envs, config, rng)
    opt = Adam(model.parameters(), config.lr, config.weight_decay)
    disc_params = [t for name in ("g_env", "g_label")
                   for _, t in model.param_groups()[name]]
    disc_opt = Adam(disc_params, config.lr, config.weight_decay) \
        if config.strict_alternation else None

    logs: list[EpochLog] = []
    best_acc, best_state = -1.0, {n: t.data.copy() for n, t in model.named_params()}
    train_eval = split.train[:_TRAIN_EVAL_CAP]

    for epoch in range(config.epochs):
        lambdas = ramp(epoch, config)
        ep_rng = rng.fork("epoch").fork(epoch)
        batches = _epoch_batches(split.train, config.batch_size, ep_rng)

        if config.strict_alternation:
            _train_discs_to_convergence(model, batches, lambdas, disc_opt,
                                        ep_rng, epoch)

        sums = {"inv": 0.0, "E": 0.0, "L": 0.0, "PFSC": 0.0}
        for bi, b in enumerate(batches):
            br = ep_rng.fork("batch").fork(bi)
            losses = model.forward_losses(b, lambdas, train=True, rng=br)
            total = losses["inv"]
            for term in ("E", "L", "PFSC", "info"):
                if term in losses:
                    total = T.add(total, losses[term])
            for term in ("inv", "E", "L", "PFSC"):
                if term in losses:
                    value = losses[term].item()
                    _check_finite(value, term, epoch)
                    sums[term] += value
            opt.zero_grad()
            T.backward(total)
            opt.step()

        nb = len(batches)
        env_acc, label_acc, acc_tr = _eval_train_metrics(model, train_eval,
                                                         config.eval_batch_size)
        log = EpochLog(
            epoch=epoch,
            lambda_L=lambdas[0], lambda_E=lambdas[1], lambda_PFSC=lambdas[2],
            loss_inv=sums["inv"] / nb,
            loss_E=sums["E"] / nb,
            loss_L=sums["L"] / nb,
            loss_PFSC=sums["PFSC"] / nb if model.use_pfsc else None,
            env_disc_acc_on_GC=env_acc,
            label_disc_acc_on_GS=label_acc,
            acc_train=acc_tr,
            acc_id_val=_accuracy(model.predict_logits, split.id_val,
                                 config.eval_batch_size) if split.id_val else 0.0,
            acc_ood_val=_accuracy(model.predict_logits, split.ood_val,
                                  config.eval_batch_size) if split.ood_val else 0.0,
            acc_ood_test=_accuracy(model.predict_logits, split.ood_test,
                                   config.eval_batch_size) if split.ood_test else 0.0,
        )
        logs.append(log)
        if log_hook is not None:
            log_hook(log)
        if log.acc_ood_val > best_acc:
            best_acc = log.acc_ood_val
            best_state = {n: t.data.copy() for n, t in model.named_params()}

    for name, t in model.named_params():
        t.data = best_state[name]
    return model, logs


def _eval_train_metrics(model: LeciModel, graphs, eval_batch_size):
    env_hits = label_hits = acc_hits = total = 0
    for chunk in _chunks(graphs, eval_batch_size):
        b = make_batch(chunk)
        env_pred, label_pred = model.disc_predictions(b)
        env_hits += int((env_pred == b.env).sum())
        label_hits += int((label_pred == b.y).sum())
        acc_hits += int((model.predict_logits(b).argmax(axis=1) == b.y).sum())
        total += b.num_graphs
    return env_hits / total, label_hits / total, acc_hits / total


def _train_discs_to_convergence(model, batches, lambdas, disc_opt, ep_rng,
                                epoch, max_inner: int = 25, tol: float = 1e-3,
                                patience: int = 5):
    """First-implementation inner loop: fit both discriminators on the frozen
    selector until their combined loss stops moving."""
    history: list[float] = []
    for inner in range(max_inner):
        total_val = 0.0
        for bi, b in enumerate(batches):
            br = ep_rng.fork("disc_inner").fork(inner).fork(bi)
            losses = model.forward_losses(b, lambdas, train=True, rng=br)
            total = T.add(losses["E"], losses["L"])
            disc_opt.zero_grad()
            T.backward(total)
            disc_opt.step()
            total_val += total.item()
        history.append(total_val / len(batches))
        _check_finite(history[-1], "disc_inner", epoch)
        if len(history) > patience and all(
                abs(history[-k - 1] - history[-k - 2]) < tol
                for k in range(patience)):
            break


def train_erm(split: DatasetSplit, config: TrainConfig,
              architecture: str = "gin",
              log_hook=None):
    """ERM control arm.  ``architecture='gin'`` is the plain baseline;
    ``architecture='selector'`` trains the selector stack on the invariant
    loss alone (the lambda-zero reference trajectory)."""
    if not split.train:
        raise ConfigError("empty training split")
    n_classes = max(g.y for g in split.train) + 1
    in_dim = split.train[0].x.shape[1]
    rng = Rng(config.seed)
    if architecture == "gin":
        model = ErmModel(in_dim, n_classes, config, rng)
        params = model.parameters()

        def step_loss(b, br):
            return model.loss(b, train=True, rng=br.fork("erm"))
    elif architecture == "selector":
        n_envs = max((g.env for g in split.train), default=0) + 1
        model = LeciModel(in_dim, n_classes, max(n_envs, 2), config, rng)
        params = [t for name in ("pfsc_t", "selector", "g_inv")
                  for _, t in model.param_groups()[name]]

        def step_loss(b, br):
            return loss_inv(model, b, train=True, rng=br)
    else:
        raise ConfigError(f"unknown ERM architecture {architecture!r}")

    opt = Adam(params, config.lr, config.weight_decay)
    logs: list[EpochLog] = []
    best_acc = -1.0
    best_state = {n: t.data.copy() for n, t in model.named_params()}
    train_eval = split.train[:_TRAIN_EVAL_CAP]

    for epoch in range(config.epochs):
        ep_rng = rng.fork("epoch").fork(epoch)
        batches = _epoch_batches(split.train, config.batch_size, ep_rng)
        loss_sum = 0.0
        for bi, b in enumerate(batches):
            br = ep_rng.fork("batch").fork(bi)
            loss = step_loss(b, br)
            value = loss.item()
            _check_finite(value, "inv", epoch)
            loss_sum += value
            opt.zero_grad()
            T.backward(loss)
            opt.step()
        log = EpochLog(
            epoch=epoch, lambda_L=0.0, lambda_E=0.0, lambda_PFSC=0.0,
            loss_inv=loss_sum / len(batches),
            loss_E=None, loss_L=None, loss_PFSC=None,
            env_disc_acc_on_GC=None, label_disc_acc_on_GS=None,
            acc_train=_accuracy(model.predict_logits, train_eval,
                                config.eval_batch_size),
            acc_id_val=_accuracy(model.predict_logits, split.id_val,
                                 config.eval_batch_size) if split.id_val else 0.0,
            acc_ood_val=_accuracy(model.predict_logits, split.ood_val,
                                  config.eval_batch_size) if split.ood_val else 0.0,
            acc_ood_test=_accuracy(model.predict_logits, split.ood_test,
                                   config.eval_batch_size) if split.ood_test else 0.0,
        )
        logs.append(log)
        if log_hook is not None:
            log_hook(log)
        if log.acc_ood_val > best_acc:
            best_acc = log.acc_ood_val
            best_state = {n: t.data.copy() for n, t in model.named_params()}

    for name, t in model.named_params():
        t.data = best_state[name]
    return model, logs


def save_checkpoint(path, model):
    save_params(path, model.named_params(), meta=model.checkpoint_meta())
