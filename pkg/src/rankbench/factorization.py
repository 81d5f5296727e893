"""Gradient-trained latent-factor recommenders: MF and FM.

Both models train on implicit feedback with swappable pieces:

* losses      pairwise log (BPR), hinge, top-1; pointwise cross-entropy
* initializers  uniform(0, a), normal(0, sigma^2), Xavier uniform/normal
* optimizers  gd / sgd / mbsgd, AdaGrad, RMSProp, Adam
* regularization  L2 plus optional L1 subgradient, applied to the
  parameter rows each example touches
* early stopping  on a holdout's NDCG, restoring the best epoch snapshot

MF scores with a plain dot product of user and item factors; FM adds
global/user/item bias terms (with one-hot user+item inputs the second-order
FM score reduces to exactly that form).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy.special import expit

from ._util import derived_rng
from .metrics import evaluate_all
from .recommenders import Recommender
from .sampling import PopularityTable, SamplerConfig, sample_negatives
from .splitting import SplitBundle

PAIR_LOSSES = ("bpr_log", "hinge", "top1")
POINT_LOSSES = ("ce",)
OPTIMIZERS = ("gd", "sgd", "mbsgd", "adagrad", "rmsprop", "adam")
INITIALIZERS = ("uniform", "normal", "xavier_uniform", "xavier_normal")

_CE_CLAMP = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when training produces a non-finite loss or score."""


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "bpr_log"
    optimizer: str = "sgd"
    learning_rate: float = 0.05
    batch_size: int = 256
    l1_reg: float = 0.0
    l2_reg: float = 0.0
    initializer: str = "normal"
    init_scale: Optional[float] = None      # a for uniform, sigma for normal
    num_factors: int = 16
    negatives_per_positive: Optional[int] = None  # default: 1 pairwise, 4 pointwise
    epochs_max: int = 200
    early_stop_patience: int = 5
    eval_cutoff: int = 10
    dense_regularization: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.loss not in PAIR_LOSSES + POINT_LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.initializer not in INITIALIZERS:
            raise ValueError(f"unknown initializer {self.initializer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l1_reg < 0 or self.l2_reg < 0:
            raise ValueError("regularization weights must be >= 0")
        if self.num_factors < 1:
            raise ValueError("num_factors must be >= 1")
        if self.epochs_max < 1:
            raise ValueError("epochs_max must be >= 1")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience must be >= 0")

    @property
    def objective_style(self) -> str:
        return "point" if self.loss in POINT_LOSSES else "pair"

    @property
    def effective_negatives(self) -> int:
        if self.negatives_per_positive is not None:
            return self.negatives_per_positive
        return 4 if self.objective_style == "point" else 1


@dataclass
class TrainTrace:
    """Per-epoch record of training loss and holdout metric."""

    epochs: List[Dict] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""
    metric_name: str = "val_ndcg10"

    def append(self, epoch: int, loss: float, val_metric: Optional[float]) -> None:
        self.epochs.append({"epoch": epoch, "loss": loss, self.metric_name: val_metric})

    def to_jsonl(self) -> str:
        import json

        return "\n".join(json.dumps(row, sort_keys=True) for row in self.epochs) + "\n"


def initialize_embeddings(rows: int, dim: int, kind: str,
                          scale: Optional[float], rng: np.random.Generator) -> np.ndarray:
    """Draw an embedding table; Xavier variants use n_in = n_out = dim."""
    if kind == "uniform":
        return rng.uniform(0.0, 1.0 if scale is None else scale, size=(rows, dim))
    if kind == "normal":
        return rng.normal(0.0, 0.01 if scale is None else scale, size=(rows, dim))
    if kind == "xavier_uniform":
        bound = np.sqrt(6.0) / np.sqrt(dim + dim)
        return rng.uniform(-bound, bound, size=(rows, dim))
    if kind == "xavier_normal":
        return rng.normal(0.0, np.sqrt(2.0 / (dim + dim)), size=(rows, dim))
    raise ValueError(f"unknown initializer {kind!r}")


def pair_loss_and_grad(kind: str, pos_scores, neg_scores):
    """Pairwise loss values and gradients w.r.t. the two raw scores.

    Returns (loss, d/d pos_score, d/d neg_score), all elementwise. The
    top-1 loss carries an extra sigmoid(neg^2) term, so unlike the other
    two it is not invariant to shifting both scores.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    diff = pos - neg
    if kind == "bpr_log":
        sig = expit(diff)
        loss = np.logaddexp(0.0, -diff)     # -log sigmoid(diff), stable
        d_diff = sig - 1.0
        return loss, d_diff, -d_diff
    if kind == "hinge":
        loss = np.maximum(0.0, 1.0 - diff)
        d_diff = np.where(diff < 1.0, -1.0, 0.0)
        return loss, d_diff, -d_diff
    if kind == "top1":
        sig_rank = expit(-diff)
        sig_sq = expit(neg ** 2)
        loss = sig_rank + sig_sq
        d_diff = -sig_rank * (1.0 - sig_rank)
        d_neg_extra = 2.0 * neg * sig_sq * (1.0 - sig_sq)
        return loss, d_diff, -d_diff + d_neg_extra
    raise ValueError(f"unknown pairwise loss {kind!r}")


def point_loss_and_grad(kind: str, scores, labels):
    """Pointwise loss values and gradient w.r.t. the raw score."""
    if kind != "ce":
        raise ValueError(f"unknown pointwise loss {kind!r}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    prob = expit(scores)
    clamped = np.clip(prob, _CE_CLAMP, 1.0 - _CE_CLAMP)
    loss = -(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))
    return loss, prob - labels


class GradientOptimizer:
    """Parameter updates with per-tensor state and sparse-row semantics.

    gd / sgd / mbsgd share the plain step theta -= lr * g and differ only in
    how the trainer batches examples. The adaptive rules keep their moment
    estimates in full-size slots but only read and write the touched rows;
    Adam's bias-correction step count advances once per call.
    """

    def __init__(self, kind: str, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999,
                 decay: float = 0.9, epsilon: float = 1e-8):
        if kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.decay = decay
        self.epsilon = epsilon
        self._slots: Dict[str, Dict[str, np.ndarray]] = {}
        self._steps: Dict[str, int] = {}

    def _slot(self, name: str, shape, slot_name: str) -> np.ndarray:
        per_param = self._slots.setdefault(name, {})
        if slot_name not in per_param:
            per_param[slot_name] = np.zeros(shape)
        return per_param[slot_name]

    def step(self, name: str, param: np.ndarray, grad: np.ndarray, rows=None) -> None:
        """Update ``param`` in place; ``rows=None`` means a dense update."""
        lr = self.learning_rate
        view = slice(None) if rows is None else rows
        if self.kind in ("gd", "sgd", "mbsgd"):
            param[view] -= lr * grad
            return
        if self.kind == "adagrad":
            accum = self._slot(name, param.shape, "accum")
            accum[view] += grad ** 2
            param[view] -= lr * grad / (np.sqrt(accum[view]) + self.epsilon)
            return
        if self.kind == "rmsprop":
            accum = self._slot(name, param.shape, "accum")
            accum[view] = self.decay * accum[view] + (1.0 - self.decay) * grad ** 2
            param[view] -= lr * grad / (np.sqrt(accum[view]) + self.epsilon)
            return
        # adam
        m = self._slot(name, param.shape, "m")
        v = self._slot(name, param.shape, "v")
        self._steps[name] = self._steps.get(name, 0) + 1
        t = self._steps[name]
        m[view] = self.beta1 * m[view] + (1.0 - self.beta1) * grad
        v[view] = self.beta2 * v[view] + (1.0 - self.beta2) * grad ** 2
        m_hat = m[view] / (1.0 - self.beta1 ** t)
        v_hat = v[view] / (1.0 - self.beta2 ** t)
        param[view] -= lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


class MFModel(Recommender):
    """Matrix factorization without bias terms (classic pairwise-ranking MF)."""

    kind = "mf"

    def __init__(self, user_factors: np.ndarray, item_factors: np.ndarray):
        self.user_factors = np.asarray(user_factors, dtype=np.float64)
        self.item_factors = np.asarray(item_factors, dtype=np.float64)

    def score_items(self, user, items):
        return self.item_factors[items] @ self.user_factors[user]


class FMModel(Recommender):
    """Factorization machine over one-hot user+item inputs: biases + interaction."""

    kind = "fm"

    def __init__(self, user_factors, item_factors, user_bias, item_bias, global_bias):
        self.user_factors = np.asarray(user_factors, dtype=np.float64)
        self.item_factors = np.asarray(item_factors, dtype=np.float64)
        self.user_bias = np.asarray(user_bias, dtype=np.float64)
        self.item_bias = np.asarray(item_bias, dtype=np.float64)
        self.global_bias = float(global_bias)

    def score_items(self, user, items):
        interaction = self.item_factors[items] @ self.user_factors[user]
        return self.global_bias + self.user_bias[user] + self.item_bias[items] + interaction


class _MFCore:
    """Trainable MF parameters and their per-example gradient contributions."""

    param_names = ("user_factors", "item_factors")

    def __init__(self, n_users: int, n_items: int, config: TrainConfig,
                 rng: np.random.Generator):
        dim = config.num_factors
        self.params = {
            "user_factors": initialize_embeddings(
                n_users, dim, config.initializer, config.init_scale, rng),
            "item_factors": initialize_embeddings(
                n_items, dim, config.initializer, config.init_scale, rng),
        }

    def scores(self, users, items):
        p = self.params["user_factors"][users]
        q = self.params["item_factors"][items]
        return np.einsum("ij,ij->i", p, q)

    def contributions(self, users, items, coeffs):
        """Rows and gradients of sum(coeff * score) for each parameter."""
        p = self.params["user_factors"][users]
        q = self.params["item_factors"][items]
        c = coeffs[:, None]
        return [
            ("user_factors", users, c * q),
            ("item_factors", items, c * p),
        ]

    def snapshot(self):
        return {name: arr.copy() for name, arr in self.params.items()}

    def restore(self, snap):
        self.params = {name: arr.copy() for name, arr in snap.items()}

    def model(self) -> MFModel:
        return MFModel(self.params["user_factors"], self.params["item_factors"])


class _FMCore:
    """Trainable FM parameters: factors plus global/user/item biases."""

    param_names = ("user_factors", "item_factors", "user_bias", "item_bias",
                   "global_bias")

    def __init__(self, n_users: int, n_items: int, config: TrainConfig,
                 rng: np.random.Generator):
        dim = config.num_factors
        self.params = {
            "user_factors": initialize_embeddings(
                n_users, dim, config.initializer, config.init_scale, rng),
            "item_factors": initialize_embeddings(
                n_items, dim, config.initializer, config.init_scale, rng),
            "user_bias": np.zeros(n_users),
            "item_bias": np.zeros(n_items),
            "global_bias": np.zeros(1),
        }

    def scores(self, users, items):
        p = self.params["user_factors"][users]
        q = self.params["item_factors"][items]
        return (self.params["global_bias"][0]
                + self.params["user_bias"][users]
                + self.params["item_bias"][items]
                + np.einsum("ij,ij->i", p, q))

    def contributions(self, users, items, coeffs):
        p = self.params["user_factors"][users]
        q = self.params["item_factors"][items]
        c = coeffs[:, None]
        zero_rows = np.zeros(len(users), dtype=np.int64)
        return [
            ("user_factors", users, c * q),
            ("item_factors", items, c * p),
            ("user_bias", users, coeffs),
            ("item_bias", items, coeffs),
            ("global_bias", zero_rows, coeffs),
        ]

    def snapshot(self):
        return {name: arr.copy() for name, arr in self.params.items()}

    def restore(self, snap):
        self.params = {name: arr.copy() for name, arr in snap.items()}

    def model(self) -> FMModel:
        return FMModel(
            self.params["user_factors"], self.params["item_factors"],
            self.params["user_bias"], self.params["item_bias"],
            self.params["global_bias"][0],
        )


def _apply_contributions(core, optimizer: GradientOptimizer, config: TrainConfig,
                         contribs, n_examples: int) -> None:
    """Mean the batch gradients per parameter row, add regularization, step."""
    merged: Dict[str, List] = {}
    for name, rows, grads in contribs:
        merged.setdefault(name, []).append((rows, grads))
    for name, pieces in merged.items():
        rows = np.concatenate([r for r, _ in pieces])
        grads = np.concatenate([g for _, g in pieces])
        uniq, inverse = np.unique(rows, return_inverse=True)
        acc = np.zeros((len(uniq),) + grads.shape[1:])
        np.add.at(acc, inverse, grads)
        acc /= n_examples
        param = core.params[name]
        if config.dense_regularization:
            full = np.zeros_like(param)
            full[uniq] = acc
            full += config.l2_reg * param
            if config.l1_reg > 0:
                full += config.l1_reg * np.sign(param)
            optimizer.step(name, param, full, rows=None)
        else:
            acc += config.l2_reg * param[uniq]
            if config.l1_reg > 0:
                acc += config.l1_reg * np.sign(param[uniq])
            optimizer.step(name, param, acc, rows=uniq)


def _positives(train):
    mask = train.values > 0
    return train.users[mask], train.items[mask]


def _positive_sets(users, items, n_users: int):
    sets = [set() for _ in range(n_users)]
    for user, item in zip(users, items):
        sets[user].add(int(item))
    return sets


def _epoch_negatives(users, table, sampler_config, positive_sets, n_per_pos,
                     rng) -> np.ndarray:
    """One draw per (positive occurrence, slot), grouped per user.

    Grouping lets hybrid samplers split a user's whole epoch budget between
    the uniform and popularity halves even when n_per_pos is 1.
    """
    negatives = np.empty((len(users), n_per_pos), dtype=np.int64)
    for user in np.unique(users):
        positions = np.nonzero(users == user)[0]
        draws = sample_negatives(
            positive_sets[user], len(positions) * n_per_pos, table, sampler_config, rng
        )
        negatives[positions] = draws.reshape(len(positions), n_per_pos)
    return negatives


def _batch_spans(total: int, batch_size: int):
    for start in range(0, total, batch_size):
        yield start, min(start + batch_size, total)


def _train(core, bundle: SplitBundle, sampler_config: SamplerConfig,
           config: TrainConfig):
    train = bundle.train
    if len(train) == 0:
        raise ValueError("empty training set")
    pos_users, pos_items = _positives(train)
    if len(pos_users) == 0:
        raise ValueError("training set has no positive interactions")
    positive_sets = _positive_sets(pos_users, pos_items, train.n_users)
    table = PopularityTable.from_log(train, sampler_config.popularity_exponent)
    optimizer = GradientOptimizer(config.optimizer, config.learning_rate)
    n_per_pos = config.effective_negatives
    pairwise = config.objective_style == "pair"

    holdout_users = bool(bundle.candidates) and len(bundle.test) > 0
    cutoff = config.eval_cutoff
    trace = TrainTrace(metric_name=f"val_ndcg{cutoff}")

    if config.optimizer == "gd":
        batch_size = len(pos_users) * (n_per_pos if pairwise else 1 + n_per_pos)
    elif config.optimizer == "sgd":
        batch_size = 1
    else:
        batch_size = config.batch_size

    best_metric = -np.inf
    best_snapshot = core.snapshot()
    bad_epochs = 0
    stop_reason = "max_epochs"

    for epoch in range(config.epochs_max):
        rng = derived_rng(config.seed, "epoch", epoch)
        order = rng.permutation(len(pos_users))
        users = pos_users[order]
        items = pos_items[order]
        negatives = _epoch_negatives(
            users, table, sampler_config, positive_sets, n_per_pos, rng
        )

        if pairwise:
            batch_users = np.repeat(users, n_per_pos)
            batch_pos = np.repeat(items, n_per_pos)
            batch_neg = negatives.reshape(-1)
            loss_sum = 0.0
            for start, stop in _batch_spans(len(batch_users), batch_size):
                u = batch_users[start:stop]
                i = batch_pos[start:stop]
                j = batch_neg[start:stop]
                loss, d_pos, d_neg = pair_loss_and_grad(
                    config.loss, core.scores(u, i), core.scores(u, j)
                )
                batch_loss = loss.sum()
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                loss_sum += batch_loss
                contribs = (core.contributions(u, i, d_pos)
                            + core.contributions(u, j, d_neg))
                _apply_contributions(core, optimizer, config, contribs, stop - start)
            mean_loss = loss_sum / len(batch_users)
        else:
            width = 1 + n_per_pos
            batch_users = np.repeat(users, width)
            batch_items = np.concatenate(
                [items[:, None], negatives], axis=1
            ).reshape(-1)
            labels = np.tile(
                np.concatenate([[1.0], np.zeros(n_per_pos)]), len(users)
            )
            loss_sum = 0.0
            for start, stop in _batch_spans(len(batch_users), batch_size):
                u = batch_users[start:stop]
                i = batch_items[start:stop]
                y = labels[start:stop]
                loss, d_score = point_loss_and_grad(config.loss, core.scores(u, i), y)
                batch_loss = loss.sum()
                if not np.isfinite(batch_loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
                loss_sum += batch_loss
                _apply_contributions(
                    core, optimizer, config,
                    core.contributions(u, i, d_score), stop - start,
                )
            mean_loss = loss_sum / len(batch_users)

        val_metric = None
        if holdout_users:
            reports = evaluate_all(core.model(), bundle, [cutoff])
            val_metric = reports[cutoff]["ndcg"]
            if not np.isfinite(val_metric):
                raise TrainingDiverged(f"non-finite validation metric at epoch {epoch}")
        trace.append(epoch, float(mean_loss), val_metric)

        if holdout_users:
            if val_metric > best_metric:
                best_metric = val_metric
                trace.best_epoch = epoch
                best_snapshot = core.snapshot()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > config.early_stop_patience:
                    stop_reason = "early_stop"
                    break

    if holdout_users:
        core.restore(best_snapshot)
    else:
        trace.best_epoch = len(trace.epochs) - 1
    trace.stop_reason = stop_reason
    return core.model(), trace


def train_mf(bundle: SplitBundle, sampler_config: SamplerConfig,
             config: TrainConfig):
    """Train MF on ``bundle.train``; the bundle's test slice (if any) is the
    early-stopping holdout, and the returned model is the best-epoch snapshot."""
    rng = derived_rng(config.seed, "init")
    core = _MFCore(bundle.train.n_users, bundle.train.n_items, config, rng)
    return _train(core, bundle, sampler_config, config)


def train_fm(bundle: SplitBundle, sampler_config: SamplerConfig,
             config: TrainConfig):
    """Train FM (biases + pairwise interaction); same loop as :func:`train_mf`."""
    rng = derived_rng(config.seed, "init")
    core = _FMCore(bundle.train.n_users, bundle.train.n_items, config, rng)
    return _train(core, bundle, sampler_config, config)


def config_from_params(base: TrainConfig, params: Dict) -> TrainConfig:
    """Overlay a hyper-parameter dict (e.g. a search trial) onto a config."""
    known = {f for f in TrainConfig.__dataclass_fields__}
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"unknown training parameters: {sorted(unknown)}")
    return replace(base, **params)
