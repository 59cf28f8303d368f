"""
sas_pipeline.mlp
~~~~~~~~~~~~~~~~
Feature-only MLP classifier with hand-written backpropagation and Adam.

    x(0) = x ;  x(l) = ReLU(x(l-1) Θ(l) + b(l)) ;  logits = x(L-1) Θ(L) + b(L)
    loss = mean cross-entropy(softmax(logits), y) + γ Σ_l ‖Θ(l)‖²_F

Dropout (inverted) acts on hidden activations in training mode only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.special import log_softmax, softmax

from .dataset import UNLABELED, Dataset
from .errors import ContractError, DivergenceError, InputError
from .log_utils import get_logger
from .models import LayerBlob, MlpShape, ModelCheckpoint, TrainConfig
from .propagation import PredictionMatrix

logger = get_logger(__name__)

__all__ = [
    "MlpModel",
    "ForwardCache",
    "Gradients",
    "TrainTrace",
    "init_mlp",
    "mlp_forward",
    "cross_entropy_loss",
    "backward",
    "Adam",
    "train_mlp",
    "predict_proba",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True, eq=False)
class MlpModel:
    """weights[l] is (in_l × out_l); biases[l] is (out_l,)."""
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    hidden_dim: int
    dropout_rate: float = 0.0
    weight_decay: float = 0.0

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def out_dim(self) -> int:
        return int(self.weights[-1].shape[1])

    @property
    def shape(self) -> MlpShape:
        return MlpShape(hidden_dim=self.hidden_dim, dropout=self.dropout_rate,
                        weight_decay=self.weight_decay)

    def with_params(self, weights: Sequence[np.ndarray],
                    biases: Sequence[np.ndarray]) -> "MlpModel":
        return MlpModel(tuple(weights), tuple(biases), self.hidden_dim,
                        self.dropout_rate, self.weight_decay)

    def copy(self) -> "MlpModel":
        return self.with_params([w.copy() for w in self.weights],
                                [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (*self.weights, *self.biases))


@dataclass(frozen=True, eq=False)
class ForwardCache:
    model: MlpModel
    inputs: tuple[np.ndarray, ...]            # what each layer consumed
    preacts: tuple[np.ndarray, ...]           # hidden pre-activations
    masks: tuple[np.ndarray | None, ...]      # multiplicative dropout factors
    logits: np.ndarray
    training: bool


@dataclass(frozen=True, eq=False)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def norm(self) -> float:
        return float(np.sqrt(sum(float((g * g).sum()) for g in (*self.weights, *self.biases))))


@dataclass
class TrainTrace:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    val_accuracy: list[float | None] = field(default_factory=list)
    selection_score: list[float | None] = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "epoch": np.arange(1, self.epochs_run + 1),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "selection_score": self.selection_score,
        })
        return df


# ───────────────────────── construction ─────────────────────────────────────
def init_mlp(in_dim: int, out_dim: int, num_layers: int, hidden_dim: int = 16, *,
             dropout: float = 0.0, weight_decay: float = 0.0,
             seed: int | np.random.Generator = 0) -> MlpModel:
    """Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases."""
    if num_layers < 1:
        raise ContractError(f"an MLP needs at least one layer, got {num_layers}")
    if in_dim < 1 or out_dim < 1:
        raise ContractError(f"layer widths must be ≥ 1 (in={in_dim}, out={out_dim})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(weights), tuple(biases), hidden_dim, dropout, weight_decay)


# ───────────────────────── forward / loss / backward ────────────────────────
def mlp_forward(model: MlpModel, features: np.ndarray, training: bool = False, *,
                rng: np.random.Generator | None = None,
                masks: Sequence[np.ndarray] | None = None) -> tuple[np.ndarray, ForwardCache]:
    """
    Pre-softmax scores for a B×D batch.

    In training mode hidden activations are multiplied by dropout factors:
    either sampled from *rng* (keep / (1 − rate)) or given via *masks*,
    one multiplicative array per hidden layer.
    """
    h = np.asarray(features, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != model.in_dim:
        raise ContractError(f"features have shape {h.shape}, model expects width {model.in_dim}")
    if masks is not None and len(masks) != model.num_layers - 1:
        raise ContractError(f"expected {model.num_layers - 1} dropout masks, got {len(masks)}")
    rate = model.dropout_rate
    if training and rate > 0 and masks is None and rng is None:
        rng = np.random.default_rng(0)

    inputs, preacts, used_masks = [], [], []
    last = model.num_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(h)
        z = h @ w + b
        if l == last:
            logits = z
            break
        preacts.append(z)
        a = np.maximum(z, 0.0)
        mask = None
        if training:
            if masks is not None:
                mask = np.asarray(masks[l], dtype=np.float64)
            elif rate > 0:
                mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
            if mask is not None:
                a = a * mask
        used_masks.append(mask)
        h = a

    cache = ForwardCache(model, tuple(inputs), tuple(preacts), tuple(used_masks),
                         logits, training)
    return logits, cache


def _class_indices(labels, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim == 2:
        y = np.argmax(y, axis=1)
    y = y.astype(np.int64).reshape(-1)
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InputError(f"labels must be class indices in [0, {num_classes})")
    return y


def cross_entropy_loss(logits: np.ndarray, labels, model: MlpModel) -> float:
    """Mean softmax cross-entropy + γ · Σ‖Θ‖²_F (biases excluded)."""
    logits = np.asarray(logits, dtype=np.float64)
    y = _class_indices(labels, logits.shape[1])
    if y.size != logits.shape[0]:
        raise ContractError(f"{y.size} labels for {logits.shape[0]} rows of scores")
    nll = -log_softmax(logits, axis=1)[np.arange(y.size), y].mean()
    penalty = model.weight_decay * sum(float((w * w).sum()) for w in model.weights)
    return float(nll + penalty)


def backward(model: MlpModel, cache: ForwardCache, labels) -> Gradients:
    """Exact gradients of ``cross_entropy_loss`` for the batch in *cache*."""
    if cache.model is not model:
        raise ContractError("stale forward cache: it was produced by another model")
    if not cache.training:
        raise ContractError("backward needs a cache from a training-mode forward pass")
    logits = cache.logits
    y = _class_indices(labels, logits.shape[1])
    if y.size != logits.shape[0]:
        raise ContractError(f"{y.size} labels for {logits.shape[0]} cached rows")

    d = softmax(logits, axis=1)
    d[np.arange(y.size), y] -= 1.0
    d /= y.size

    gw: list[np.ndarray] = [None] * model.num_layers   # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * model.num_layers   # type: ignore[list-item]
    for l in range(model.num_layers - 1, -1, -1):
        w = model.weights[l]
        gw[l] = cache.inputs[l].T @ d + 2.0 * model.weight_decay * w
        gb[l] = d.sum(axis=0)
        if l == 0:
            break
        d = d @ w.T
        mask = cache.masks[l - 1]
        if mask is not None:
            d = d * mask
        d = d * (cache.preacts[l - 1] > 0)
    return Gradients(tuple(gw), tuple(gb))


# ───────────────────────── optimiser ────────────────────────────────────────
class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# ───────────────────────── training ─────────────────────────────────────────
def train_mlp(dataset: Dataset, model_init: MlpModel, config: TrainConfig, *,
              selection_fn: Callable[[MlpModel], float] | None = None
              ) -> tuple[MlpModel, TrainTrace]:
    """
    Train on the dataset's train split; returns the model with the best
    selection score (validation accuracy unless *selection_fn* is given,
    ties → earliest epoch). Without a labelled validation split and without
    *selection_fn* the final-epoch model is returned.

    Everything random (batch order, dropout) comes from ``config.seed``.
    """
    train_idx = dataset.splits.train
    if train_idx.size == 0:
        raise InputError(f"{dataset.name}: the train split is empty")
    if dataset.feature_dim != model_init.in_dim or dataset.num_classes != model_init.out_dim:
        raise ContractError(
            f"model maps {model_init.in_dim}→{model_init.out_dim}, dataset is "
            f"{dataset.feature_dim}→{dataset.num_classes}"
        )

    x, y = dataset.features, dataset.labels
    val_idx = dataset.splits.val
    has_val = val_idx.size > 0 and bool((y[val_idx] != UNLABELED).all())

    def _val_accuracy(m: MlpModel) -> float:
        logits, _ = mlp_forward(m, x[val_idx])
        return float(np.mean(np.argmax(logits, axis=1) == y[val_idx]))

    score_fn = selection_fn or (_val_accuracy if has_val else None)

    rng = np.random.default_rng(config.seed)
    weights = [w.copy() for w in model_init.weights]
    biases = [b.copy() for b in model_init.biases]
    params = [*weights, *biases]
    adam = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    n_train = train_idx.size
    batch = config.batch_size or n_train

    trace = TrainTrace()
    best_model: MlpModel | None = None
    best_score = -np.inf
    best_val_loss, stale = np.inf, 0

    logger.debug("training %d-layer MLP on %d nodes for %d epochs",
                 model_init.num_layers, n_train, config.epochs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_idx) if config.batch_size else train_idx
        total = 0.0
        for start in range(0, n_train, batch):
            idx = order[start:start + batch]
            model = model_init.with_params(weights, biases)
            logits, cache = mlp_forward(model, x[idx], training=True, rng=rng)
            loss = cross_entropy_loss(logits, y[idx], model)
            if not np.isfinite(loss):
                raise DivergenceError(epoch)
            grads = backward(model, cache, y[idx])
            adam.step(params, [*grads.weights, *grads.biases])
            if not all(np.isfinite(p).all() for p in params):
                raise DivergenceError(epoch, "non-finite weights after the optimiser step")
            total += loss * idx.size
        trace.train_loss.append(total / n_train)

        current = model_init.with_params(weights, biases)
        val_loss = None
        if has_val:
            val_logits, _ = mlp_forward(current, x[val_idx])
            val_loss = cross_entropy_loss(val_logits, y[val_idx], current)
            trace.val_accuracy.append(float(np.mean(np.argmax(val_logits, axis=1) == y[val_idx])))
        else:
            trace.val_accuracy.append(None)
        trace.val_loss.append(val_loss)

        score = score_fn(current) if score_fn is not None else None
        trace.selection_score.append(score)
        if score is not None and score > best_score:
            best_score, best_model, trace.best_epoch = score, current.copy(), epoch

        if epoch % 100 == 0:
            logger.debug("epoch %d  loss=%.5f  score=%s", epoch, trace.train_loss[-1], score)

        if config.patience is not None and val_loss is not None:
            if val_loss < best_val_loss:
                best_val_loss, stale = val_loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.debug("early stop at epoch %d (val loss flat for %d)", epoch, stale)
                    break

    if best_model is None:
        best_model = model_init.with_params(weights, biases).copy()
        trace.best_epoch = trace.epochs_run
    return best_model, trace


def predict_proba(model: MlpModel, features: np.ndarray) -> PredictionMatrix:
    """Softmax class probabilities for every row: P(0)."""
    logits, _ = mlp_forward(model, features)
    return PredictionMatrix(rows=softmax(logits, axis=1), k=0)


# ───────────────────────── checkpoints ──────────────────────────────────────
def save_checkpoint(model: MlpModel, path: Path, *, train: TrainConfig | None = None,
                    seed: int = 0) -> Path:
    """JSON checkpoint; float64 weights round-trip exactly through ``repr``."""
    ckpt = ModelCheckpoint(
        layers=[LayerBlob(shape=w.shape, weight=w.ravel().tolist(), bias=b.tolist())
                for w, b in zip(model.weights, model.biases)],
        mlp=model.shape,
        train=train,
        seed=seed,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ckpt.model_dump(mode="json"), indent=1), encoding="utf-8")
    return path


def load_checkpoint(path: Path) -> tuple[MlpModel, ModelCheckpoint]:
    ckpt = ModelCheckpoint.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))
    weights = tuple(np.asarray(b.weight, dtype=np.float64).reshape(b.shape) for b in ckpt.layers)
    biases = tuple(np.asarray(b.bias, dtype=np.float64) for b in ckpt.layers)
    for w_prev, w_next in zip(weights[:-1], weights[1:]):
        if w_prev.shape[1] != w_next.shape[0]:
            raise InputError("checkpoint layer shapes do not chain", path=path)
    model = MlpModel(weights, biases, ckpt.mlp.hidden_dim, ckpt.mlp.dropout, ckpt.mlp.weight_decay)
    return model, ckpt
