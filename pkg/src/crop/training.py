"""Loss, exact backpropagation and the deterministic SGD trainer.

The training objective is mean softmax cross-entropy plus an optional
weight-only penalty (l1 or l2, coefficient ``alpha``); biases are exempt.
The subgradient of |w| at w == 0 is taken as 0 so exact zeros stay put.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, stratified_holdout
from .errors import NumericError, UsageError
from .model import GradientSet, ModelParams, forward_cached

REGULARIZERS = ("l1", "l2", "none")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    alpha: float = 0.0
    regularizer: str = "none"
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    partial_finetune: bool = False
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise UsageError("learning_rate must be positive")
        if self.alpha < 0:
            raise UsageError("alpha must be nonnegative")
        if self.regularizer not in REGULARIZERS:
            raise UsageError(f"regularizer must be one of {REGULARIZERS}")
        if self.epochs < 0 or self.batch_size < 1:
            raise UsageError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise UsageError("validation_fraction must be in (0,1)")


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def penalty(model: ModelParams, cfg: TrainConfig) -> float:
    if cfg.regularizer == "none" or cfg.alpha == 0.0:
        return 0.0
    if cfg.regularizer == "l1":
        return cfg.alpha * sum(float(np.abs(w).sum()) for w in model.weights)
    return cfg.alpha * sum(float((w * w).sum()) for w in model.weights)


def loss_with_penalty(model: ModelParams, batch: LabeledDataset, cfg: TrainConfig) -> float:
    if len(batch) == 0:
        raise UsageError("empty batch")
    if batch.labels.max() >= model.num_classes:
        raise UsageError("label outside the model's class range")
    logits, _ = forward_cached(model, batch.features)
    return cross_entropy(logits, batch.labels) + penalty(model, cfg)


def backprop_from_logits(
    model: ModelParams, acts: list[np.ndarray], dlogits: np.ndarray
) -> GradientSet:
    """Chain an upstream logits gradient back to every parameter.

    ``acts`` must come from ``forward_cached`` on the same inputs. Shared by
    the trainer and the gradient diagnostics.
    """
    gw = [None] * model.num_layers
    gb = [None] * model.num_layers
    delta = dlogits
    for i in range(model.num_layers - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            upstream = delta @ model.weights[i]
            pre = acts[i]  # post-ReLU input to layer i == activation of layer i-1
            delta = upstream * (pre > 0)
    return GradientSet(gw, gb)


def backward(
    model: ModelParams,
    batch: LabeledDataset,
    cfg: TrainConfig,
    freeze=None,
) -> GradientSet:
    """Exact gradient of ``loss_with_penalty`` for the batch.

    ``freeze`` is a Mask; with ``cfg.partial_finetune`` its zero entries get
    gradient exactly 0.
    """
    if len(batch) == 0:
        raise UsageError("empty batch")
    if batch.labels.max() >= model.num_classes:
        raise UsageError("label outside the model's class range")
    logits, acts = forward_cached(model, batch.features)
    probs = softmax(logits)
    probs[np.arange(len(batch)), batch.labels] -= 1.0
    grads = backprop_from_logits(model, acts, probs / len(batch))
    if cfg.alpha > 0.0 and cfg.regularizer != "none":
        for gwi, w in zip(grads.weights, model.weights):
            if cfg.regularizer == "l1":
                gwi += cfg.alpha * np.sign(w)
            else:
                gwi += 2.0 * cfg.alpha * w
    if cfg.partial_finetune and freeze is not None:
        for gwi, m in zip(grads.weights, freeze.weight_masks):
            gwi *= m
    return grads


def fit(
    model: ModelParams,
    train_data: LabeledDataset,
    val_data: LabeledDataset,
    cfg: TrainConfig,
    freeze=None,
):
    """Mini-batch SGD against an explicit validation set.

    Returns (best, history) where ``best`` is the snapshot with the lowest
    validation cross-entropy (earliest epoch wins ties; the unmodified input
    model at epoch 0 is a candidate) and ``history`` holds epochs+1 tuples
    of (epoch, train objective, val cross-entropy).
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise UsageError("train and validation sets must be nonempty")
    current = model.copy()
    x_train, y_train = train_data.features, train_data.labels
    x_val, y_val = val_data.features, val_data.labels
    rng = np.random.default_rng(cfg.seed)

    def objective(m: ModelParams) -> float:
        logits, _ = forward_cached(m, x_train)
        return cross_entropy(logits, y_train) + penalty(m, cfg)

    def val_loss(m: ModelParams) -> float:
        logits, _ = forward_cached(m, x_val)
        return cross_entropy(logits, y_val)

    history = [(0, objective(current), val_loss(current))]
    best, best_val = current.copy(), history[0][2]
    n = len(train_data)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads = backward(current, train_data.subset(idx), cfg, freeze)
            for w, gw in zip(current.weights, grads.weights):
                w -= cfg.learning_rate * gw
            for b, gb in zip(current.biases, grads.biases):
                b -= cfg.learning_rate * gb
        tl, vl = objective(current), val_loss(current)
        if not (np.isfinite(tl) and np.isfinite(vl)):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        history.append((epoch, tl, vl))
        if vl < best_val:
            best, best_val = current.copy(), vl
    best.check_finite()
    return best, history


def train(
    model: ModelParams,
    data: LabeledDataset,
    cfg: TrainConfig,
    freeze=None,
):
    """Split ``data`` (stratified by class, seeded) and run ``fit``.

    The validation split is reproducible from (data, cfg) alone, which the
    personalization pipeline relies on when reusing it for pruning.
    """
    train_part, val_part = stratified_holdout(data, cfg.validation_fraction, cfg.seed)
    return fit(model, train_part, val_part, cfg, freeze)
