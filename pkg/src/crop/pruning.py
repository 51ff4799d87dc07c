"""Unstructured pruning: mask algebra, ranking strategies, tolerated search.

Pruning ranks all weight entries globally (across layers) and zeroes the
lowest-ranked floor(p * N); biases are never pruned. ``tolerated_prune``
walks a fraction grid k, k+k', ... and keeps the largest pruning whose
accuracy stays within ``tau`` of the unpruned model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import LabeledDataset
from .errors import UsageError
from .metrics import MetricKind, evaluate
from .model import GradientSet, ModelParams
from .training import TrainConfig, backward

STRATEGIES = ("magnitude_low", "magnitude_top", "gradient_low")


@dataclass
class Mask:
    """Binary keep/drop matrices congruent with a model's weight matrices."""

    weight_masks: list[np.ndarray]

    def __post_init__(self):
        self.weight_masks = [np.ascontiguousarray(m, dtype=np.float64) for m in self.weight_masks]
        for m in self.weight_masks:
            if not np.isin(m, (0.0, 1.0)).all():
                raise UsageError("mask entries must be 0 or 1")

    @property
    def num_entries(self) -> int:
        return sum(m.size for m in self.weight_masks)

    @property
    def num_zeros(self) -> int:
        return int(sum((m == 0.0).sum() for m in self.weight_masks))

    @property
    def prune_fraction(self) -> float:
        return self.num_zeros / self.num_entries

    def flat(self) -> np.ndarray:
        return np.concatenate([m.ravel() for m in self.weight_masks])

    def copy(self) -> "Mask":
        return Mask([m.copy() for m in self.weight_masks])

    @staticmethod
    def ones_like(model: ModelParams) -> "Mask":
        return Mask([np.ones_like(w) for w in model.weights])

    def congruent_with(self, model: ModelParams) -> bool:
        return len(self.weight_masks) == len(model.weights) and all(
            m.shape == w.shape for m, w in zip(self.weight_masks, model.weights)
        )


@dataclass(frozen=True)
class PruneConfig:
    tau: float = 0.05
    k: float = 0.05
    k_step: float = 0.05
    strategy: str = "magnitude_low"

    def __post_init__(self):
        # tau == 1 tolerates any drop; k == 1 gives a one-step grid to full pruning
        if not 0.0 < self.tau <= 1.0:
            raise UsageError("tau must be in (0,1]")
        if not 0.0 < self.k <= 1.0 or not 0.0 < self.k_step <= 1.0:
            raise UsageError("k and k_step must be in (0,1]")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"strategy must be one of {STRATEGIES}")


def _scores(model: ModelParams, strategy: str, grads: GradientSet | None) -> np.ndarray:
    if strategy == "gradient_low":
        if grads is None:
            raise UsageError("gradient_low pruning requires a GradientSet")
        return np.concatenate([np.abs(g).ravel() for g in grads.weights])
    return np.concatenate([np.abs(w).ravel() for w in model.weights])


def prune(
    model: ModelParams,
    p: float,
    strategy: str = "magnitude_low",
    grads: GradientSet | None = None,
) -> tuple[ModelParams, Mask]:
    """Zero the floor(p*N) lowest-ranked weight entries; input untouched.

    Ranking is global over all layers: |w| ascending for magnitude_low,
    |w| descending for magnitude_top, |grad| ascending for gradient_low.
    Ties break by flattened (layer, row, col) position.
    """
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"prune fraction must be in [0,1], got {p}")
    if strategy not in STRATEGIES:
        raise UsageError(f"strategy must be one of {STRATEGIES}")
    scores = _scores(model, strategy, grads)
    if strategy == "magnitude_top":
        scores = -scores
    n_zero = int(math.floor(p * scores.size + 1e-9))
    order = np.argsort(scores, kind="stable")
    flat_mask = np.ones(scores.size)
    flat_mask[order[:n_zero]] = 0.0

    masks, pruned_w = [], []
    at = 0
    for w in model.weights:
        m = flat_mask[at : at + w.size].reshape(w.shape)
        masks.append(m)
        pruned_w.append(w * m)
        at += w.size
    pruned = ModelParams(pruned_w, [b.copy() for b in model.biases])
    return pruned, Mask(masks)


def mask_of(model: ModelParams) -> Mask:
    """Mask that is 0 exactly where a weight entry is exactly 0."""
    return Mask([(w != 0.0).astype(np.float64) for w in model.weights])


def tolerated_prune(
    model: ModelParams,
    cfg: PruneConfig,
    data: LabeledDataset,
    metric: MetricKind = MetricKind.ACCURACY,
) -> tuple[ModelParams, Mask, float]:
    """Largest grid pruning whose accuracy stays >= baseline - tau.

    Walks p = k, k+k_step, ... (capped at full pruning); every candidate is
    cut from a pristine copy of the input, which for magnitude ranking is
    equivalent to re-pruning the survivor. If even p = k violates the
    tolerance the unpruned model comes back with fraction 0.
    """
    if len(data) == 0:
        raise UsageError("tolerated_prune needs a nonempty dataset")
    baseline = evaluate(model, data, metric)
    floor = baseline - cfg.tau

    grads = None
    if cfg.strategy == "gradient_low":
        grads = backward(model, data, TrainConfig(alpha=0.0, regularizer="none"))

    kept, kept_mask, kept_fraction = model.copy(), Mask.ones_like(model), 0.0
    p = cfg.k
    while p <= 1.0 + 1e-9:
        p_eff = min(p, 1.0)
        candidate, mask = prune(model, p_eff, cfg.strategy, grads)
        if evaluate(candidate, data, metric) < floor:
            break
        kept, kept_mask, kept_fraction = candidate, mask, p_eff
        p += cfg.k_step
    return kept, kept_mask, kept_fraction
