"""End-to-end personalization pipeline and the conventional baseline.

``crop_personalize`` runs: regularized finetune on the available-context
data, tolerated pruning against the finetune's validation split, mixing
generic weights into the pruned slots, and a final finetune in which the
mixed model itself competes for best validation loss. The conventional
baseline is plain unregularized finetuning of the generic model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import LabeledDataset, stratified_holdout
from .errors import StructureError, UsageError
from .metrics import MetricKind
from .model import ModelParams
from .pruning import Mask, PruneConfig, tolerated_prune
from .training import TrainConfig, train

MAX_PASSES = 10


@dataclass(frozen=True)
class CropConfig:
    train_initial: TrainConfig
    prune: PruneConfig
    train_final: TrainConfig
    iterative_passes: int = 1
    keep_stage_snapshots: bool = True

    def __post_init__(self):
        if not 1 <= self.iterative_passes <= MAX_PASSES:
            raise UsageError(f"iterative_passes must be in 1..{MAX_PASSES}")


@dataclass
class CropResult:
    """Final model plus the named intermediate states of the last pass."""

    final: ModelParams
    stages: dict[str, ModelParams]
    mask: Mask
    prune_fraction: float
    histories: dict[str, list]

    STAGE_ORDER = ("generic", "finetuned", "pruned", "mixed", "final")


def mix(pruned: ModelParams, generic: ModelParams, mask: Mask) -> ModelParams:
    """Pruned weights where mask==1, generic weights elsewhere; pruned biases."""
    if not pruned.same_shape(generic):
        raise StructureError("pruned and generic models have different shapes")
    if not mask.congruent_with(pruned):
        raise StructureError("mask is not congruent with the models")
    weights = [
        np.where(m == 1.0, wp, wg)
        for m, wp, wg in zip(mask.weight_masks, pruned.weights, generic.weights)
    ]
    return ModelParams(weights, [b.copy() for b in pruned.biases])


def conventional_finetune(
    generic: ModelParams, data: LabeledDataset, cfg: TrainConfig
) -> ModelParams:
    """Plain finetuning baseline: no weight penalty, best-validation snapshot."""
    plain = replace(cfg, alpha=0.0, regularizer="none", partial_finetune=False)
    best, _ = train(generic, data, plain)
    return best


def crop_personalize(
    generic: ModelParams,
    data_available: LabeledDataset,
    cfg: CropConfig,
    metric: MetricKind = MetricKind.ACCURACY,
) -> CropResult:
    """Personalize ``generic`` using only available-context data.

    With ``iterative_passes > 1`` the prune/mix/finetune block repeats on
    the previous pass's output; the initial regularized finetune happens
    once. Stage snapshots and histories describe the last pass.
    """
    if len(data_available) == 0:
        raise UsageError("no available-context data supplied")

    histories: dict[str, list] = {}
    finetuned, hist = train(generic, data_available, cfg.train_initial)
    histories["initial"] = hist

    # pruning is scored on the initial finetune's validation split, which is
    # reproducible from (data, config) alone
    _, prune_data = stratified_holdout(
        data_available, cfg.train_initial.validation_fraction, cfg.train_initial.seed
    )

    current = finetuned
    pruned = mixed = final = None
    mask = Mask.ones_like(generic)
    fraction = 0.0
    for pass_index in range(cfg.iterative_passes):
        pruned, mask, fraction = tolerated_prune(current, cfg.prune, prune_data, metric)
        mixed = mix(pruned, generic, mask)
        freeze = mask if cfg.train_final.partial_finetune else None
        final, hist_final = train(mixed, data_available, cfg.train_final, freeze)
        histories["final" if pass_index == 0 else f"final_pass{pass_index + 1}"] = hist_final
        current = final

    stages = {
        "generic": generic.copy(),
        "finetuned": finetuned,
        "pruned": pruned,
        "mixed": mixed,
        "final": final,
    }
    return CropResult(
        final=final,
        stages=stages,
        mask=mask,
        prune_fraction=fraction,
        histories=histories,
    )
