"""Context-robust static personalization for dense MLP classifiers.

Public surface: model/training primitives, pruning with a tolerated-drop
search, the personalize pipeline, evaluation metrics and delta scores,
diagnostics, dataset handling, and the experiment harness behind the
``crop`` CLI.
"""

from .data import (
    ContextTransform,
    LabeledDataset,
    SyntheticSpec,
    generate,
    load_csv,
    save_csv,
    split,
    stratified_holdout,
)
from .diagnostics import fim_trace, gip, magnitude_heatmap
from .errors import NumericError, StructureError, UsageError
from .metrics import EvalReport, MetricKind, delta_g, delta_p, evaluate
from .model import GradientSet, ModelParams, forward, init_params
from .modelfile import ModelFile
from .pipeline import CropConfig, CropResult, conventional_finetune, crop_personalize, mix
from .pruning import Mask, PruneConfig, mask_of, prune, tolerated_prune
from .training import TrainConfig, backward, fit, loss_with_penalty, train

__all__ = [
    "ContextTransform",
    "CropConfig",
    "CropResult",
    "EvalReport",
    "GradientSet",
    "LabeledDataset",
    "Mask",
    "MetricKind",
    "ModelFile",
    "ModelParams",
    "NumericError",
    "PruneConfig",
    "StructureError",
    "SyntheticSpec",
    "TrainConfig",
    "UsageError",
    "backward",
    "conventional_finetune",
    "crop_personalize",
    "delta_g",
    "delta_p",
    "evaluate",
    "fim_trace",
    "fit",
    "forward",
    "generate",
    "gip",
    "init_params",
    "load_csv",
    "loss_with_penalty",
    "magnitude_heatmap",
    "mask_of",
    "mix",
    "prune",
    "save_csv",
    "split",
    "stratified_holdout",
    "tolerated_prune",
    "train",
]
