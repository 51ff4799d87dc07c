"""The default synthetic benchmark: one place for its spec and configs.

Three personal users, two contexts (identity vs. rotated-and-shifted), a
6-d 3-class problem and a [6, 12, 3] MLP. The hyperparameters are a
desk-scale profile: the full generate/train/personalize/evaluate/diagnose
cycle over three seeds runs in well under a minute on one CPU core.
"""

from __future__ import annotations

from pathlib import Path

from .config import ExperimentConfig, PersonalizationPlan
from .data import ContextTransform, SyntheticSpec
from .metrics import MetricKind
from .pipeline import CropConfig
from .pruning import PruneConfig
from .training import TrainConfig

BENCHMARK_SEEDS = (0, 1, 2)
LAYER_DIMS = (6, 12, 3)


def benchmark_spec() -> SyntheticSpec:
    return SyntheticSpec(
        num_generic_users=6,
        num_personal_users=3,
        num_classes=3,
        dim=6,
        jitter_scale=0.8,
        contexts=(
            ContextTransform(rotation=0.0, bias_scale=0.0),
            ContextTransform(rotation=1.1, bias_scale=1.2),
        ),
        noise_sigma=0.55,
        samples_per_class=40,
        seed=11,
    )


def benchmark_plan() -> PersonalizationPlan:
    return PersonalizationPlan(
        users=("p0", "p1", "p2"),
        available_contexts=("C1",),
        unseen_contexts=("C2",),
        eval_holdout=0.3,
    )


def generic_train_config() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=200, batch_size=32, seed=0)


def conventional_train_config() -> TrainConfig:
    return TrainConfig(learning_rate=0.05, epochs=250, batch_size=16, seed=0)


def crop_config() -> CropConfig:
    initial = TrainConfig(
        learning_rate=0.05, alpha=0.01, regularizer="l1", epochs=250, batch_size=16, seed=0
    )
    final = TrainConfig(
        learning_rate=0.05, alpha=0.01, regularizer="l1", epochs=80, batch_size=16, seed=0
    )
    return CropConfig(
        train_initial=initial,
        prune=PruneConfig(tau=0.05, k=0.05, k_step=0.05, strategy="magnitude_low"),
        train_final=final,
        iterative_passes=1,
        keep_stage_snapshots=True,
    )


def benchmark_config(output_dir) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=benchmark_spec(),
        plan=benchmark_plan(),
        layer_dims=LAYER_DIMS,
        train_generic=generic_train_config(),
        conventional=conventional_train_config(),
        crop=crop_config(),
        seeds=BENCHMARK_SEEDS,
        metric=MetricKind.ACCURACY,
        output_dir=Path(output_dir),
    )
