"""Experiment configuration: YAML schema and validation.

One structured YAML file drives every CLI command. Top-level keys:

    dataset:            {synthetic: {...SyntheticSpec...}} or {csv: path}
    personalization:    users, available_contexts, unseen_contexts, eval_holdout
    model:              layer_dims
    train_generic:      TrainConfig fields
    conventional:       TrainConfig fields
    crop:               train_initial / prune / train_final /
                        iterative_passes / keep_stage_snapshots
    seeds:              list of integers
    metric:             accuracy | balanced_accuracy | f1_binary
    output_dir:         directory for models, curves, reports, diagnostics

Per-seed runs override every TrainConfig's ``seed`` with the run seed.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from .data import ContextTransform, LabeledDataset, SyntheticSpec, generate, load_csv
from .errors import UsageError
from .metrics import MetricKind
from .pipeline import CropConfig
from .pruning import PruneConfig
from .training import TrainConfig


@dataclass(frozen=True)
class PersonalizationPlan:
    users: tuple[str, ...]
    available_contexts: tuple[str, ...]
    unseen_contexts: tuple[str, ...]
    eval_holdout: float = 0.3

    def __post_init__(self):
        if not self.users:
            raise UsageError("personalization.users must be nonempty")
        if not self.available_contexts or not self.unseen_contexts:
            raise UsageError("both available and unseen contexts must be listed")
        overlap = set(self.available_contexts) & set(self.unseen_contexts)
        if overlap:
            raise UsageError(f"contexts assigned as both available and unseen: {sorted(overlap)}")
        if not 0.0 < self.eval_holdout < 1.0:
            raise UsageError("eval_holdout must be in (0,1)")

    @property
    def contexts(self) -> list[str]:
        return list(self.available_contexts) + list(self.unseen_contexts)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticSpec | str
    plan: PersonalizationPlan
    layer_dims: tuple[int, ...]
    train_generic: TrainConfig
    conventional: TrainConfig
    crop: CropConfig
    seeds: tuple[int, ...]
    metric: MetricKind
    output_dir: Path

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise UsageError("model.layer_dims needs at least input and output sizes")
        if not self.seeds:
            raise UsageError("seeds must be nonempty")

    def load_dataset(self) -> LabeledDataset:
        if isinstance(self.dataset, SyntheticSpec):
            data = generate(self.dataset)
        else:
            data = load_csv(self.dataset, num_classes=self.layer_dims[-1])
        self.validate_against(data)
        return data

    def generic_users(self, data: LabeledDataset) -> list[str]:
        return [u for u in data.users if u not in set(self.plan.users)]

    def validate_against(self, data: LabeledDataset) -> None:
        missing = [u for u in self.plan.users if u not in set(data.users)]
        if missing:
            raise UsageError(f"personalization users not in dataset: {missing}")
        known = set(data.contexts)
        bad = [c for c in self.plan.contexts if c not in known]
        if bad:
            raise UsageError(f"contexts not in dataset: {bad}")
        if data.dim != self.layer_dims[0]:
            raise UsageError(
                f"model expects {self.layer_dims[0]} features, dataset has {data.dim}"
            )
        if data.num_classes != self.layer_dims[-1]:
            raise UsageError(
                f"model emits {self.layer_dims[-1]} classes, dataset has {data.num_classes}"
            )
        if not self.generic_users(data):
            raise UsageError("no users left for generic training")


def _build(cls, payload, where):
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise UsageError(f"{where}: expected a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise UsageError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**payload)
    except TypeError as exc:
        raise UsageError(f"{where}: {exc}") from exc


def _dataset_from(payload):
    if not isinstance(payload, dict) or len(payload) != 1:
        raise UsageError("dataset: expected exactly one of 'synthetic' or 'csv'")
    if "csv" in payload:
        return str(payload["csv"])
    if "synthetic" not in payload:
        raise UsageError("dataset: expected 'synthetic' or 'csv'")
    spec = dict(payload["synthetic"])
    raw_contexts = spec.pop("contexts", None)
    if raw_contexts is not None:
        spec["contexts"] = tuple(
            _build(ContextTransform, c, f"dataset.synthetic.contexts[{i}]")
            for i, c in enumerate(raw_contexts)
        )
    return _build(SyntheticSpec, spec, "dataset.synthetic")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise UsageError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    known = {
        "dataset", "personalization", "model", "train_generic", "conventional",
        "crop", "seeds", "metric", "output_dir",
    }
    unknown = set(doc) - known
    if unknown:
        raise UsageError(f"{path}: unknown top-level keys {sorted(unknown)}")
    missing = known - set(doc)
    if missing:
        raise UsageError(f"{path}: missing keys {sorted(missing)}")

    plan_payload = dict(doc["personalization"])
    for key in ("users", "available_contexts", "unseen_contexts"):
        if key in plan_payload:
            plan_payload[key] = tuple(str(v) for v in plan_payload[key])
    plan = _build(PersonalizationPlan, plan_payload, "personalization")

    model_payload = doc["model"] or {}
    if set(model_payload) != {"layer_dims"}:
        raise UsageError("model: expected exactly the key 'layer_dims'")
    layer_dims = tuple(int(v) for v in model_payload["layer_dims"])

    crop_payload = dict(doc["crop"] or {})
    crop_kwargs = {
        "train_initial": _build(TrainConfig, crop_payload.pop("train_initial", None),
                                "crop.train_initial"),
        "prune": _build(PruneConfig, crop_payload.pop("prune", None), "crop.prune"),
        "train_final": _build(TrainConfig, crop_payload.pop("train_final", None),
                              "crop.train_final"),
    }
    for key in ("iterative_passes", "keep_stage_snapshots"):
        if key in crop_payload:
            crop_kwargs[key] = crop_payload.pop(key)
    if crop_payload:
        raise UsageError(f"crop: unknown keys {sorted(crop_payload)}")

    try:
        metric = MetricKind(doc["metric"])
    except ValueError as exc:
        raise UsageError(f"metric: {exc}") from exc

    return ExperimentConfig(
        dataset=_dataset_from(doc["dataset"]),
        plan=plan,
        layer_dims=layer_dims,
        train_generic=_build(TrainConfig, doc["train_generic"], "train_generic"),
        conventional=_build(TrainConfig, doc["conventional"], "conventional"),
        crop=CropConfig(**crop_kwargs),
        seeds=tuple(int(s) for s in doc["seeds"]),
        metric=metric,
        output_dir=Path(doc["output_dir"]),
    )


def seeded(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)


def seeded_crop(cfg: CropConfig, seed: int) -> CropConfig:
    return replace(
        cfg,
        train_initial=seeded(cfg.train_initial, seed),
        train_final=seeded(cfg.train_final, seed),
    )
