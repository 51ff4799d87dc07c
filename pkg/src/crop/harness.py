"""Command implementations behind the CLI.

Every command is a pure function of (config, seed): rerunning with the same
inputs rewrites byte-identical model files and CSVs. Wall-clock timing and
progress go to the logger only, never into result files.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, seeded, seeded_crop
from .data import LabeledDataset, split
from .diagnostics import fim_trace, gip, magnitude_heatmap
from .errors import UsageError
from .metrics import EvalReport, evaluate
from .model import ModelParams, init_params
from .modelfile import ModelFile
from .pipeline import conventional_finetune, crop_personalize
from .training import fit

log = logging.getLogger("crop")

STAGE_STATES = {"finetuned": "crop_finetuned", "pruned": "crop_pruned", "mixed": "crop_mixed"}
GIP_STAGES = (("finetuned", 2), ("pruned", 3), ("mixed", 4), ("crop", 5))


def models_dir(cfg) -> Path:
    return Path(cfg.output_dir) / "models"


def curves_dir(cfg) -> Path:
    return Path(cfg.output_dir) / "curves"


def reports_dir(cfg) -> Path:
    return Path(cfg.output_dir) / "reports"


def diagnostics_dir(cfg) -> Path:
    return Path(cfg.output_dir) / "diagnostics"


def generic_model_path(cfg, seed: int) -> Path:
    return models_dir(cfg) / f"generic_s{seed}.cropmdl"


def personal_model_path(cfg, user: str, seed: int, state: str) -> Path:
    return models_dir(cfg) / f"{user}_s{seed}_{state}.cropmdl"


def _write_history_csv(path: Path, history) -> None:
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{e},{repr(tl)},{repr(vl)}" for e, tl, vl in history]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _thread_count(n_jobs: int) -> int:
    raw = os.environ.get("CROP_THREADS", "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise UsageError(f"CROP_THREADS must be an integer, got {raw!r}") from exc
        if cap < 1:
            raise UsageError("CROP_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def generic_split(data: LabeledDataset, generic_users, fraction: float, seed: int):
    """Person-disjoint train/validation pools over the generic users."""
    users = sorted(generic_users)
    if len(users) < 2:
        raise UsageError("need at least two generic users for a person-disjoint validation")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(users))
    n_val = max(1, round(fraction * len(users)))
    if n_val >= len(users):
        n_val = len(users) - 1
    val_users = {users[i] for i in order[:n_val]}
    train_users = [u for u in users if u not in val_users]
    return data.filter(user_id=train_users), data.filter(user_id=sorted(val_users))


def personal_datasets(data: LabeledDataset, plan, user: str, seed: int):
    """(personalization train set, {context: evaluation set}) for one user.

    Each available context is split stratified-by-class with the run seed;
    the holdout part is kept for evaluation only. Unseen contexts are
    evaluation-only in full.
    """
    eval_sets = {}
    train_parts = []
    for ctx in plan.available_contexts:
        rows = data.filter(user_id=user, context_id=ctx)
        if len(rows) == 0:
            raise UsageError(f"user {user!r} has no rows in available context {ctx!r}")
        tr, ev = split(rows, (1.0 - plan.eval_holdout, plan.eval_holdout), "label", seed)
        train_parts.append(tr)
        eval_sets[ctx] = ev
    for ctx in plan.unseen_contexts:
        rows = data.filter(user_id=user, context_id=ctx)
        if len(rows) == 0:
            raise UsageError(f"user {user!r} has no rows in unseen context {ctx!r}")
        eval_sets[ctx] = rows
    train = train_parts[0]
    for part in train_parts[1:]:
        train = train.concat(part)
    return train, eval_sets


def _load_generic(cfg, seed: int) -> ModelParams:
    path = generic_model_path(cfg, seed)
    if not path.exists():
        raise UsageError(f"generic model missing: {path} (run train-generic first)")
    return ModelFile.load(path).model


def run_train_generic(cfg: ExperimentConfig, seeds=None) -> list[Path]:
    data = cfg.load_dataset()
    seeds = list(cfg.seeds if seeds is None else seeds)
    models_dir(cfg).mkdir(parents=True, exist_ok=True)
    curves_dir(cfg).mkdir(parents=True, exist_ok=True)
    out = []
    for seed in seeds:
        t0 = time.perf_counter()
        tcfg = seeded(cfg.train_generic, seed)
        train_pool, val_pool = generic_split(
            data, cfg.generic_users(data), tcfg.validation_fraction, seed
        )
        model = init_params(list(cfg.layer_dims), seed)
        best, history = fit(model, train_pool, val_pool, tcfg)
        path = generic_model_path(cfg, seed)
        meta = json.dumps({"role": "generic", "seed": seed}, sort_keys=True)
        ModelFile(best, cfg.metric, metadata=meta).save(path)
        _write_history_csv(curves_dir(cfg) / f"generic_s{seed}.csv", history)
        log.info("train-generic seed=%d done in %.2fs -> %s", seed, time.perf_counter() - t0, path)
        out.append(path)
    return out


def run_personalize(
    cfg: ExperimentConfig,
    method: str,
    seeds=None,
    variant: str | None = None,
    strategy: str | None = None,
    regularizer: str | None = None,
    iterative_passes: int | None = None,
    partial_finetune: bool | None = None,
) -> list[Path]:
    if method not in ("conventional", "crop"):
        raise UsageError(f"method must be 'conventional' or 'crop', got {method!r}")
    data = cfg.load_dataset()
    seeds = list(cfg.seeds if seeds is None else seeds)
    state = variant or method
    models_dir(cfg).mkdir(parents=True, exist_ok=True)
    curves_dir(cfg).mkdir(parents=True, exist_ok=True)

    crop_cfg = cfg.crop
    if strategy is not None:
        crop_cfg = replace(crop_cfg, prune=replace(crop_cfg.prune, strategy=strategy))
    if regularizer is not None:
        crop_cfg = replace(
            crop_cfg,
            train_initial=replace(crop_cfg.train_initial, regularizer=regularizer),
            train_final=replace(crop_cfg.train_final, regularizer=regularizer),
        )
    if iterative_passes is not None:
        crop_cfg = replace(crop_cfg, iterative_passes=iterative_passes)
    if partial_finetune is not None:
        crop_cfg = replace(
            crop_cfg, train_final=replace(crop_cfg.train_final, partial_finetune=partial_finetune)
        )

    jobs = [(user, seed) for user in cfg.plan.users for seed in seeds]
    for seed in seeds:
        _load_generic(cfg, seed)  # fail fast before fanning out

    def one(job):
        user, seed = job
        t0 = time.perf_counter()
        generic = _load_generic(cfg, seed)
        train_data, _ = personal_datasets(data, cfg.plan, user, seed)
        written = []
        meta = json.dumps({"role": state, "seed": seed, "user": user}, sort_keys=True)
        if method == "conventional":
            model = conventional_finetune(generic, train_data, seeded(cfg.conventional, seed))
            path = personal_model_path(cfg, user, seed, state)
            ModelFile(model, cfg.metric, metadata=meta).save(path)
            written.append(path)
        else:
            result = crop_personalize(generic, train_data, seeded_crop(crop_cfg, seed), cfg.metric)
            path = personal_model_path(cfg, user, seed, state)
            ModelFile(result.final, cfg.metric, mask=result.mask, metadata=meta).save(path)
            written.append(path)
            if crop_cfg.keep_stage_snapshots:
                for stage, stage_state in STAGE_STATES.items():
                    spath = personal_model_path(
                        cfg, user, seed, stage_state if state == "crop" else f"{state}_{stage}"
                    )
                    smeta = json.dumps(
                        {"role": stage_state, "seed": seed, "user": user}, sort_keys=True
                    )
                    ModelFile(result.stages[stage], cfg.metric, metadata=smeta).save(spath)
                    written.append(spath)
            for name, history in result.histories.items():
                _write_history_csv(curves_dir(cfg) / f"{user}_s{seed}_{state}_{name}.csv", history)
        log.info(
            "personalize %s user=%s seed=%d done in %.2fs", state, user, seed,
            time.perf_counter() - t0,
        )
        return written

    n_threads = _thread_count(len(jobs))
    if n_threads == 1:
        results = [one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, jobs))
    return [p for chunk in results for p in chunk]


def _discover_states(cfg, seeds) -> list[str]:
    """Personal-model states present for every (user, seed) pair."""
    common = None
    for user in cfg.plan.users:
        for seed in seeds:
            prefix = f"{user}_s{seed}_"
            found = {
                p.stem[len(prefix):]
                for p in models_dir(cfg).glob(f"{prefix}*.cropmdl")
            }
            common = found if common is None else common & found
    return sorted(common or set())


def run_evaluate(cfg: ExperimentConfig, seeds=None):
    data = cfg.load_dataset()
    seeds = list(cfg.seeds if seeds is None else seeds)
    states = _discover_states(cfg, seeds)
    for required in ("conventional", "crop"):
        if required not in states:
            raise UsageError(
                f"state {required!r} missing for some (user, seed); run personalize first"
            )
    report = EvalReport(contexts=cfg.plan.contexts)
    for seed in seeds:
        generic = _load_generic(cfg, seed)
        for user in cfg.plan.users:
            _, eval_sets = personal_datasets(data, cfg.plan, user, seed)
            stack = [("generic", generic)]
            stack += [
                (s, ModelFile.load(personal_model_path(cfg, user, seed, s)).model)
                for s in states
            ]
            for state, model in stack:
                for ctx in cfg.plan.contexts:
                    report.add(user, seed, state, ctx,
                               evaluate(model, eval_sets[ctx], cfg.metric))
    reports_dir(cfg).mkdir(parents=True, exist_ok=True)
    eval_path = reports_dir(cfg) / "evaluation.csv"
    summary_path = reports_dir(cfg) / "summary.csv"
    eval_path.write_text(report.to_csv(), encoding="utf-8")
    summary_path.write_text(report.summary_csv(), encoding="utf-8")
    log.info("evaluation written to %s and %s", eval_path, summary_path)
    return report, [eval_path, summary_path]


def run_diagnose(cfg: ExperimentConfig, seeds=None, layer_index: int | None = None):
    data = cfg.load_dataset()
    seeds = list(cfg.seeds if seeds is None else seeds)
    diagnostics_dir(cfg).mkdir(parents=True, exist_ok=True)

    gip_lines = ["user,seed,stage,step,value"]
    fim_lines = ["user,seed,state,context,value"]
    written = []
    for seed in seeds:
        generic = _load_generic(cfg, seed)
        for user in cfg.plan.users:
            available = data.filter(user_id=user, context_id=list(cfg.plan.available_contexts))
            unseen = data.filter(user_id=user, context_id=list(cfg.plan.unseen_contexts))
            domains = [available, unseen]

            stage_models = {}
            for stage, step in GIP_STAGES:
                state = STAGE_STATES.get(stage, stage)
                path = personal_model_path(cfg, user, seed, state)
                if not path.exists():
                    raise UsageError(
                        f"stage snapshot missing: {path} "
                        "(personalize with keep_stage_snapshots: true)"
                    )
                stage_models[stage] = ModelFile.load(path).model
            for stage, step in GIP_STAGES:
                value = gip(stage_models[stage], domains)
                gip_lines.append(f"{user},{seed},{stage},{step},{repr(value)}")

            conventional = ModelFile.load(
                personal_model_path(cfg, user, seed, "conventional")
            ).model
            fim_models = {
                "generic": generic,
                "conventional": conventional,
                "crop": stage_models["crop"],
            }
            for state, model in fim_models.items():
                for ctx in cfg.plan.contexts:
                    value = fim_trace(model, data.filter(user_id=user, context_id=ctx))
                    fim_lines.append(f"{user},{seed},{state},{ctx},{repr(value)}")

            layer = max(0, len(cfg.layer_dims) - 3) if layer_index is None else layer_index
            for state, model in (("conventional", conventional), ("crop", stage_models["crop"])):
                grid = magnitude_heatmap(model, layer)
                hpath = diagnostics_dir(cfg) / f"heatmap_{user}_s{seed}_{state}_l{layer}.csv"
                hpath.write_text(
                    "\n".join(",".join(repr(v) for v in row) for row in grid) + "\n",
                    encoding="utf-8",
                )
                written.append(hpath)

    gip_path = diagnostics_dir(cfg) / "gip.csv"
    fim_path = diagnostics_dir(cfg) / "fim.csv"
    gip_path.write_text("\n".join(gip_lines) + "\n", encoding="utf-8")
    fim_path.write_text("\n".join(fim_lines) + "\n", encoding="utf-8")
    log.info("diagnostics written to %s", diagnostics_dir(cfg))
    return [gip_path, fim_path] + written
