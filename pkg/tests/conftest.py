"""Shared fixtures: small models, blob data, and the benchmark runs.

The benchmark fixture trains everything the acceptance criteria inspect
(generic models, conventional baselines, personalization runs per pruning
strategy) once per session; with fixed seeds all downstream numbers are
deterministic.
"""

from dataclasses import replace

import numpy as np
import pytest

from crop.benchmark import (
    BENCHMARK_SEEDS,
    LAYER_DIMS,
    benchmark_plan,
    benchmark_spec,
    conventional_train_config,
    crop_config,
    generic_train_config,
)
from crop.config import seeded, seeded_crop
from crop.data import LabeledDataset, generate
from crop.diagnostics import gip
from crop.harness import generic_split, personal_datasets
from crop.metrics import MetricKind, evaluate
from crop.model import ModelParams, init_params
from crop.pipeline import conventional_finetune, crop_personalize
from crop.training import fit

ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


def record_acceptance(index: int, name: str, passed: bool) -> None:
    ACCEPTANCE_RESULTS.append((index, name, passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for index, name, passed in sorted(ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[criterion {index:02d}] {name}: {verdict}")


def random_model(rng: np.random.Generator, dims=None, low=0.05, high=1.0) -> ModelParams:
    """Random model with |w| bounded away from zero (finite differences of
    the l1 term are exact only away from its kink)."""
    if dims is None:
        n_layers = int(rng.integers(1, 4))
        dims = [int(rng.integers(2, 9))]
        for _ in range(n_layers):
            dims.append(int(rng.integers(2, 17)))
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        mag = rng.uniform(low, high, size=(fan_out, fan_in))
        sign = rng.choice([-1.0, 1.0], size=(fan_out, fan_in))
        weights.append(mag * sign)
        biases.append(rng.normal(0.0, 0.3, size=fan_out))
    return ModelParams(weights, biases)


def random_batch(rng: np.random.Generator, model: ModelParams, n=8) -> LabeledDataset:
    x = rng.normal(size=(n, model.input_dim))
    y = rng.integers(0, model.num_classes, size=n)
    k = min(n, model.num_classes)
    y[:k] = np.arange(k)
    return LabeledDataset(["u"] * n, ["c"] * n, y, x, num_classes=model.num_classes)


def blob_dataset(seed=0, n_per_class=60, num_classes=2, dim=4, sep=4.0, sigma=0.6):
    """Linearly separable Gaussian blobs."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(num_classes, dim))
    centers = sep * centers / np.linalg.norm(centers, axis=1, keepdims=True)
    xs, ys = [], []
    for c in range(num_classes):
        xs.append(centers[c] + sigma * rng.normal(size=(n_per_class, dim)))
        ys.extend([c] * n_per_class)
    x = np.vstack(xs)
    return LabeledDataset(["u"] * len(ys), ["c"] * len(ys), ys, x, num_classes=num_classes)


class BenchmarkRuns:
    """Everything the acceptance criteria need, computed once."""

    def __init__(self, strategies=("magnitude_low",)):
        import time

        t0 = time.perf_counter()
        self.spec = benchmark_spec()
        self.plan = benchmark_plan()
        self.data = generate(self.spec)
        self.metric = MetricKind.ACCURACY
        self.seeds = BENCHMARK_SEEDS
        self.users = self.plan.users
        gen_users = [u for u in self.data.users if u not in set(self.users)]

        self.generic = {}
        self.records = {}
        gcfg = generic_train_config()
        ccfg = conventional_train_config()
        base = crop_config()
        for seed in self.seeds:
            tr, va = generic_split(self.data, gen_users, gcfg.validation_fraction, seed)
            gmodel, _ = fit(init_params(list(LAYER_DIMS), seed), tr, va, seeded(gcfg, seed))
            self.generic[seed] = gmodel
            for user in self.users:
                train_data, eval_sets = personal_datasets(self.data, self.plan, user, seed)
                rec = {
                    "train_data": train_data,
                    "eval_sets": eval_sets,
                    "generic_acc": self._accs(gmodel, eval_sets),
                }
                conv = conventional_finetune(gmodel, train_data, seeded(ccfg, seed))
                rec["conventional"] = conv
                rec["conventional_acc"] = self._accs(conv, eval_sets)
                for strategy in strategies:
                    cfg = replace(base, prune=replace(base.prune, strategy=strategy))
                    result = crop_personalize(
                        gmodel, train_data, seeded_crop(cfg, seed), self.metric
                    )
                    rec[strategy] = result
                    rec[f"{strategy}_acc"] = self._accs(result.final, eval_sets)
                self.records[(seed, user)] = rec
        self.build_seconds = time.perf_counter() - t0

    def _accs(self, model, eval_sets):
        return {ctx: evaluate(model, ds, self.metric) for ctx, ds in eval_sets.items()}

    def stage_acc(self, seed, user, stage, ctx):
        rec = self.records[(seed, user)]
        return evaluate(rec["magnitude_low"].stages[stage], rec["eval_sets"][ctx], self.metric)

    def context_domains(self, user):
        ca = self.data.filter(user_id=user, context_id=list(self.plan.available_contexts))
        cu = self.data.filter(user_id=user, context_id=list(self.plan.unseen_contexts))
        return [ca, cu]

    def stage_gip(self, seed, user, stage):
        rec = self.records[(seed, user)]
        return gip(rec["magnitude_low"].stages[stage], self.context_domains(user))

    def seed_mean(self, fn):
        """Mean over seeds of the user-average of fn(record)."""
        per_seed = [
            np.mean([fn(self.records[(seed, user)]) for user in self.users])
            for seed in self.seeds
        ]
        return float(np.mean(per_seed))


@pytest.fixture(scope="session")
def bench():
    return BenchmarkRuns()


@pytest.fixture(scope="session")
def bench_ablations(bench):
    """Extra personalization runs for the alternative pruning strategies."""
    extra = {}
    base = crop_config()
    for strategy in ("gradient_low", "magnitude_top"):
        cfg = replace(base, prune=replace(base.prune, strategy=strategy))
        for seed in bench.seeds:
            for user in bench.users:
                rec = bench.records[(seed, user)]
                result = crop_personalize(
                    bench.generic[seed], rec["train_data"], seeded_crop(cfg, seed), bench.metric
                )
                extra[(strategy, seed, user)] = {
                    ctx: evaluate(result.final, ds, bench.metric)
                    for ctx, ds in rec["eval_sets"].items()
                }
    return extra
