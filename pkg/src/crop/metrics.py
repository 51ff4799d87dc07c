"""Classification metrics and the personalization/generalization scores.

Accuracies are handled as fractions in [0, 1]; the delta scores are
reported in percent points. ``delta_p`` compares a personalized model
against the generic one, ``delta_g`` against the conventionally-finetuned
one; both sum context-wise differences per user and average over users.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import LabeledDataset
from .errors import UsageError
from .model import ModelParams, forward


class MetricKind(str, Enum):
    ACCURACY = "accuracy"
    BALANCED_ACCURACY = "balanced_accuracy"
    F1_BINARY = "f1_binary"


def predict(model: ModelParams, data: LabeledDataset) -> np.ndarray:
    return np.argmax(forward(model, data.features), axis=1)


def evaluate(model: ModelParams, data: LabeledDataset, kind: MetricKind) -> float:
    if len(data) == 0:
        raise UsageError("cannot evaluate on an empty dataset")
    kind = MetricKind(kind)
    pred = predict(model, data)
    y = data.labels
    if kind is MetricKind.ACCURACY:
        return float(np.mean(pred == y))
    if kind is MetricKind.BALANCED_ACCURACY:
        recalls = []
        for c in range(data.num_classes):
            sel = y == c
            if not sel.any():
                warnings.warn(f"class {c} absent from data, excluded from balanced accuracy")
                continue
            recalls.append(float(np.mean(pred[sel] == c)))
        return float(np.mean(recalls))
    if data.num_classes != 2:
        raise UsageError("f1_binary requires a 2-class task")
    tp = float(np.sum((pred == 1) & (y == 1)))
    fp = float(np.sum((pred == 1) & (y == 0)))
    fn = float(np.sum((pred == 0) & (y == 1)))
    if tp == 0.0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def _delta(target, reference):
    """Per-user summed context differences (percent points) and their mean."""
    if set(target) != set(reference):
        raise UsageError("user sets differ between the two accuracy tables")
    if not target:
        raise UsageError("empty accuracy table")
    per_user = {}
    for user in target:
        a, b = list(target[user]), list(reference[user])
        if len(a) != len(b):
            raise UsageError(f"user {user!r}: context sets differ")
        per_user[user] = 100.0 * float(np.sum(np.asarray(a) - np.asarray(b)))
    mean = float(np.mean(list(per_user.values())))
    return per_user, mean


def delta_p(crop_acc, generic_acc):
    """Personalization score: personalized minus generic, all contexts."""
    return _delta(crop_acc, generic_acc)


def delta_g(crop_acc, conventional_acc):
    """Generalization score: personalized minus conventionally-finetuned."""
    return _delta(crop_acc, conventional_acc)


@dataclass
class EvalRow:
    user: str
    seed: int
    state: str
    context: str
    value: float


@dataclass
class EvalReport:
    """Raw per-(user, seed, state, context) metric values plus derived deltas."""

    contexts: list[str]
    rows: list[EvalRow] = field(default_factory=list)

    def add(self, user: str, seed: int, state: str, context: str, value: float) -> None:
        self.rows.append(EvalRow(user, seed, str(state), context, float(value)))

    @property
    def users(self) -> list[str]:
        return sorted({r.user for r in self.rows})

    @property
    def seeds(self) -> list[int]:
        return sorted({r.seed for r in self.rows})

    @property
    def states(self) -> list[str]:
        return sorted({r.state for r in self.rows})

    def accuracy_table(self, state: str, seed: int):
        """{user: [value per context, report order]} for one state and seed."""
        cell = {(r.user, r.context): r.value for r in self.rows if r.state == state and r.seed == seed}
        table = {}
        for user in self.users:
            try:
                table[user] = [cell[(user, c)] for c in self.contexts]
            except KeyError as exc:
                raise UsageError(f"missing cell for user {user!r}: {exc}") from exc
        return table

    def delta_per_seed(self, target_state: str, reference_state: str):
        """{seed: (per_user, mean)} of the delta between two states."""
        out = {}
        for seed in self.seeds:
            out[seed] = _delta(
                self.accuracy_table(target_state, seed),
                self.accuracy_table(reference_state, seed),
            )
        return out

    def summary_rows(self, target_state="crop", generic_state="generic",
                     conventional_state="conventional"):
        """Per-user delta rows plus 'mean' and 'std' rows over seeds.

        Each row is (label, dp_mean, dp_std, dg_mean, dg_std) where the
        per-user statistics run over seeds, the 'mean' row is the headline
        per-seed user-average delta averaged over seeds and 'std' its
        spread across seeds.
        """
        dp = self.delta_per_seed(target_state, generic_state)
        dg = self.delta_per_seed(target_state, conventional_state)
        seeds = self.seeds
        rows = []
        for user in self.users:
            dpu = [dp[s][0][user] for s in seeds]
            dgu = [dg[s][0][user] for s in seeds]
            rows.append((user, np.mean(dpu), np.std(dpu), np.mean(dgu), np.std(dgu)))
        dp_head = [dp[s][1] for s in seeds]
        dg_head = [dg[s][1] for s in seeds]
        rows.append(("mean", np.mean(dp_head), None, np.mean(dg_head), None))
        rows.append(("std", np.std(dp_head), None, np.std(dg_head), None))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user", "seed", "state", "context", "metric_value"])
        ordered = sorted(self.rows, key=lambda r: (r.user, r.seed, r.state, r.context))
        for r in ordered:
            writer.writerow([r.user, r.seed, r.state, r.context, repr(r.value)])
        return buf.getvalue()

    def summary_csv(self, **states) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["user", "delta_p_mean", "delta_p_std", "delta_g_mean", "delta_g_std"])
        for label, dpm, dps, dgm, dgs in self.summary_rows(**states):
            writer.writerow([
                label,
                repr(float(dpm)),
                "" if dps is None else repr(float(dps)),
                repr(float(dgm)),
                "" if dgs is None else repr(float(dgs)),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, contexts=None) -> "EvalReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["user", "seed", "state", "context", "metric_value"]:
            raise UsageError(f"unexpected report header {header}")
        rows = [EvalRow(u, int(s), st, c, float(v)) for u, s, st, c, v in reader]
        if contexts is None:
            contexts = sorted({r.context for r in rows})
        return cls(contexts=list(contexts), rows=rows)
