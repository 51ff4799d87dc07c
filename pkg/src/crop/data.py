"""Dataset container, CSV ingestion, splitting, and the synthetic generator.

The CSV schema is ``user_id,context_id,label,f0,...,f{D-1}`` (UTF-8, header
mandatory, floats in plain decimal). The synthetic generator manufactures a
multi-user, multi-context classification problem in which each context sees
the shared class geometry through its own orthogonal transform and bias, so
a classifier fit to one context is deliberately suboptimal in the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError, UsageError


class LabeledDataset:
    """Rows of (user_id, context_id, label, feature vector).

    Instances are immutable in practice: all derived views (``filter``,
    ``subset``) copy into a fresh instance of the same class, which lets
    tests substitute access-logging subclasses.
    """

    def __init__(self, user_ids, context_ids, labels, features, num_classes=None):
        self._user_ids = np.asarray(user_ids, dtype=object)
        self._context_ids = np.asarray(context_ids, dtype=object)
        self._labels = np.asarray(labels, dtype=np.int64)
        self._features = np.ascontiguousarray(features, dtype=np.float64)
        n = len(self._labels)
        if self._features.ndim != 2 or self._features.shape[0] != n:
            raise StructureError("features must be a (n_rows, D) matrix")
        if len(self._user_ids) != n or len(self._context_ids) != n:
            raise StructureError("column lengths differ")
        if n and self._labels.min() < 0:
            raise UsageError("labels must be nonnegative")
        inferred = int(self._labels.max()) + 1 if n else 0
        self.num_classes = int(num_classes) if num_classes is not None else inferred
        if n and inferred > self.num_classes:
            raise UsageError(f"label {self._labels.max()} outside num_classes={self.num_classes}")

    def __len__(self) -> int:
        return len(self._labels)

    @property
    def features(self) -> np.ndarray:
        return self._features

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    @property
    def user_ids(self) -> np.ndarray:
        return self._user_ids

    @property
    def context_ids(self) -> np.ndarray:
        return self._context_ids

    @property
    def dim(self) -> int:
        return self._features.shape[1]

    @property
    def users(self) -> list[str]:
        return sorted(set(self._user_ids.tolist()))

    @property
    def contexts(self) -> list[str]:
        return sorted(set(self._context_ids.tolist()))

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return type(self)(
            self._user_ids[idx],
            self._context_ids[idx],
            self._labels[idx],
            self._features[idx],
            num_classes=self.num_classes,
        )

    def filter(self, user_id=None, context_id=None) -> "LabeledDataset":
        """Rows matching the given user and/or context (either may be a list)."""
        keep = np.ones(len(self), dtype=bool)
        if user_id is not None:
            wanted = {user_id} if isinstance(user_id, str) else set(user_id)
            keep &= np.array([u in wanted for u in self._user_ids], dtype=bool)
        if context_id is not None:
            wanted = {context_id} if isinstance(context_id, str) else set(context_id)
            keep &= np.array([c in wanted for c in self._context_ids], dtype=bool)
        return self.subset(np.flatnonzero(keep))

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        if other.dim != self.dim:
            raise StructureError("feature dimensions differ")
        return type(self)(
            np.concatenate([self._user_ids, other._user_ids]),
            np.concatenate([self._context_ids, other._context_ids]),
            np.concatenate([self._labels, other._labels]),
            np.vstack([self._features, other._features]),
            num_classes=max(self.num_classes, other.num_classes),
        )


def save_csv(data: LabeledDataset, path) -> None:
    """Write the canonical CSV schema with 17-significant-digit floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = ["user_id", "context_id", "label"] + [f"f{i}" for i in range(data.dim)]
        fh.write(",".join(header) + "\n")
        for u, c, y, x in zip(data.user_ids, data.context_ids, data.labels, data.features):
            feats = ",".join(format(v, ".17g") for v in x)
            fh.write(f"{u},{c},{y},{feats}\n")


def load_csv(path, num_classes=None) -> LabeledDataset:
    """Parse the canonical CSV schema; malformed rows report their line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise UsageError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[:3] != ["user_id", "context_id", "label"]:
        raise StructureError(f"{path}: header must start with user_id,context_id,label")
    dim = len(header) - 3
    if dim <= 0 or header[3:] != [f"f{i}" for i in range(dim)]:
        raise StructureError(f"{path}: feature columns must be f0..f{{D-1}}")
    users, contexts, labels, feats = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3 + dim:
            raise UsageError(f"{path}:{lineno}: expected {3 + dim} fields, got {len(parts)}")
        try:
            labels.append(int(parts[2]))
            feats.append([float(v) for v in parts[3:]])
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
        users.append(parts[0])
        contexts.append(parts[1])
    return LabeledDataset(users, contexts, labels, np.array(feats, dtype=np.float64), num_classes)


def split(
    data: LabeledDataset,
    fractions,
    stratify_by: str | None = "label",
    seed: int = 0,
) -> list[LabeledDataset]:
    """Disjoint, exhaustive, seeded partition of ``data``.

    ``stratify_by`` is one of 'label', 'user_id', 'context_id' or None.
    Every part with a positive fraction receives at least one row from each
    stratum; a stratum smaller than the number of positive parts is a usage
    error.
    """
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"fractions must be nonnegative and sum to 1, got {fractions}")
    if len(data) == 0:
        raise UsageError("cannot split an empty dataset")
    positive = [i for i, f in enumerate(fractions) if f > 0]

    if stratify_by is None:
        strata = {None: np.arange(len(data))}
    elif stratify_by == "label":
        strata = {v: np.flatnonzero(data.labels == v) for v in np.unique(data.labels)}
    elif stratify_by == "user_id":
        strata = {v: np.flatnonzero(data.user_ids == v) for v in set(data.user_ids.tolist())}
    elif stratify_by == "context_id":
        strata = {v: np.flatnonzero(data.context_ids == v) for v in set(data.context_ids.tolist())}
    else:
        raise UsageError(f"unknown stratify_by {stratify_by!r}")

    rng = np.random.default_rng(seed)
    buckets: list[list[np.ndarray]] = [[] for _ in fractions]
    for key in sorted(strata, key=str):
        idx = strata[key]
        n = len(idx)
        if n < len(positive):
            raise UsageError(
                f"stratum {key!r} has {n} rows, cannot fill {len(positive)} parts"
            )
        idx = rng.permutation(idx)
        counts = _largest_remainder(n, fractions, positive)
        start = 0
        for part, cnt in enumerate(counts):
            buckets[part].append(idx[start : start + cnt])
            start += cnt
    out = []
    for part_chunks in buckets:
        merged = np.sort(np.concatenate(part_chunks)) if part_chunks else np.array([], dtype=int)
        out.append(data.subset(merged))
    return out


def _largest_remainder(n: int, fractions: list[float], positive: list[int]) -> list[int]:
    ideal = [f * n for f in fractions]
    counts = [math.floor(v) for v in ideal]
    # guarantee one row per positive part before distributing the remainder
    for i in positive:
        if counts[i] == 0:
            counts[i] = 1
    while sum(counts) > n:
        floor_of = lambda i: 1 if i in positive else 0
        shrinkable = [i for i in range(len(counts)) if counts[i] > floor_of(i)]
        big = max(shrinkable, key=lambda i: (counts[i] - ideal[i], counts[i]))
        counts[big] -= 1
    order = sorted(range(len(fractions)), key=lambda i: (ideal[i] - counts[i]), reverse=True)
    for i in order:
        if sum(counts) == n:
            break
        if fractions[i] > 0:
            counts[i] += 1
    return counts


def stratified_holdout(data: LabeledDataset, fraction: float, seed: int):
    """(train, validation) pair, stratified by class and seeded."""
    if not 0.0 < fraction < 1.0:
        raise UsageError(f"holdout fraction must be in (0,1), got {fraction}")
    train, val = split(data, (1.0 - fraction, fraction), stratify_by="label", seed=seed)
    return train, val


@dataclass(frozen=True)
class ContextTransform:
    """How one context views the shared feature space.

    Either a planar rotation angle (radians, applied to consecutive axis
    pairs) or a seeded random orthogonal map, plus an additive bias drawn
    with scale ``bias_scale``.
    """

    rotation: float = 0.0
    ortho_seed: int | None = None
    bias_scale: float = 0.0

    def matrix(self, dim: int) -> np.ndarray:
        if self.ortho_seed is not None:
            g = np.random.default_rng(self.ortho_seed).normal(size=(dim, dim))
            q, r = np.linalg.qr(g)
            return q * np.sign(np.diag(r))
        q = np.eye(dim)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        for a in range(0, dim - 1, 2):
            block = np.eye(dim)
            block[a, a] = c
            block[a, a + 1] = -s
            block[a + 1, a] = s
            block[a + 1, a + 1] = c
            q = block @ q
        return q


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs of the synthetic multi-context benchmark generator."""

    num_generic_users: int = 6
    num_personal_users: int = 3
    num_classes: int = 3
    dim: int = 6
    jitter_scale: float = 0.8
    contexts: tuple[ContextTransform, ...] = (
        ContextTransform(rotation=0.0, bias_scale=0.0),
        ContextTransform(rotation=1.1, bias_scale=1.2),
    )
    noise_sigma: float = 0.55
    samples_per_class: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.num_generic_users < 1 or self.num_personal_users < 1:
            raise UsageError("need at least one generic and one personal user")
        if self.num_classes < 2 or self.dim < 1 or self.samples_per_class < 1:
            raise UsageError("num_classes>=2, dim>=1, samples_per_class>=1 required")
        if len(self.contexts) < 2:
            raise UsageError("need at least two contexts")
        if self.noise_sigma <= 0:
            raise UsageError("noise_sigma must be positive")

    @property
    def generic_users(self) -> list[str]:
        return [f"g{i}" for i in range(self.num_generic_users)]

    @property
    def personal_users(self) -> list[str]:
        return [f"p{i}" for i in range(self.num_personal_users)]

    @property
    def context_ids(self) -> list[str]:
        return [f"C{i + 1}" for i in range(len(self.contexts))]


def latents(spec: SyntheticSpec):
    """Latent structure of the generator: (means, context mats, biases, jitters, rng).

    The returned rng has consumed exactly the latent draws, so ``generate``
    continues the same stream for the sampling phase. Exposing this lets an
    oracle with full knowledge of the densities score the same population.
    """
    rng = np.random.default_rng(spec.seed)
    means = rng.normal(0.0, 1.0, size=(spec.num_classes, spec.dim))
    mats = [t.matrix(spec.dim) for t in spec.contexts]
    bias = [t.bias_scale * rng.normal(size=spec.dim) for t in spec.contexts]
    jitters = {
        user: rng.normal(0.0, spec.jitter_scale, size=(spec.num_classes, spec.dim))
        for user in spec.generic_users + spec.personal_users
    }
    return means, mats, bias, jitters, rng


def generate(spec: SyntheticSpec) -> LabeledDataset:
    """Sample the benchmark dataset; bit-identical for identical specs.

    For user u, class y, context c:
        x = Q_c @ (mu_y + jitter_{u,y} + eps) + b_c,   eps ~ N(0, sigma^2 I)
    so every context keeps the class geometry (orthogonal map preserves
    distances) while moving the decision surface.
    """
    means, mats, bias, jitters, rng = latents(spec)
    users, contexts, labels, feats = [], [], [], []
    for user in spec.generic_users + spec.personal_users:
        jitter = jitters[user]
        for ci, ctx in enumerate(spec.context_ids):
            for y in range(spec.num_classes):
                eps = rng.normal(0.0, spec.noise_sigma, size=(spec.samples_per_class, spec.dim))
                raw = means[y] + jitter[y] + eps
                x = raw @ mats[ci].T + bias[ci]
                feats.append(x)
                users.extend([user] * spec.samples_per_class)
                contexts.extend([ctx] * spec.samples_per_class)
                labels.extend([y] * spec.samples_per_class)
    return LabeledDataset(
        users, contexts, labels, np.vstack(feats), num_classes=spec.num_classes
    )
