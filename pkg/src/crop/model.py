"""Dense MLP parameter container and forward pass.

Models are plain value objects: a list of (weights, bias) pairs with ReLU
on every hidden layer and identity on the output layer. All arrays are
float64 and owned exclusively by their ``ModelParams`` instance; operations
elsewhere in the package copy instead of aliasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, StructureError


@dataclass
class ModelParams:
    """Ordered dense layers of an MLP classifier.

    ``weights[i]`` has shape (out_i, in_i) and ``biases[i]`` shape (out_i,).
    Hidden layers use ReLU, the final layer is linear (logits).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise StructureError("need one bias vector per weight matrix")
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise StructureError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise StructureError(
                    f"layer {i} expects {w.shape[1]} inputs, layer {i - 1} emits "
                    f"{self.weights[i - 1].shape[0]}"
                )
        self.check_finite()

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def activations(self) -> list[str]:
        return ["relu"] * (self.num_layers - 1) + ["identity"]

    @property
    def num_weights(self) -> int:
        return sum(w.size for w in self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def check_finite(self) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"non-finite parameter in layer {i}")

    def same_shape(self, other: "ModelParams") -> bool:
        return self.layer_dims == other.layer_dims

    def flat(self) -> np.ndarray:
        """All parameters as one vector (weights then bias, per layer)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def allclose(self, other: "ModelParams", rtol: float = 0.0, atol: float = 0.0) -> bool:
        return self.same_shape(other) and np.allclose(
            self.flat(), other.flat(), rtol=rtol, atol=atol
        )


@dataclass
class GradientSet:
    """Per-parameter partials, shape-congruent with a ModelParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @staticmethod
    def zeros_like(model: ModelParams) -> "GradientSet":
        return GradientSet(
            [np.zeros_like(w) for w in model.weights],
            [np.zeros_like(b) for b in model.biases],
        )


def init_params(layer_dims: list[int], seed: int) -> ModelParams:
    """He-initialised weights, zero biases; deterministic in ``seed``."""
    if len(layer_dims) < 2 or any(d <= 0 for d in layer_dims):
        raise StructureError(f"bad layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


def forward(model: ModelParams, x: np.ndarray) -> np.ndarray:
    """Logits for a single feature vector or a (n, D) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.ndim != 2 or a.shape[1] != model.input_dim:
        raise StructureError(
            f"input has {a.shape[-1] if a.ndim else 0} features, model expects {model.input_dim}"
        )
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w.T + b
        if i < model.num_layers - 1:
            a = np.maximum(a, 0.0)
    if not np.isfinite(a).all():
        raise NumericError("non-finite logits")
    return a[0] if single else a


def forward_cached(model: ModelParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batch forward that also returns every layer's input activation.

    ``acts[i]`` is the input to layer i; the returned logits are the output
    of the last layer. Used by the backward pass and the diagnostics.
    """
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != model.input_dim:
        raise StructureError(f"batch shape {a.shape} does not match input dim {model.input_dim}")
    acts = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        acts.append(a)
        a = a @ w.T + b
        if i < model.num_layers - 1:
            a = np.maximum(a, 0.0)
    return a, acts
