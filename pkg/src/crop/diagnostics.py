"""Analysis instruments: cross-domain gradient alignment, magnitude maps,
and the diagonal Fisher-information trace.

The gradient inner product over domains D_1..D_m is
``||sum_i G_i||^2 - sum_i ||G_i||^2`` with G_i the full-batch plain
cross-entropy gradient on domain i; for two domains this is 2 <G_1, G_2>,
so positive values mean the model treats the domains alike.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledDataset
from .errors import UsageError
from .model import ModelParams, forward_cached
from .training import TrainConfig, backward, backprop_from_logits, softmax

_PLAIN = TrainConfig(alpha=0.0, regularizer="none")


def gip(model: ModelParams, domains: list[LabeledDataset]) -> float:
    if len(domains) < 2:
        raise UsageError("gip needs at least two domains")
    if any(len(d) == 0 for d in domains):
        raise UsageError("gip domains must be nonempty")
    grads = [backward(model, d, _PLAIN).flat() for d in domains]
    total = np.sum(grads, axis=0)
    return float(total @ total - sum(g @ g for g in grads))


def magnitude_heatmap(model: ModelParams, layer_index: int) -> np.ndarray:
    if not 0 <= layer_index < model.num_layers:
        raise UsageError(f"layer index {layer_index} out of range 0..{model.num_layers - 1}")
    return np.abs(model.weights[layer_index])


def fim_trace(model: ModelParams, data: LabeledDataset) -> float:
    """Mean over samples of sum_c p_c * ||d log p_c / d theta||^2.

    Expectation taken under the model's own predictive distribution
    (no sampled labels), evaluated one sample at a time.
    """
    if len(data) == 0:
        raise UsageError("fim_trace needs a nonempty dataset")
    total = 0.0
    for i in range(len(data)):
        x = data.features[i : i + 1]
        logits, acts = forward_cached(model, x)
        p = softmax(logits)[0]
        for c in range(model.num_classes):
            dlogits = -p[None, :].copy()
            dlogits[0, c] += 1.0  # d log p_c / d logits = e_c - p
            g = backprop_from_logits(model, acts, dlogits).flat()
            total += float(p[c]) * float(g @ g)
    return total / len(data)
