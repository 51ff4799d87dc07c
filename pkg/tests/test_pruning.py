import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crop.data import LabeledDataset
from crop.errors import UsageError
from crop.metrics import MetricKind, evaluate
from crop.model import ModelParams, init_params
from crop.pruning import Mask, PruneConfig, mask_of, prune, tolerated_prune
from crop.training import TrainConfig, train

from conftest import blob_dataset, random_model

ACC = MetricKind.ACCURACY


def _row_model(values):
    w = np.array([values], dtype=float)
    return ModelParams([w], [np.zeros(1)])


def test_prune_two_smallest_magnitudes():
    m = _row_model([0.5, -0.1, 0.3, -0.7])
    pruned, mask = prune(m, 0.5)
    np.testing.assert_array_equal(pruned.weights[0], [[0.5, 0.0, 0.0, -0.7]])
    np.testing.assert_array_equal(mask.weight_masks[0], [[1.0, 0.0, 0.0, 1.0]])
    assert mask.prune_fraction == 0.5


def test_prune_zero_fraction_noop():
    m = _row_model([1.0, 2.0, 3.0])
    pruned, mask = prune(m, 0.0)
    assert pruned.allclose(m)
    assert mask.prune_fraction == 0.0


def test_prune_matches_brute_force_ranking():
    rng = np.random.default_rng(0)
    m = random_model(rng, dims=[5, 7, 4])
    p = 0.3
    pruned, mask = prune(m, p)
    # oracle: flatten in (layer, row, col) order, python sort with index ties
    entries = []
    pos = 0
    for li, w in enumerate(m.weights):
        for o in range(w.shape[0]):
            for i in range(w.shape[1]):
                entries.append((abs(w[o, i]), pos, (li, o, i)))
                pos += 1
    entries.sort()
    n_zero = math.floor(p * len(entries))
    zeroed = {e[2] for e in entries[:n_zero]}
    for li, msk in enumerate(mask.weight_masks):
        for o in range(msk.shape[0]):
            for i in range(msk.shape[1]):
                assert (msk[o, i] == 0.0) == ((li, o, i) in zeroed)


def test_prune_magnitude_top_removes_largest():
    m = _row_model([0.5, -0.1, 0.3, -0.7])
    pruned, _ = prune(m, 0.25, strategy="magnitude_top")
    np.testing.assert_array_equal(pruned.weights[0], [[0.5, -0.1, 0.3, 0.0]])


def test_prune_gradient_low_uses_gradients():
    m = _row_model([1.0, 1.0, 1.0])
    from crop.model import GradientSet

    grads = GradientSet([np.array([[0.3, 0.01, 0.2]])], [np.zeros(1)])
    pruned, _ = prune(m, 1 / 3, strategy="gradient_low", grads=grads)
    np.testing.assert_array_equal(pruned.weights[0], [[1.0, 0.0, 1.0]])
    with pytest.raises(UsageError):
        prune(m, 0.5, strategy="gradient_low")


def test_prune_does_not_mutate_input():
    rng = np.random.default_rng(1)
    m = random_model(rng, dims=[4, 4])
    before = [w.copy() for w in m.weights]
    prune(m, 0.5)
    assert all((a == b).all() for a, b in zip(m.weights, before))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_mask_monotonicity_and_count(seed, p_lo, p_hi):
    p1, p2 = sorted((p_lo, p_hi))
    rng = np.random.default_rng(seed)
    m = random_model(rng, dims=[3, 5, 2])
    _, mask1 = prune(m, p1)
    _, mask2 = prune(m, p2)
    n = mask1.num_entries
    assert mask1.num_zeros == math.floor(p1 * n + 1e-9)
    assert mask2.num_zeros == math.floor(p2 * n + 1e-9)
    # zero-set at the smaller fraction is contained in the larger one
    assert np.all(mask2.flat() <= mask1.flat())


def test_mask_of_round_trip():
    rng = np.random.default_rng(2)
    m = random_model(rng, dims=[4, 6, 3])
    pruned, mask = prune(m, 0.4)
    got = mask_of(pruned)
    assert all((a == b).all() for a, b in zip(got.weight_masks, mask.weight_masks))
    assert mask_of(m).prune_fraction == 0.0


def _constant_model():
    # all-zero weights: predictions depend on biases only, pruning changes nothing
    m = init_params([4, 4, 2], seed=0)
    for w in m.weights:
        w[:] = 0.0
    m.biases[-1][:] = [1.0, 0.0]
    return m


def _blob_batch(seed=0):
    return blob_dataset(seed=seed, n_per_class=30)


def test_tolerated_prune_degenerate_tolerance_hits_grid_end():
    m = _constant_model()
    data = _blob_batch()
    cfg = PruneConfig(tau=1.0, k=0.25, k_step=0.25)
    _, mask, fraction = tolerated_prune(m, cfg, data, ACC)
    assert fraction == 1.0
    assert mask.prune_fraction == 1.0


def test_tolerated_prune_constant_accuracy_reaches_grid_max():
    m = _constant_model()
    data = _blob_batch(1)
    cfg = PruneConfig(tau=0.01, k=0.05, k_step=0.05)
    _, _, fraction = tolerated_prune(m, cfg, data, ACC)
    assert fraction == 1.0


def test_tolerated_prune_contract_on_trained_model():
    data = blob_dataset(seed=5, n_per_class=80)
    model = init_params([4, 8, 2], seed=0)
    best, _ = train(model, data, TrainConfig(learning_rate=0.1, epochs=150, batch_size=16, seed=0))
    cfg = PruneConfig(tau=0.01, k=0.05, k_step=0.05)
    kept, mask, fraction = tolerated_prune(best, cfg, data, ACC)
    a0 = evaluate(best, data, ACC)
    assert evaluate(kept, data, ACC) >= a0 - cfg.tau
    if fraction + cfg.k_step <= 1.0:
        nxt, _ = prune(best, fraction + cfg.k_step)
        assert evaluate(nxt, data, ACC) < a0 - cfg.tau
    assert mask.prune_fraction == pytest.approx(
        math.floor(fraction * best.num_weights + 1e-9) / best.num_weights
    )


def test_tolerated_prune_returns_unpruned_when_first_step_violates():
    # two perfectly informative weights: removing either one breaks a class
    m = ModelParams([np.array([[1.0], [-1.0]])], [np.zeros(2)])
    x = np.array([[1.0], [2.0], [-1.0], [-2.0]])
    y = [0, 0, 1, 1]
    data = LabeledDataset(["u"] * 4, ["c"] * 4, y, x, num_classes=2)
    cfg = PruneConfig(tau=0.05, k=0.5, k_step=0.5)
    kept, mask, fraction = tolerated_prune(m, cfg, data, ACC)
    assert fraction == 0.0
    assert mask.prune_fraction == 0.0
    assert kept.allclose(m)


def test_prune_config_validation():
    with pytest.raises(UsageError):
        PruneConfig(tau=0.0)
    with pytest.raises(UsageError):
        PruneConfig(k=1.5)
    with pytest.raises(UsageError):
        PruneConfig(strategy="banana")
    PruneConfig(k=1.0, k_step=1.0)  # one-step grid is allowed
