import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphcal.errors import FitDiverged, InputError, ShapeMismatch
from graphcal.trainer import (
    AdamState,
    NodeMask,
    SplitPlan,
    adam_step,
    fit_with_early_stopping,
    stratified_split,
)


def quad(x):
    return float(x @ x), 2 * x


def test_first_adam_step_moves_by_lr():
    x = adam_step(AdamState(lr=0.01), np.array([1.0]), np.array([2.0]))
    assert x[0] == pytest.approx(0.99, abs=1e-8)


def test_zero_gradient_leaves_params():
    x0 = np.array([1.0, -2.0])
    np.testing.assert_array_equal(adam_step(AdamState(), x0, np.zeros(2)), x0)


def test_frozen_entries_untouched():
    x = adam_step(AdamState(weight_decay=0.1), np.array([1.0, 1.0]), np.array([3.0, 3.0]),
                  trainable=np.array([True, False]))
    assert x[1] == 1.0 and x[0] < 1.0


def test_weight_decay_is_added_to_gradient():
    # zero loss gradient, nonzero decay: param shrinks toward 0
    x = adam_step(AdamState(weight_decay=0.5), np.array([2.0]), np.zeros(1))
    assert x[0] == pytest.approx(1.99)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step(AdamState(), np.zeros(2), np.zeros(3))


def test_identical_runs_are_bit_identical():
    a = fit_with_early_stopping(quad, lambda x: quad(x)[0], np.array([1.0, -3.0]), max_epochs=200, patience=10)
    b = fit_with_early_stopping(quad, lambda x: quad(x)[0], np.array([1.0, -3.0]), max_epochs=200, patience=10)
    assert a.monitor_history == b.monitor_history
    np.testing.assert_array_equal(a.best_params, b.best_params)


def test_convex_quadratic_reaches_optimum():
    target = np.array([0.3, -0.7])

    def obj(x):
        d = x - target
        return float(d @ d), 2 * d

    trace = fit_with_early_stopping(obj, lambda x: obj(x)[0], np.zeros(2), max_epochs=5000, patience=200,
                                    adam=AdamState(lr=0.01))
    assert trace.best_monitor < 1e-6


def test_patience_zero_returns_initial_after_one_epoch():
    x0 = np.array([0.0])
    # objective pushes away from the monitor optimum, so the first step cannot improve it
    trace = fit_with_early_stopping(lambda x: (0.0, np.array([-1.0])), lambda x: float(x[0] ** 2), x0,
                                    max_epochs=50, patience=0)
    assert trace.epochs == 1
    np.testing.assert_array_equal(trace.best_params, x0)


@pytest.mark.parametrize("patience", [0, 3, 10])
def test_constant_monitor_stops_after_patience_plus_one(patience):
    trace = fit_with_early_stopping(quad, lambda x: 1.0, np.array([1.0]), max_epochs=100, patience=patience)
    assert trace.epochs == patience + 1


def test_best_history_is_non_increasing():
    r = np.random.default_rng(0)
    trace = fit_with_early_stopping(quad, lambda x: quad(x)[0] + 0.01 * r.random(), np.array([2.0]),
                                    max_epochs=300, patience=20)
    assert all(b2 <= b1 for b1, b2 in zip(trace.best_history, trace.best_history[1:]))


def test_divergence_and_bad_patience():
    with pytest.raises(FitDiverged):
        fit_with_early_stopping(lambda x: (float("nan"), x), lambda x: 0.0, np.zeros(1), max_epochs=5, patience=1)
    with pytest.raises(InputError):
        fit_with_early_stopping(quad, lambda x: 0.0, np.zeros(1), max_epochs=5, patience=6)


def test_balanced_split_sizes():
    labels = np.repeat([0, 1], 100)
    plan = stratified_split(labels, labeled_fraction=0.15, folds=3, seed=0)
    masks = plan.assignments[0]
    labeled = np.union1d(masks[0].train, masks[0].val)
    assert labeled.size == 30
    assert np.bincount(labels[labeled]).tolist() == [15, 15]
    assert [m.val.size for m in masks] == [10, 10, 10]
    assert all(m.train.size == 20 and m.test.size == 170 for m in masks)


def test_largest_remainder_rounding():
    labels = np.array([0] * 100 + [1] * 5)
    with pytest.warns(UserWarning):
        m = stratified_split(labels, labeled_fraction=0.15, seed=1).assignments[0][0]
    labeled = np.union1d(m.train, m.val)
    assert np.bincount(labels[labeled]).tolist() == [15, 1]


def test_same_seed_same_plan_and_roundtrip():
    labels = np.random.default_rng(0).integers(0, 4, 300)
    a = stratified_split(labels, splits=3, seed=5)
    b = stratified_split(labels, splits=3, seed=5)
    assert a.to_dict() == b.to_dict()
    assert SplitPlan.from_dict(a.to_dict()).to_dict() == a.to_dict()
    assert stratified_split(labels, splits=3, seed=6).to_dict() != a.to_dict()


def test_small_class_warns():
    labels = np.array([0] * 60 + [1] * 7)
    with pytest.warns(UserWarning, match="fewer labelled nodes than folds"):
        stratified_split(labels, labeled_fraction=0.15, folds=3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=30, max_size=300), st.integers(2, 5), st.integers(0, 100))
def test_split_partition_properties(labels, folds, seed):
    labels = np.array(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        plan = stratified_split(labels, labeled_fraction=0.2, folds=folds, seed=seed)
    masks = plan.assignments[0]
    vals = [m.val for m in masks]
    labeled = np.concatenate(vals)
    assert np.unique(labeled).size == labeled.size
    assert labeled.size == int(np.floor(0.2 * labels.size + 0.5))
    sizes = [v.size for v in vals]
    assert max(sizes) - min(sizes) <= 1
    for m in masks:
        m.validate(labels.size)
        assert m.train.size + m.val.size + m.test.size == labels.size


def test_mask_validation():
    with pytest.raises(InputError):
        NodeMask([0, 1], [1], [2]).validate(3)
    with pytest.raises(InputError):
        NodeMask([0], [1], [5]).validate(3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10))
def test_returned_snapshot_is_the_monitor_minimum(seed, patience):
    r = np.random.default_rng(seed)
    noise = r.random(400)
    calls = iter(range(400))
    trace = fit_with_early_stopping(quad, lambda x: quad(x)[0] + 0.5 * noise[next(calls)], r.normal(size=2),
                                    max_epochs=300, patience=patience)
    assert trace.best_monitor == min(trace.monitor_history)
    assert trace.best_history[-1] == trace.best_monitor


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=40, max_size=400), st.integers(0, 50))
def test_per_class_fraction_within_one_node(labels, seed):
    labels = np.array(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = stratified_split(labels, seed=seed).assignments[0][0]
    labeled = np.concatenate([m.train, m.val])
    counts = np.bincount(labels[labeled], minlength=4)
    sizes = np.bincount(labels, minlength=4)
    assert (np.abs(counts - 0.15 * sizes) <= 1.0 + 1e-9).all()
