import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roga.diffcore import DomainBatch, ModelSpec, bce_from_logits, loss
from roga.errors import DimensionError
from roga.models import InitSpec, QuadraticModel, init_params, predict_scores

from conftest import random_batch, random_mlp


def test_zeros_init():
    spec = ModelSpec.mlp(3, [4, 2])
    np.testing.assert_array_equal(init_params(spec, InitSpec("zeros", 1)), np.zeros(spec.n_params))


def test_init_deterministic():
    spec = ModelSpec.mlp(3, [4])
    np.testing.assert_array_equal(init_params(spec, InitSpec(seed=7)), init_params(spec, InitSpec(seed=7)))


def test_glorot_bounds_and_zero_biases():
    spec = ModelSpec("mlp", (2, 3, 1))
    params = init_params(spec, InitSpec(seed=3))
    (W1, b1), (W2, b2) = spec.unpack(params)
    assert np.all(np.abs(W1) <= np.sqrt(6 / 5))
    assert np.all(np.abs(W2) <= np.sqrt(6 / 4))
    assert not b1.any() and not b2.any()


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_seeds_differ(s1, s2):
    if s1 == s2:
        return
    spec = ModelSpec.mlp(2, [3])
    assert np.any(init_params(spec, InitSpec(seed=s1)) != init_params(spec, InitSpec(seed=s2)))


def test_zero_params_score_half():
    spec = ModelSpec.mlp(3, [4])
    np.testing.assert_array_equal(predict_scores(spec, np.zeros(spec.n_params), np.ones((5, 3))), 0.5)


def test_logistic_score_closed_form():
    spec = ModelSpec.logistic(2)
    s = predict_scores(spec, np.array([10.0, 0.0, 0.0]), np.array([[1.0, 0.0]]))
    assert s[0] == pytest.approx(0.9999546, abs=1e-7)


def test_scores_consistent_with_loss(rng):
    spec, params = random_mlp(rng)
    batch = random_batch(rng, 30, spec.input_dim)
    p = predict_scores(spec, params, batch.features)
    y = batch.labels
    bce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert bce == pytest.approx(loss(spec, params, batch), abs=1e-9)


def test_scores_strictly_inside_and_monotone():
    spec = ModelSpec.logistic(1)
    x = np.linspace(-30, 30, 61).reshape(-1, 1)
    s = predict_scores(spec, np.array([1.0, 0.0]), x)
    assert np.all((s > 0) & (s < 1))
    assert np.all(np.diff(s) > 0)


def test_dimension_mismatch():
    spec = ModelSpec.logistic(2)
    with pytest.raises(DimensionError):
        predict_scores(spec, np.zeros(3), np.ones((2, 3)))


def test_quadratic_model():
    q = QuadraticModel(np.diag([1.0, 2.0]), [1.0, 0.0])
    assert q.loss([1.0, 1.0]) == pytest.approx(0.5 * 3 + 1)
    np.testing.assert_array_equal(q.grad([1.0, 1.0]), [2.0, 2.0])
