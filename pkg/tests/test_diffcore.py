import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from roga.diffcore import (
    DomainBatch,
    ModelSpec,
    axpy,
    bce_from_logits,
    dot,
    grad,
    grad_check,
    loss,
    norm,
    sigmoid,
)
from roga.errors import DimensionError, NumericError
from roga.optim import OptimizerConfig, sgd_step

from conftest import random_batch, random_mlp

bounded = st.floats(-10, 10, allow_nan=False)


def vec_pair(n=st.integers(1, 20)):
    return n.flatmap(lambda k: st.tuples(arrays(np.float64, k, elements=bounded), arrays(np.float64, k, elements=bounded)))


def test_dot_examples():
    assert dot([1, 0], [0, 1]) == 0
    assert dot([1, 2], [3, 4]) == 11
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])


def test_norm_examples():
    assert norm([3, 4]) == 5
    assert norm(np.zeros(7)) == 0


def test_axpy_examples():
    b = np.array([5.0, -2.0])
    np.testing.assert_array_equal(axpy([1, 1], 0, b), [1, 1])
    np.testing.assert_array_equal(axpy([1, 0], 2, [0, 1]), [1, 2])
    a = np.array([0.3, -7.1, 2.0])
    np.testing.assert_array_equal(axpy(a, -1, a), np.zeros(3))
    with pytest.raises(DimensionError):
        axpy([1.0], 1.0, [1.0, 2.0])


def test_axpy_leaves_inputs_alone():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    axpy(a, 2.0, b)
    np.testing.assert_array_equal(a, [1, 2])
    np.testing.assert_array_equal(b, [3, 4])


@given(vec_pair())
def test_self_dot_is_squared_norm(pair):
    a, _ = pair
    assert dot(a, a) >= 0
    assert dot(a, a) == pytest.approx(norm(a) ** 2, rel=1e-12, abs=1e-12)


@given(vec_pair(), bounded)
def test_norm_homogeneous(pair, s):
    a, _ = pair
    assert norm(s * a) == pytest.approx(abs(s) * norm(a), rel=1e-12, abs=1e-12)


@given(vec_pair(), bounded, bounded)
def test_linearity(pair, s, t):
    a, b = pair
    np.testing.assert_allclose(axpy(a, s, b), a + s * b, rtol=0, atol=1e-12)
    c = axpy(a, t, b)
    assert abs(dot(c, b) - (dot(a, b) + t * dot(b, b))) <= 1e-12 * max(1.0, abs(dot(c, b))) * 100


@given(vec_pair())
def test_cauchy_schwarz(pair):
    a, b = pair
    assert abs(dot(a, b)) <= norm(a) * norm(b) + 1e-9


def test_loss_uniform_logit_is_ln2():
    spec = ModelSpec.logistic(3)
    batch = DomainBatch(np.ones((4, 3)), [0, 1, 1, 0])
    assert loss(spec, np.zeros(4), batch) == pytest.approx(np.log(2), abs=1e-12)


def test_loss_saturated_correct_prediction():
    spec = ModelSpec.logistic(1)
    batch = DomainBatch([[1.0]], [1])
    assert loss(spec, np.array([20.0, 0.0]), batch) < 1e-8
    # saturated wrong prediction stays finite
    assert loss(spec, np.array([-800.0, 0.0]), batch) == pytest.approx(800.0)


def test_loss_is_mean_of_per_example_losses(rng):
    spec, params = random_mlp(rng, d=3, hidden=[4])
    batch = random_batch(rng, 9, 3)
    one_by_one = [
        loss(spec, params, DomainBatch(batch.features[i : i + 1], batch.labels[i : i + 1]))
        for i in range(len(batch))
    ]
    assert loss(spec, params, batch) == pytest.approx(np.mean(one_by_one), rel=1e-13)


def test_bce_matches_naive_formula():
    z = np.linspace(-5, 5, 11)
    y = (np.arange(11) % 2).astype(float)
    p = 1 / (1 + np.exp(-z))
    naive = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    np.testing.assert_allclose(bce_from_logits(z, y), naive, rtol=1e-12)


def test_sigmoid_extremes():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_logistic_gradient_closed_form():
    spec = ModelSpec.logistic(2)
    batch = DomainBatch([[1.0, 0.0]], [1])
    g = grad(spec, np.zeros(3), batch)
    np.testing.assert_allclose(g[:2], [-0.5, 0.0])
    assert g[2] == pytest.approx(-0.5)


def test_gradient_vanishes_at_sgd_fixed_point():
    # overlapping classes on both sides, so the minimizer is finite
    spec = ModelSpec.logistic(1)
    batch = DomainBatch([[1.0], [1.0], [1.0], [-1.0], [-1.0], [-1.0]], [1, 1, 0, 0, 0, 1])
    theta, v = np.zeros(2), np.zeros(2)
    cfg = OptimizerConfig(lr=1.0)
    for _ in range(5000):
        theta, v, _ = sgd_step(spec, theta, batch, cfg, v)
    assert norm(grad(spec, theta, batch)) < 1e-6


def test_gradient_matches_central_differences_mlp(rng):
    spec, params = random_mlp(rng, d=4, hidden=[8])
    batch = random_batch(rng, 16, 4)
    assert grad_check(spec, params, batch, 1e-5) <= 1e-5


def test_grad_check_logistic(rng):
    spec = ModelSpec.logistic(5)
    params = rng.standard_normal(6)
    assert grad_check(spec, params, random_batch(rng, 20, 5), 1e-5) <= 1e-6


def test_grad_check_relu_away_from_kinks(rng):
    spec, params = random_mlp(rng, d=3, hidden=[5], activation="relu")
    batch = random_batch(rng, 12, 3)
    W, b = spec.unpack(params)[0]
    pre = batch.features @ W.T + b
    assert np.min(np.abs(pre)) > 1e-3  # no unit sits on its kink
    assert grad_check(spec, params, batch, 1e-5) <= 1e-5


def test_grad_check_tiny_step_still_returns(rng):
    spec, params = random_mlp(rng)
    value = grad_check(spec, params, random_batch(rng, 8, spec.input_dim), 1e-12)
    assert np.isfinite(value)


def test_relu_subgradient_at_zero_is_zero():
    spec = ModelSpec.mlp(1, [1], "relu")
    # hidden pre-activation is exactly 0 for x = 0 with zero bias
    params = np.array([1.0, 0.0, 1.0, 0.0])
    g = grad(spec, params, DomainBatch([[0.0]], [1]))
    assert g[0] == 0.0 and g[1] == 0.0 and g[2] == 0.0


def test_purity_bitwise(rng):
    spec, params = random_mlp(rng)
    batch = random_batch(rng, 10, spec.input_dim)
    assert loss(spec, params, batch) == loss(spec, params, batch)
    np.testing.assert_array_equal(grad(spec, params, batch), grad(spec, params, batch))


def test_dimension_errors(rng):
    spec = ModelSpec.mlp(3, [4])
    batch = random_batch(rng, 5, 3)
    with pytest.raises(DimensionError):
        loss(spec, np.zeros(spec.n_params + 1), batch)
    with pytest.raises(DimensionError):
        grad(spec, np.zeros(spec.n_params), random_batch(rng, 5, 2))


def test_batch_validation():
    with pytest.raises(ValueError):
        DomainBatch([[1.0]], [0.5])
    with pytest.raises(ValueError):
        DomainBatch(np.empty((0, 2)), [])
    with pytest.raises(NumericError):
        DomainBatch([[np.nan]], [1])


def test_param_count():
    assert ModelSpec.mlp(2, [3]).n_params == 2 * 3 + 3 + 3 * 1 + 1
    assert ModelSpec.logistic(4).n_params == 5
