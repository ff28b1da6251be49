import math

import numpy as np
import pytest
from scipy.special import expit

from advmod import exceptions
from advmod.numerics import (
    AdamState,
    adam_step,
    check_finite,
    finite_diff_grad,
    make_rng,
    matmul,
    relative_error,
    xavier_bound,
    xavier_init,
)


###########################################################################################
#       RANDOM STREAMS
###########################################################################################
def test_same_seed_same_sequence():
    assert np.array_equal(make_rng(7).standard_normal(50), make_rng(7).standard_normal(50))


def test_sub_streams_are_independent():
    assert not np.array_equal(make_rng(7, 0).standard_normal(50), make_rng(7, 1).standard_normal(50))


###########################################################################################
#       XAVIER
###########################################################################################
@pytest.mark.parametrize("fan_in, fan_out, bound", [(3, 3, 1.0), (1, 1, math.sqrt(3.0))])
def test_xavier_bound(rng, fan_in, fan_out, bound):
    weights = xavier_init(fan_in, fan_out, rng)
    assert weights.shape == (fan_in, fan_out)
    assert xavier_bound(fan_in, fan_out) == pytest.approx(bound)
    samples = xavier_init(fan_in, fan_out, rng, shape=(10000,))
    assert np.all(np.abs(samples) <= bound)


def test_xavier_statistics(rng):
    samples = xavier_init(3, 3, rng, shape=(100000,))
    assert abs(samples.mean()) < 0.01
    assert samples.var() == pytest.approx(1.0 / 3.0, rel=0.05)


@pytest.mark.parametrize("fan_in, fan_out", [(0, 3), (3, 0)])
def test_xavier_rejects_zero_fan(rng, fan_in, fan_out):
    with pytest.raises(exceptions.InitialisationError):
        xavier_init(fan_in, fan_out, rng)


###########################################################################################
#       ADAM
###########################################################################################
def test_adam_zero_gradient_leaves_params():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    state = AdamState.for_parameters(params)
    adam_step(params, [np.zeros(2), np.zeros((1, 1))], state)
    assert np.array_equal(params[0], [1.0, -2.0])
    assert np.array_equal(params[1], [[0.5]])
    assert state.t == 1


def test_adam_first_step():
    param = np.array([0.0])
    adam_step([param], [np.array([1.0])], AdamState([(1,)], learning_rate=0.001))
    assert param[0] == pytest.approx(-0.001, abs=1e-10)


def test_adam_elementwise():
    together = np.array([1.0, 1.0])
    adam_step([together], [np.array([0.3, -2.0])], AdamState([(2,)]))
    first, second = np.array([1.0]), np.array([1.0])
    adam_step([first], [np.array([0.3])], AdamState([(1,)]))
    adam_step([second], [np.array([-2.0])], AdamState([(1,)]))
    assert np.array_equal(together, np.concatenate([first, second]))


def test_adam_step_counter():
    param = np.array([1.0])
    state = AdamState([(1,)])
    for expected in range(1, 4):
        adam_step([param], [np.array([0.1])], state)
        assert state.t == expected


def test_adam_shape_mismatch():
    with pytest.raises(exceptions.ShapeMismatchError):
        adam_step([np.zeros(3)], [np.zeros(2)], AdamState([(3,)]))
    with pytest.raises(exceptions.ShapeMismatchError):
        adam_step([np.zeros(3), np.zeros(1)], [np.zeros(3)], AdamState([(3,), (1,)]))


def test_adam_minimises_quadratic():
    w = np.array([1.0])
    state = AdamState([(1,)], learning_rate=0.001)
    losses = []
    for _ in range(500):
        losses.append(float(w[0] ** 2))
        adam_step([w], [2.0 * w], state)
    assert abs(w[0]) < 0.9
    window_means = np.array(losses).reshape(10, 50).mean(axis=1)
    assert np.all(np.diff(window_means) < 0)


###########################################################################################
#       FINITE DIFFERENCES
###########################################################################################
def test_finite_diff_square():
    assert finite_diff_grad(lambda x: np.sum(x**2), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-8)


def test_finite_diff_constant():
    assert np.array_equal(finite_diff_grad(lambda x: 4.2, np.ones((2, 3))), np.zeros((2, 3)))


def test_finite_diff_sigmoid():
    assert finite_diff_grad(lambda x: expit(x).sum(), np.array([0.0]))[0] == pytest.approx(0.25, abs=1e-8)


def test_finite_diff_exact_on_quadratics(rng):
    a = rng.standard_normal((4, 4))
    b = rng.standard_normal(4)
    x = rng.standard_normal(4)
    grad = finite_diff_grad(lambda v: v @ a @ v + b @ v + 3.0, x)
    np.testing.assert_allclose(grad, (a + a.T) @ x + b, atol=1e-7)


def test_finite_diff_does_not_modify_input():
    x = np.array([1.0, 2.0])
    finite_diff_grad(lambda v: np.sum(v**3), x)
    assert np.array_equal(x, [1.0, 2.0])


def test_finite_diff_non_finite_names_coordinate():
    with pytest.raises(exceptions.NonFiniteError, match=r"\(1,\)"):
        finite_diff_grad(lambda v: v[0] + (np.inf if v[1] > 1.0 else 0.0), np.array([0.0, 1.0]))


def test_finite_diff_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda v: 0.0, np.zeros(1), h=0.0)


def test_relative_error():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.ones(3), np.ones(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([-1.0])) == pytest.approx(1.0)


###########################################################################################
#       MATMUL
###########################################################################################
def test_matmul_identity(rng):
    a = rng.standard_normal((3, 4))
    assert np.array_equal(matmul(a, np.eye(4)), a)


def test_matmul_hand_example():
    assert np.array_equal(matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]])), [[11.0]])


def test_matmul_zero():
    assert np.array_equal(matmul(np.zeros((2, 3)), np.ones((3, 5))), np.zeros((2, 5)))


@pytest.mark.parametrize("a_shape, b_shape", [((2, 3), (2, 3)), ((3,), (3, 1))])
def test_matmul_mismatch(a_shape, b_shape):
    with pytest.raises(exceptions.ShapeMismatchError):
        matmul(np.zeros(a_shape), np.zeros(b_shape))


def test_check_finite():
    with pytest.raises(exceptions.NonFiniteError, match="weights"):
        check_finite(np.array([1.0, np.nan]), "weights")
