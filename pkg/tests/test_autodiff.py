import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rgi import autodiff as ad

finite = st.floats(-3, 3, allow_nan=False)


def _grad(build, value):
    x = ad.variable(value)
    out = build(x)
    ad.backward(out)
    return x.grad


def _fd(build, value):
    return ad.finite_difference_gradient(lambda v: build(ad.constant(v)).value, value)


CASES = [
    lambda x: ad.sum_squares(ad.tanh(x)),
    lambda x: ad.sum(ad.leaky_relu(x, 0.2) * x),
    lambda x: ad.abs_sum(ad.scalar_mul(2.0, x) - 0.3),
    lambda x: ad.sum_squares(ad.reshape(x, (x.value.size,))),
    lambda x: ad.sum(ad.clamp(x, -0.5, 0.5) * ad.tanh(x)),
]


@pytest.mark.parametrize("k", range(len(CASES)))
def test_elementwise_ops_match_finite_differences(k):
    rng = np.random.default_rng(k)
    for _ in range(10):
        v = rng.normal(size=(3, 4))
        # keep kinks of abs / leaky / clamp away from the FD stencil
        v[np.abs(v) < 1e-3] += 0.01
        v[np.abs(np.abs(v) - 0.5) < 1e-3] += 0.01
        v[np.abs(2 * v - 0.3) < 1e-3] += 0.01
        g, ref = _grad(CASES[k], v), _fd(CASES[k], v)
        assert np.all(ad.relative_error(g, ref) < 1e-4)


@pytest.mark.parametrize("shapes", [((3, 4), (4, 2)), ((4,), (4, 3)), ((3, 4), (4,)), ((5,), (5,))])
def test_matmul_gradients_both_sides(shapes):
    rng = np.random.default_rng(1)
    a0, b0 = rng.normal(size=shapes[0]), rng.normal(size=shapes[1])
    a, b = ad.variable(a0), ad.variable(b0)
    ad.backward(ad.sum_squares(ad.matmul(a, b)))
    ga = ad.finite_difference_gradient(lambda v: np.sum((v @ b0) ** 2), a0)
    gb = ad.finite_difference_gradient(lambda v: np.sum((a0 @ v) ** 2), b0)
    assert np.all(ad.relative_error(a.grad, ga) < 1e-4)
    assert np.all(ad.relative_error(b.grad, gb) < 1e-4)


def test_shape_mismatch_names_op():
    with pytest.raises(ad.ShapeError) as info:
        ad.add(ad.variable(np.zeros(3)), ad.variable(np.zeros(4)))
    assert info.value.op == "add" and info.value.shapes == ((3,), (4,))
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.variable(np.zeros((2, 3))), ad.variable(np.zeros((2, 3))))


def test_backward_needs_scalar_root_and_resets():
    x = ad.variable(np.ones(3))
    with pytest.raises(ValueError):
        ad.backward(ad.tanh(x))
    out = ad.sum_squares(x)
    ad.backward(out)
    ad.backward(out)
    assert np.allclose(x.grad, 2.0)


def test_unreached_leaf_gets_zero_grad():
    x, c = ad.variable(np.ones(2)), ad.constant(np.ones(2))
    ad.backward(ad.sum(x * c))
    assert np.array_equal(c.grad, np.zeros(2))


def test_abs_subgradient_at_zero_is_zero():
    x = ad.variable(np.array([0.0, 2.0, -1.0]))
    ad.backward(ad.abs_sum(x))
    assert x.grad.tolist() == [0.0, 1.0, -1.0]


def test_clamp_passes_gradient_at_bounds():
    x = ad.variable(np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
    ad.backward(ad.sum(ad.clamp(x, -1.0, 1.0)))
    assert x.grad.tolist() == [0.0, 1.0, 1.0, 1.0, 0.0]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite),
       st.floats(-2, 2), st.floats(-2, 2))
def test_gradient_is_linear_in_the_loss(v, w, a, b):
    # grad(a f + b g) = a grad f + b grad g
    f = lambda x: ad.sum(ad.tanh(x) * w)
    g = lambda x: ad.sum_squares(x)
    both = lambda x: ad.add(ad.scalar_mul(a, f(x)), ad.scalar_mul(b, g(x)))
    assert np.allclose(_grad(both, v), a * _grad(f, v) + b * _grad(g, v), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 6), elements=finite))
def test_reshape_does_not_change_gradient(v):
    direct = _grad(lambda x: ad.sum_squares(ad.tanh(x)), v)
    via = _grad(lambda x: ad.sum_squares(ad.tanh(ad.reshape(ad.reshape(x, (3, 4)), (2, 6)))), v)
    assert np.array_equal(direct, via)


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        ad.finite_difference_gradient(lambda v: 0.0, np.zeros(2), step=0.0)
