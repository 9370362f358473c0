import numpy as np
import pytest

from sketchanim import autodiff as ad
from sketchanim.autodiff import Tape, Tensor, backward, finite_diff_check


def _grad_of(f, x_values):
    x = Tensor(x_values, requires_grad=True)
    tape = Tape()
    with tape:
        y = f(x)
    backward(y, tape)
    return x.grad


def test_square_derivative_at_3():
    g = _grad_of(lambda x: x * x, 3.0)
    assert g == pytest.approx(6.0)


def test_softmax_uniform():
    x = Tensor(np.zeros(3), requires_grad=True)
    tape = Tape()
    with tape:
        s = ad.softmax(x, axis=0)
        # project onto a uniform perturbation direction
        loss = ad.tensor_sum(s * np.array([1.0, 1.0, 1.0]) / 3.0)
    np.testing.assert_allclose(s.values, np.full(3, 1.0 / 3.0))
    backward(loss, tape)
    np.testing.assert_allclose(x.grad, np.zeros(3), atol=1e-15)


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    a0 = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    err = finite_diff_check(lambda a: ad.tensor_sum(a @ b), Tensor(a0))
    assert err < 1e-7
    # analytic check: d sum(A @ B) / dA = row-sums of B broadcast
    g = _grad_of(lambda a: ad.tensor_sum(a @ b), a0)
    np.testing.assert_allclose(g, np.tile(b.sum(axis=1), (3, 1)), atol=1e-12)


def test_constant_loss_zero_grads():
    x = Tensor(np.ones(4), requires_grad=True)
    tape = Tape()
    with tape:
        y = x * 0.0 + 7.0
        loss = ad.tensor_sum(y)
    backward(loss, tape)
    np.testing.assert_allclose(x.grad, np.zeros(4))


def test_sum_grad_is_ones():
    g = _grad_of(ad.tensor_sum, np.arange(6.0).reshape(2, 3))
    np.testing.assert_allclose(g, np.ones((2, 3)))


def test_backward_accumulates_without_zeroing():
    x = Tensor(np.array([2.0]), requires_grad=True)
    tape = Tape()
    with tape:
        loss = ad.tensor_sum(x * x)
    backward(loss, tape)
    first = x.grad.copy()
    backward(loss, tape)
    np.testing.assert_allclose(x.grad, 2.0 * first)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    tape = Tape()
    with tape:
        y = x * 2.0
    with pytest.raises(ValueError):
        backward(y, tape)


def test_norm_squared_gradcheck():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=16))
    err = finite_diff_check(lambda t: ad.tensor_sum(t * t), x, eps=1e-5)
    assert err < 1e-7


def test_two_layer_perceptron_gradcheck():
    rng = np.random.default_rng(2)
    w1 = rng.normal(size=(5, 8)) / np.sqrt(5)
    w2 = rng.normal(size=(8, 1)) / np.sqrt(8)

    def f(x):
        h = ad.tanh(ad.reshape(x, (3, 5)) @ w1)
        return ad.tensor_sum(h @ w2)

    err = finite_diff_check(f, Tensor(rng.normal(size=15)), eps=1e-5)
    assert err < 1e-5


def test_leaky_relu_linear_region_exact():
    rng = np.random.default_rng(3)
    x = Tensor(rng.uniform(0.2, 1.5, size=12))
    err = finite_diff_check(lambda t: ad.tensor_sum(ad.leaky_relu(t)), x, eps=1e-6)
    assert err < 1e-9


@pytest.mark.parametrize("op", [ad.sin, ad.cos, ad.exp, ad.tanh, ad.leaky_relu])
def test_pointwise_op_gradchecks(op):
    rng = np.random.default_rng(4)
    # stay away from the leaky-relu kink at 0
    x = Tensor(np.where(rng.normal(size=10) > 0, 1.0, -1.0) * rng.uniform(0.05, 2.0, size=10))
    err = finite_diff_check(lambda t: ad.tensor_sum(op(t)), x)
    assert err < 1e-4


@pytest.mark.parametrize("op", [ad.log, ad.sqrt])
def test_positive_domain_op_gradchecks(op):
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(0.5, 3.0, size=10))
    err = finite_diff_check(lambda t: ad.tensor_sum(op(t)), x)
    assert err < 1e-4


def test_log_sqrt_domain_errors():
    with pytest.raises(ValueError):
        ad.log(Tensor([0.0]))
    with pytest.raises(ValueError):
        ad.sqrt(Tensor([-1.0]))


def test_reduction_and_shape_op_gradchecks():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(size=(4, 5)))
    c4 = rng.normal(size=4)
    c210 = rng.normal(size=(2, 10))
    c85 = rng.normal(size=(8, 5))
    c425 = rng.normal(size=(4, 2, 5))
    c23 = rng.normal(size=(2, 3))
    c45 = rng.normal(size=(4, 5))
    checks = [
        lambda t: ad.tensor_sum(ad.mean(t, axis=1) * c4),
        lambda t: ad.tensor_sum(ad.transpose(t) @ np.ones((4, 2))),
        lambda t: ad.tensor_sum(ad.reshape(t, (2, 10)) * c210),
        lambda t: ad.tensor_sum(ad.concat([t, t * 2.0], axis=0) * c85),
        lambda t: ad.tensor_sum(ad.stack([t, t * t], axis=1) * c425),
        lambda t: ad.tensor_sum(t[1:3, ::2] * c23),
        lambda t: ad.tensor_sum(ad.softmax(t, axis=1) * c45),
    ]
    for f in checks:
        assert finite_diff_check(f, x) < 1e-6


def test_max_reduce_gradcheck_away_from_ties():
    x = Tensor(np.array([[0.1, 2.0, -1.0], [3.0, 0.5, 0.7]]))
    err = finite_diff_check(
        lambda t: ad.tensor_sum(ad.max_reduce(t, axis=1) * np.array([2.0, -1.5])), x)
    assert err < 1e-7


def test_broadcasting_row_and_scalar():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(3, 4)))
    row = rng.normal(size=4)
    err = finite_diff_check(lambda t: ad.tensor_sum((t + row) * 2.5), x)
    assert err < 1e-7
    g = _grad_of(lambda t: ad.tensor_sum(t + row), x.values)
    np.testing.assert_allclose(g, np.ones((3, 4)))


def test_batched_matmul_gradcheck():
    rng = np.random.default_rng(8)
    b = rng.normal(size=(2, 3, 4, 5))
    x = Tensor(rng.normal(size=(2, 3, 6, 4)))
    err = finite_diff_check(lambda t: ad.tensor_sum(t @ b), x)
    assert err < 1e-6


def test_deterministic_backward_is_bit_identical():
    rng = np.random.default_rng(9)
    x_values = rng.normal(size=(6, 6))

    def run():
        x = Tensor(x_values.copy(), requires_grad=True)
        tape = Tape()
        with tape:
            h = ad.tanh(x @ x_values)
            loss = ad.mean(h * h)
        backward(loss, tape)
        return x.grad

    g1, g2 = run(), run()
    assert np.array_equal(g1, g2)


def test_no_tape_means_no_recording():
    x = Tensor(np.ones(3), requires_grad=True)
    y = x * 2.0
    assert y.is_leaf is False or y.grad is None
    tape = Tape()
    with tape:
        z = x * 3.0
        loss = ad.tensor_sum(z)
    backward(loss, tape)
    np.testing.assert_allclose(x.grad, np.full(3, 3.0))
