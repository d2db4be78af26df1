import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catflow import tensor as T
from catflow.gradcheck import check_gradients, check_registered_op
from catflow.tensor import REGISTERED_OPS, Tensor


def test_softmax_uniform_on_constant():
    out = T.softmax(Tensor([0.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_matmul_identity():
    m = np.array([[2.0, 3.0], [4.0, 5.0]])
    out = T.matmul(Tensor(np.eye(2)), Tensor(m))
    np.testing.assert_array_equal(out.data, m)


def test_grad_of_square_is_two_x():
    x = Tensor(3.0, requires_grad=True)
    T.backward(T.mul(x, x))
    assert x.grad == pytest.approx(6.0)


def test_linear_form_gradient():
    rng = np.random.default_rng(0)
    w = Tensor(rng.standard_normal(5), requires_grad=True)
    x = rng.standard_normal(5)
    T.backward(T.tsum(T.mul(w, x)))
    np.testing.assert_allclose(w.grad, x, atol=1e-15)


def test_softmax_cross_entropy_gradient_identity():
    # d/dz of -log softmax(z)[k] is softmax(z) - onehot(k)
    rng = np.random.default_rng(1)
    z = Tensor(rng.standard_normal(6), requires_grad=True)
    onehot = np.zeros(6)
    onehot[2] = 1.0
    loss = T.neg(T.tsum(T.mul(T.log(T.softmax(z)), onehot)))
    T.backward(loss)
    probs = np.exp(z.data) / np.exp(z.data).sum()
    np.testing.assert_allclose(z.grad, probs - onehot, atol=1e-12)


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, (3, 4))

    def net(params):
        w1, b1, w2 = params
        h = T.relu(T.add(T.matmul(Tensor(x), w1), b1))
        out = T.matmul(h, w2)
        return T.tsum(T.mul(out, out))

    inputs = [rng.uniform(-1, 1, (4, 5)), rng.uniform(-1, 1, 5), rng.uniform(-1, 1, (5, 2))]
    assert check_gradients(net, inputs) < 1e-4


def test_backward_requires_scalar():
    with pytest.raises(ValueError, match="scalar"):
        T.backward(Tensor([1.0, 2.0], requires_grad=True))


def test_repeated_backward_accumulates():
    x = Tensor(2.0, requires_grad=True)
    T.backward(T.mul(x, x))
    T.backward(T.mul(x, x))
    assert x.grad == pytest.approx(8.0)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ValueError) as err:
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)


def test_two_sided_broadcast_rejected():
    with pytest.raises(ValueError):
        T.mul(Tensor(np.zeros((3, 1))), Tensor(np.zeros((1, 4))))


def test_leading_axis_broadcast_allowed():
    out = T.add(Tensor(np.ones((2, 3, 4))), Tensor(np.ones(4)))
    assert out.shape == (2, 3, 4)


def test_interior_broadcast_requires_unit_axis():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((2, 1)), requires_grad=True)
    out = T.mul(a, b)
    T.backward(T.tsum(out))
    assert b.grad.shape == (2, 1)
    np.testing.assert_allclose(b.grad, 3.0)


def test_requires_grad_propagates():
    a = Tensor([1.0], requires_grad=True)
    b = Tensor([2.0])
    assert T.mul(a, b).requires_grad
    assert not T.mul(b, b).requires_grad


def test_non_scalar_backward_type_error():
    with pytest.raises(TypeError):
        T.backward(np.zeros(()))


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
@settings(max_examples=100, deadline=None)
def test_softmax_normalized_and_positive(values):
    out = T.softmax(Tensor(values)).data
    assert abs(out.sum() - 1.0) <= 1e-12
    assert np.all(out > 0)


def test_std_matches_numpy():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, (6, 4))
    out = T.tstd(Tensor(x), axis=0)
    np.testing.assert_allclose(out.data, x.std(axis=0), atol=1e-12)


def test_every_registered_op_passes_gradient_check():
    rng = np.random.default_rng(4)
    for name in REGISTERED_OPS:
        worst = check_registered_op(name, rng, trials=10)
        assert worst < 1e-4, name


def test_concat_and_narrow_roundtrip():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
    joined = T.concat([Tensor(a), Tensor(b)], axis=1)
    np.testing.assert_array_equal(T.narrow(joined, 1, 0, 3).data, a)
    np.testing.assert_array_equal(T.narrow(joined, 1, 3, 2).data, b)


def test_transpose_inverts():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 4))
    out = T.transpose(T.transpose(Tensor(x), (2, 0, 1)), (1, 2, 0))
    np.testing.assert_array_equal(out.data, x)
