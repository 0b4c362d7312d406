import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from dualct import tensor as T
from dualct.gradcheck import check_gradient
from dualct.optim import AdamState, adam_step, cosine_annealing_lr
from dualct.tensor import NonFiniteError, Parameter, Tensor, no_grad


def test_nonfinite_values_are_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        Tensor(np.array([np.inf]))


def test_integer_input_is_promoted():
    assert Tensor([1, 2]).dtype == np.float64


def test_backward_accumulates_over_shared_subexpressions():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x + x * 3.0
    T.tsum(y).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 3.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2.0).backward()


def test_gelu_examples():
    assert T.gelu(Tensor([0.0])).data[0] == 0.0
    assert abs(T.gelu(Tensor([10.0])).data[0] - 10.0) < 1e-9
    assert abs(T.gelu(Tensor([1.0])).data[0] - 1.0 * ndtr(1.0)) < 1e-12
    assert abs(T.gelu(Tensor([1.0])).data[0] - 0.8413447) < 1e-7


def test_layer_norm_examples(rng):
    g, o = Tensor(np.ones(4)), Tensor(np.zeros(4))
    np.testing.assert_allclose(T.layer_norm(Tensor(np.full(4, 3.0)), g, o).data, 0.0, atol=1e-12)
    out = T.layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
    np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-5)
    from oracles import layer_norm_twopass

    x = rng.standard_normal((3, 5))
    gain, off = rng.standard_normal(5), rng.standard_normal(5)
    got = T.layer_norm(Tensor(x), Tensor(gain), Tensor(off)).data
    np.testing.assert_allclose(got, layer_norm_twopass(x, gain, off), atol=1e-12)


def test_softmax_rows_sum_to_one(rng):
    s = T.softmax(Tensor(rng.standard_normal((4, 7)) * 30)).data
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_attention_matches_softmax_composition(rng):
    q, k, v = (Tensor(rng.standard_normal((2, 5, 3))) for _ in range(3))
    ref = T.softmax(q @ T.swap_last(k), axis=-1) @ v
    np.testing.assert_allclose(T.attention(q, k, v).data, ref.data, atol=1e-13)


def test_check_gradient_examples():
    assert check_gradient(lambda x: T.tsum(x), np.array([0.3, -1.2, 4.0])) < 1e-10
    assert check_gradient(lambda x: T.tsum(x * x), np.array([1.0, 2.0])) < 1e-8
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    T.tsum(x * x).backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


UNARY = {
    "exp": lambda x: T.exp(x),
    "square": lambda x: T.square(x),
    "gelu": lambda x: T.gelu(x),
    "relu": lambda x: T.relu(x),
    "neg": lambda x: -x,
    "softmax": lambda x: T.softmax(x, axis=-1),
    "mean": lambda x: T.mean(x, axis=0),
    "amax": lambda x: T.amax(x, axis=0),
    "transpose": lambda x: T.transpose(x, (1, 0)),
    "reshape": lambda x: T.reshape(x, (-1,)),
    "getitem_basic": lambda x: x[1:, ::2],
    "getitem_fancy": lambda x: x[np.array([0, 2, 2]), :],
    "concat": lambda x: T.concat([x, x * 2.0], axis=1),
    "stack": lambda x: T.stack([x, x * x], axis=0),
    "div": lambda x: T.div(x, x * x + 2.0),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name, rng):
    x = rng.standard_normal((3, 4))
    x[np.abs(x) < 0.05] += 0.2  # keep away from relu kinks
    w = rng.standard_normal(UNARY[name](Tensor(x)).shape)
    assert check_gradient(lambda t: T.tsum(UNARY[name](t) * w), x) < 1e-6


def test_binary_broadcast_gradients(rng):
    b = Tensor(rng.standard_normal((1, 4)), requires_grad=True)
    x = rng.standard_normal((3, 4))
    fns = [lambda t: T.tsum((t + b) * (t - b) * b), lambda t: T.tsum(T.div(b, t * t + 1.0))]
    for fn in fns:
        assert check_gradient(fn, x) < 1e-6
    assert check_gradient(lambda t: T.tsum((b + 0.0) * t), b.data * 1.0 + np.zeros((1, 4))) < 1e-8


def test_matmul_layer_norm_attention_gradients(rng):
    a = rng.standard_normal((2, 3, 4))
    m = Tensor(rng.standard_normal((4, 5)))
    w = rng.standard_normal((2, 3, 5))
    assert check_gradient(lambda t: T.tsum((t @ m) * w), a) < 1e-7
    gain, off = Tensor(rng.standard_normal(4)), Tensor(rng.standard_normal(4))
    w4 = rng.standard_normal((2, 3, 4))
    assert check_gradient(lambda t: T.tsum(T.layer_norm(t, gain, off) * w4), a) < 1e-6
    k, v = Tensor(rng.standard_normal((2, 6, 4))), Tensor(rng.standard_normal((2, 6, 4)))
    assert check_gradient(lambda t: T.tsum(T.attention(t, k, v) * w4), a) < 1e-6
    q = Tensor(a)
    assert check_gradient(lambda t: T.tsum(T.attention(q, t, v) * w4), k.data) < 1e-6
    assert check_gradient(lambda t: T.tsum(T.attention(q, k, t) * w4), v.data) < 1e-6


def test_amax_gradient_goes_to_first_max():
    x = Tensor(np.array([[1.0, 5.0], [1.0, 2.0]]), requires_grad=True)
    T.tsum(T.amax(x, axis=0)).backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0]])


# -- optimizer --------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    p = Parameter(np.array([1.0, -2.0]), name="p")
    st_ = AdamState()
    adam_step([p], [np.zeros(2)], st_, 0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert st_.step == 1


def test_adam_first_step_is_sign_times_lr():
    p = Parameter(np.array([1.0, 1.0, 1.0]), name="p")
    g = np.array([3.0, -0.5, 1e-3])
    adam_step([p], [g], AdamState(), 0.01)
    np.testing.assert_allclose(p.data - 1.0, -np.sign(g) * 0.01, rtol=1e-4, atol=1e-6)


def test_adam_descends_a_parabola():
    p = Parameter(np.array([1.0]), name="x")
    st_ = AdamState()
    prev = abs(p.data[0])
    for _ in range(10):
        adam_step([p], [2 * p.data], st_, 0.1)
        assert abs(p.data[0]) < prev
        prev = abs(p.data[0])


def test_adam_rejects_nonfinite_gradient():
    p = Parameter(np.array([1.0]), name="x")
    with pytest.raises(NonFiniteError):
        adam_step([p], [np.array([np.nan])], AdamState(), 0.1)


def test_cosine_schedule_examples():
    assert cosine_annealing_lr(0, 100, 2e-4) == 2e-4
    assert abs(cosine_annealing_lr(100, 100, 2e-4)) < 1e-20
    assert abs(cosine_annealing_lr(50, 100, 2e-4) - 1e-4) < 1e-18
    with pytest.raises(ValueError):
        cosine_annealing_lr(0, 0, 1.0)
    with pytest.raises(ValueError):
        cosine_annealing_lr(11, 10, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 1000), st.data())
def test_cosine_schedule_is_monotone(total, data):
    s = data.draw(st.integers(0, total - 1))
    assert cosine_annealing_lr(s + 1, total, 1.0) <= cosine_annealing_lr(s, total, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_gelu_matches_normal_cdf(xs):
    x = np.array(xs)
    np.testing.assert_allclose(T.gelu(Tensor(x)).data, x * ndtr(x), atol=1e-12)


def test_item_and_repr():
    t = Tensor([[2.5]])
    assert t.item() == 2.5
    assert "shape=(1, 1)" in repr(t)
    with pytest.raises(ValueError):
        Tensor([1.0, 2.0]).item()
    assert math.isclose(T.mean(Tensor([1.0, 3.0])).item(), 2.0)
