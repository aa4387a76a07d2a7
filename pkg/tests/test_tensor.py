import numpy as np
import pytest

from deeplas.tensor import (
    Tensor,
    TruncatedNormal,
    Uniform,
    backward,
    current_tape,
    finite_difference_check,
    finite_difference_report,
    no_grad,
    ops,
    precision,
    tensor_init,
)


def _t(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _probe(out, seed=3):
    r = np.random.default_rng(seed).normal(size=out.shape)
    return ops.sum(out * Tensor(r))


UNARY = {
    "exp": ops.exp,
    "log": lambda x: ops.log(ops.exp(x) + 1.0),
    "sigmoid": ops.sigmoid,
    "tanh": ops.tanh,
    "relu": lambda x: ops.relu(x + 0.05),
    "power": lambda x: ops.power(x * x + 1.0, -0.5),
    "softmax": lambda x: ops.softmax(x, axis=1),
    "log_softmax": lambda x: ops.log_softmax(x, axis=0),
    "mean": lambda x: ops.mean(x, axis=1, keepdims=True),
    "variance": lambda x: ops.variance(x, axis=0),
    "transpose": lambda x: ops.transpose(x, (1, 0)),
    "reshape": lambda x: ops.reshape(x, (6, 2)),
    "getitem": lambda x: x[1:, ::2],
    "masked_fill": lambda x: ops.masked_fill(x, np.eye(3, 4, dtype=bool), 0.5),
    "neg": ops.neg,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradients(name):
    rng = np.random.default_rng(0)
    with precision(np.float64):
        x = _t(rng, 3, 4)
        err = finite_difference_check(lambda: _probe(UNARY[name](x)), {"x": x})
    assert err < 1e-7


@pytest.mark.parametrize("op", [ops.add, ops.sub, ops.mul, ops.div])
def test_broadcast_binary_gradients(op):
    rng = np.random.default_rng(1)
    with precision(np.float64):
        a = _t(rng, 2, 3, 4)
        b = Tensor(rng.uniform(1.0, 2.0, size=(3, 1)), requires_grad=True)
        err = finite_difference_check(lambda: _probe(op(a, b)), {"a": a, "b": b})
    assert err < 1e-7


def test_matmul_concat_take_gradients():
    rng = np.random.default_rng(2)
    with precision(np.float64):
        a, b, c = _t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 2, 3, 2)
        table = _t(rng, 6, 3)

        def loss():
            y = ops.concat([a @ b, c], axis=2)
            return _probe(y) + _probe(ops.take(table, np.array([[0, 5], [5, 2]])), 4)

        err = finite_difference_check(loss, {"a": a, "b": b, "c": c, "table": table})
    assert err < 1e-7


@pytest.mark.parametrize("stride,padding", [((1, 1), "same"), ((1, 2), "same"), ((2, 1), "valid")])
def test_conv2d_gradients(stride, padding):
    rng = np.random.default_rng(3)
    with precision(np.float64):
        x, w, b = _t(rng, 2, 2, 5, 6), _t(rng, 3, 2, 3, 2), _t(rng, 3)
        err = finite_difference_check(lambda: _probe(ops.conv2d(x, w, b, stride, padding)),
                                      {"x": x, "w": w, "b": b})
    assert err < 1e-7


def _conv_direct(x, w, b, stride, pad_lo):
    B, C, F, T = x.shape
    O, _, kf, kt = w.shape
    Fo, To = ops.conv_output_extent(F, kf, stride[0], "same"), ops.conv_output_extent(T, kt, stride[1], "same")
    xp = np.zeros((B, C, F + kf - 1, T + kt - 1))
    xp[:, :, pad_lo[0]:pad_lo[0] + F, pad_lo[1]:pad_lo[1] + T] = x
    out = np.zeros((B, O, Fo, To))
    for f in range(Fo):
        for t in range(To):
            patch = xp[:, :, f * stride[0]:f * stride[0] + kf, t * stride[1]:t * stride[1] + kt]
            out[:, :, f, t] = np.einsum("bcij,ocij->bo", patch, w) + b
    return out


@pytest.mark.parametrize("k", [(1, 1), (3, 3), (2, 4), (3, 1)])
def test_conv2d_same_padding_matches_direct_loop(k):
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 5, 7))
    w = rng.normal(size=(4, 3) + k)
    b = rng.normal(size=4)
    with precision(np.float64):
        got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=(1, 2)).data
    want = _conv_direct(x, w, b, (1, 2), ((k[0] - 1) // 2, (k[1] - 1) // 2))
    np.testing.assert_allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("n,k,s", [(10, 3, 2), (9, 3, 2), (7, 1, 1), (5, 4, 3)])
def test_conv_output_extent_same_is_ceil(n, k, s):
    assert ops.conv_output_extent(n, k, s, "same") == -(-n // s)
    assert ops.conv_output_extent(n, k, s, "valid") == (n - k) // s + 1


def test_conv_as_matrix_equals_convolution():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(8, 2, 3, 1))
    h = rng.normal(size=(4, 2, 6))
    with precision(np.float64):
        direct = ops.conv2d(Tensor(h.reshape(4, 2, 6, 1)), Tensor(w)).data.reshape(4, 8 * 6)
        mat = ops.conv_as_matrix(Tensor(w), 6).data
    np.testing.assert_allclose(h.reshape(4, 12) @ mat, direct, atol=1e-12)


def test_lstm_sequence_gradients():
    rng = np.random.default_rng(6)
    with precision(np.float64):
        xg, w_h, h0, c0 = _t(rng, 2, 4, 12), _t(rng, 3, 12), _t(rng, 2, 3), _t(rng, 2, 3)

        def loss():
            h, c = ops.lstm_sequence(xg, w_h, h0, c0)
            return _probe(h) + _probe(c, 5)

        err = finite_difference_check(loss, {"xg": xg, "w_h": w_h, "h0": h0, "c0": c0})
    assert err < 1e-7


def test_time_reverse_is_an_involution_within_lengths():
    x = np.arange(2 * 5 * 1, dtype=float).reshape(2, 5, 1)
    lengths = np.array([5, 3])
    with precision(np.float64):
        r = ops.time_reverse(Tensor(x), lengths).data
        rr = ops.time_reverse(Tensor(r), lengths).data
    assert r[1, :3, 0].tolist() == [7.0, 6.0, 5.0]
    assert r[1, 3:, 0].tolist() == [8.0, 9.0]
    np.testing.assert_array_equal(rr, x)


def test_relu_gradient_is_zero_at_kink():
    x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
    backward(ops.sum(ops.relu(x)))
    assert x.grad.tolist() == [0.0, 0.0, 1.0]


def test_softmax_is_stable_for_large_inputs():
    y = ops.softmax(Tensor(np.array([[1000.0, 1000.0, -np.inf]])), axis=1).data
    np.testing.assert_allclose(y, [[0.5, 0.5, 0.0]])


def test_grads_accumulate_on_leaves_and_tape_is_cleared():
    x = Tensor(np.ones(3), requires_grad=True)
    backward(ops.sum(x * 2.0))
    backward(ops.sum(x * 3.0))
    assert x.grad.tolist() == [5.0, 5.0, 5.0]
    assert len(current_tape()) == 0


def test_backward_requires_scalar_and_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(x * 2.0)
    current_tape().clear()
    with pytest.raises(RuntimeError, match="empty tape"):
        backward(Tensor(np.ones(())))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert len(current_tape()) == 0
    assert not y.requires_grad


def test_matmul_shape_error_names_operands():
    with pytest.raises(ValueError, match=r"matmul.*\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_precision_context_sets_default_dtype():
    # float arrays keep their dtype; everything else takes the current default
    assert Tensor([1, 2]).dtype == np.float32
    assert Tensor(np.ones(2, dtype=np.float64)).dtype == np.float64
    with precision(np.float64):
        assert Tensor([1, 2]).dtype == np.float64


def test_gradcheck_guards():
    x = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    with pytest.raises(TypeError, match="double"):
        finite_difference_report(lambda: ops.sum(x), {"x": x})
    with precision(np.float64):
        y = Tensor(np.ones(2), requires_grad=True)
        with pytest.raises(ValueError, match="eps"):
            finite_difference_report(lambda: ops.sum(y), {"y": y}, eps=1e-8)
        z = Tensor(np.array([0.0, 1.0]), requires_grad=True)
        with pytest.raises(FloatingPointError, match="z"), np.errstate(invalid="ignore"):
            finite_difference_report(lambda: ops.sum(ops.log(z + 1e-6)), {"z": z}, eps=1e-2)


def test_gradcheck_detects_a_wrong_gradient():
    with precision(np.float64):
        x = Tensor(np.array([0.3, -0.7]), requires_grad=True)

        def bad():
            from deeplas.tensor.core import record

            return ops.sum(record("bad_square", [x], x.data ** 2, lambda g: [g[0] * 3.0 * x.data]))

        assert finite_difference_check(bad, {"x": x}) > 1e-2


def test_initialisers_are_seeded_and_bounded():
    a = tensor_init((50, 40), Uniform(-0.1, 0.1), seed=7).data
    b = tensor_init((50, 40), Uniform(-0.1, 0.1), seed=7).data
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() <= 0.1
    t = tensor_init((200, 200), TruncatedNormal(0.0, 0.1), seed=1).data
    assert np.abs(t).max() <= 0.2
    assert abs(t.std() - 0.088) < 0.005  # std of a normal truncated at two sigma
