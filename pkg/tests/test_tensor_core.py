import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hifigan import _kernels as K
from hifigan import tensor as T
from hifigan.tensor import ShapeError, Tensor

from oracles import avg_pool_loops, conv1d_loops, conv_transpose1d_scatter, gradcheck


def t(x):
    return Tensor(np.asarray(x, dtype=np.float64)[None, None])


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------

def test_conv1d_hand_values():
    k = Tensor(np.array([1.0, 0, -1])[None, None])
    assert T.conv1d(t([1, 2, 3]), k).data.ravel().tolist() == [-2.0]
    y = T.conv1d(t([1, 2, 3, 4]), Tensor(np.ones((1, 1, 2))), dilation=2)
    assert y.data.ravel().tolist() == [4.0, 6.0]


def test_conv1d_identity_kernel(rng):
    x = rng.normal(size=(2, 1, 17))
    y = T.conv1d(Tensor(x), Tensor(np.ones((1, 1, 1))))
    np.testing.assert_array_equal(y.data, x)


def test_conv_transpose_hand_values():
    y = T.conv_transpose1d(t([2.0, 5.0]), Tensor(np.ones((1, 1, 2))), stride=2)
    assert y.data.ravel().tolist() == [2.0, 2.0, 5.0, 5.0]
    y = T.conv_transpose1d(t([1.0]), Tensor(np.array([1.0, 2, 3])[None, None]))
    assert y.data.ravel().tolist() == [1.0, 2.0, 3.0]


def test_conv_transpose_length_formula(rng):
    y = T.conv_transpose1d(Tensor(rng.normal(size=(1, 2, 10))), Tensor(rng.normal(size=(2, 3, 16))),
                           stride=8, padding=4)
    assert y.shape == (1, 3, 80)


def test_conv2d_kx1_hand_values():
    x = Tensor(np.array([[1.0, 2], [3, 4]])[None, None])
    y = T.conv2d_kx1(x, Tensor(np.ones((1, 1, 2, 1))))
    assert y.data[0, 0].tolist() == [[4.0, 6.0]]


def test_conv2d_kx1_columns_are_independent_convs(rng):
    x = rng.normal(size=(2, 3, 11, 3))
    w = rng.normal(size=(4, 3, 3, 1))
    b = rng.normal(size=4)
    y = T.conv2d_kx1(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    for c in range(3):
        ref = conv1d_loops(x[..., c], w[..., 0], b, stride=2, padding=1)
        np.testing.assert_allclose(y[..., c], ref, atol=1e-12)


def test_conv2d_kx1_identity_kernel(rng):
    x = rng.normal(size=(1, 2, 5, 4))
    w = np.zeros((2, 2, 1, 1))
    w[0, 0] = w[1, 1] = 1.0
    np.testing.assert_array_equal(T.conv2d_kx1(Tensor(x), Tensor(w)).data, x)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 5),
       st.integers(1, 3), st.integers(0, 3), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_conv1d_matches_loop_oracle(bsz, gmul_in, gmul_out, k, stride, pad, dil, seed):
    rng = np.random.default_rng(seed)
    groups = int(rng.integers(1, 3))
    cin, cout = groups * gmul_in, groups * gmul_out
    length = dil * (k - 1) + 1 + int(rng.integers(0, 9))
    x = rng.normal(size=(bsz, cin, length))
    w = rng.normal(size=(cout, gmul_in, k))
    b = rng.normal(size=cout)
    y = T.conv1d(Tensor(x), Tensor(w), Tensor(b), stride, pad, dil, groups).data
    np.testing.assert_allclose(y, conv1d_loops(x, w, b, stride, pad, dil, groups), atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 6),
       st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_conv_transpose_matches_scatter_oracle(bsz, cin, cout, k, stride, seed):
    rng = np.random.default_rng(seed)
    length = int(rng.integers(1, 8))
    pad = int(rng.integers(0, (k + 1) // 2)) if k > 1 else 0
    x = rng.normal(size=(bsz, cin, length))
    w = rng.normal(size=(cin, cout, k))
    b = rng.normal(size=cout)
    y = T.conv_transpose1d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
    np.testing.assert_allclose(y, conv_transpose1d_scatter(x, w, b, stride, pad), atol=1e-11)


def test_leaky_relu_values():
    y = T.leaky_relu(Tensor(np.array([2.0, -1.0, 0.0])), 0.1).data
    assert y.tolist() == [2.0, -0.1, 0.0]


def test_avg_pool_values(rng):
    assert T.avg_pool1d(t([1.0, 3.0]), 2, 2).data.ravel().tolist() == [2.0]
    assert T.avg_pool1d(t([1.0, 2, 3, 4]), 2, 2).data.ravel().tolist() == [1.5, 3.5]
    y = T.avg_pool1d(Tensor(np.full((1, 1, 20), 0.7)), 4, 2, 2).data.ravel()
    np.testing.assert_allclose(y[1:-1], 0.7, rtol=1e-15)
    # zero padding counts toward the divisor
    assert y[0] == pytest.approx(0.7 * 2 / 4)
    x = rng.normal(size=(2, 3, 13))
    np.testing.assert_allclose(T.avg_pool1d(Tensor(x), 4, 2, 2).data, avg_pool_loops(x, 4, 2, 2))


def test_weight_norm_values(rng):
    w = T.weight_norm(Tensor(np.array([[3.0, 4.0]])), Tensor(np.array([5.0]))).data
    np.testing.assert_allclose(w, [[3.0, 4.0]])
    v = rng.normal(size=(3, 2, 4))
    g = np.sqrt((v ** 2).sum(axis=(1, 2)))
    np.testing.assert_allclose(T.weight_norm(Tensor(v), Tensor(g)).data, v, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31 - 1))
def test_weight_norm_scale_invariance(c, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(4, 3, 5))
    g = rng.normal(size=4)
    a = T.weight_norm(Tensor(v), Tensor(g)).data
    b = T.weight_norm(Tensor(c * v), Tensor(g)).data
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_weight_norm_rejects_zero_slice():
    v = np.ones((2, 3))
    v[1] = 0
    with pytest.raises(ValueError):
        T.weight_norm(Tensor(v), Tensor(np.ones(2)))


def sigma_hat(m, normalised):
    return np.linalg.norm(m) / np.linalg.norm(normalised)


def test_spectral_norm_identity_and_diag():
    eye = np.eye(3)
    w, _ = T.spectral_norm_apply(Tensor(eye), np.array([1.0, 0.3, 0.2]), 5)
    np.testing.assert_allclose(w.data, eye, atol=1e-12)
    d = np.diag([3.0, 1.0])
    w, _ = T.spectral_norm_apply(Tensor(d), np.array([0.6, 0.8]), 50)
    assert sigma_hat(d, w.data) == pytest.approx(3.0, abs=1e-3)


def test_spectral_norm_rank_one(rng):
    a, b = rng.normal(size=4), rng.normal(size=6)
    m = np.outer(a, b)
    w, _ = T.spectral_norm_apply(Tensor(m), rng.normal(size=4), 50)
    assert sigma_hat(m, w.data) == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_spectral_norm_converges_to_svd(rows, cols, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(rows, cols))
    w, _ = T.spectral_norm_apply(Tensor(m), rng.normal(size=rows), 50)
    s = np.linalg.svd(m, compute_uv=False)
    if len(s) > 1 and s[1] > 0.9 * s[0]:
        return  # nearly degenerate top pair; power iteration is slow there by nature
    assert sigma_hat(m, w.data) == pytest.approx(s[0], rel=1e-3)


def test_reduction_suite_values():
    x = Tensor(np.array([1.0, 2.0, 3.0]))
    assert T.mean(x).item() == 2.0
    assert T.l1_distance(x, x).item() == 0.0
    assert T.squared_error(Tensor(np.array(1.0)), 0.0).item() == 1.0
    assert (T.add(x, x).data == [2, 4, 6]).all()
    assert (T.sub(x, x).data == 0).all()
    assert (T.mul(x, x).data == [1, 4, 9]).all()
    assert (T.scale(x, 2.0).data == [2, 4, 6]).all()
    assert T.reshape(x, (3, 1)).shape == (3, 1)
    np.testing.assert_allclose(T.tanh(x).data, np.tanh([1, 2, 3]))


def test_shape_errors_are_raised():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(ShapeError):
        T.conv1d(Tensor(np.ones((1, 3, 8))), Tensor(np.ones((2, 2, 3))))
    with pytest.raises(ShapeError):
        T.conv1d(Tensor(np.ones((1, 1, 2))), Tensor(np.ones((1, 1, 5))))
    with pytest.raises(ShapeError):
        T.conv_transpose1d(Tensor(np.ones((1, 2, 4))), Tensor(np.ones((3, 1, 2))))
    with pytest.raises(ShapeError):
        T.conv2d_kx1(Tensor(np.ones((1, 1, 4, 2))), Tensor(np.ones((1, 1, 3, 2))))


# ---------------------------------------------------------------------------
# backward semantics
# ---------------------------------------------------------------------------

def test_linear_gradient_is_input(rng):
    x = rng.normal(size=5)
    w = Tensor(rng.normal(size=5), requires_grad=True)
    T.sum(T.mul(w, Tensor(x))).backward()
    np.testing.assert_array_equal(w.grad, x)


def test_gradients_accumulate_over_uses(rng):
    w = Tensor(rng.normal(size=3), requires_grad=True)
    T.sum(T.add(w, w)).backward()
    np.testing.assert_array_equal(w.grad, 2.0)
    # a second backward without zeroing adds on top
    T.sum(w).backward()
    np.testing.assert_array_equal(w.grad, 3.0)


def test_no_grad_builds_no_graph(rng):
    w = Tensor(rng.normal(size=3), requires_grad=True)
    with T.no_grad():
        y = T.mul(w, w)
    assert not y.requires_grad


def test_backward_requires_scalar(rng):
    w = Tensor(rng.normal(size=3), requires_grad=True)
    with pytest.raises((ValueError, ShapeError)):
        T.mul(w, w).backward()


# ---------------------------------------------------------------------------
# adjoint identity
# ---------------------------------------------------------------------------

def adjoint_gap(rng):
    """|<conv(x), y> - <x, convT(y)>| / scale for one random configuration."""
    bsz = int(rng.integers(1, 4))
    cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    k = int(rng.integers(1, 9))
    stride = int(rng.integers(1, 5))
    pad = int(rng.integers(0, k))
    length_out = int(rng.integers(1, 12))
    # choose an input length that the strided conv consumes exactly
    length = (length_out - 1) * stride + k - 2 * pad
    if length < 1:
        length_out = -(-(2 * pad - k + 1) // stride) + 1
        length = (length_out - 1) * stride + k - 2 * pad
    w = rng.normal(size=(cout, cin, k))
    x = rng.normal(size=(bsz, cin, length))
    y = rng.normal(size=(bsz, cout, length_out))
    cx = T.conv1d(Tensor(x), Tensor(w), stride=stride, padding=pad).data
    ty = T.conv_transpose1d(Tensor(y), Tensor(w), stride=stride, padding=pad).data
    assert cx.shape == y.shape and ty.shape == x.shape
    lhs, rhs = float((cx * y).sum()), float((x * ty).sum())
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def test_conv_transpose_is_adjoint_of_conv():
    rng = np.random.default_rng(7)
    gaps = [adjoint_gap(rng) for _ in range(100)]
    assert max(gaps) < 1e-10


# ---------------------------------------------------------------------------
# finite-difference gradient checks (64-bit)
# ---------------------------------------------------------------------------

def away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


ELEMENTWISE = {
    "add": lambda a, b: T.add(a, b),
    "sub": lambda a, b: T.sub(a, b),
    "mul": lambda a, b: T.mul(a, b),
    "matmul": lambda a, b: T.matmul(a, T.transpose(b, (1, 0))),
    "concat": lambda a, b: T.concat([a, b], axis=1),
    "stack": lambda a, b: T.stack([a, b], axis=0),
    "l1_distance": lambda a, b: T.l1_distance(a, b),
    "squared_error": lambda a, b: T.squared_error(a, b),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
def test_gradcheck_binary_ops(name, rng):
    a, b = away_from_zero(rng, (3, 4)), away_from_zero(rng, (3, 4))
    gradcheck(ELEMENTWISE[name], [a, b])


UNARY = {
    "scale": lambda x: T.scale(x, -1.7),
    "shift": lambda x: T.shift(x, 0.3),
    "neg": T.neg,
    "tanh": T.tanh,
    "leaky_relu": lambda x: T.leaky_relu(x, 0.1),
    "log": lambda x: T.log(T.abs(x)),
    "exp": T.exp,
    "abs": T.abs,
    "square": T.square,
    "clamp_min": lambda x: T.clamp_min(x, 0.0),
    "sum_axis": lambda x: T.sum(x, axis=1),
    "sum_all": T.sum,
    "mean_axis": lambda x: T.mean(x, axis=0),
    "reshape": lambda x: T.reshape(x, (4, 3)),
    "transpose": lambda x: T.transpose(x, (1, 0)),
    "getitem": lambda x: x[1:, ::2],
    "take": lambda x: T.take(x, np.array([[0, 1], [1, 1], [2, 0]])),
    "div_scalar": lambda x: x / 3.0,
    "linear": lambda x: T.linear(x, Tensor(np.arange(8.0).reshape(2, 4) / 7), Tensor(np.ones(2))),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_gradcheck_unary_ops(name, rng):
    gradcheck(UNARY[name], [away_from_zero(rng, (3, 4))])


def test_gradcheck_linear_all_inputs(rng):
    gradcheck(lambda x, w, b: T.linear(x, w, b),
              [rng.normal(size=(3, 4)), rng.normal(size=(2, 4)), rng.normal(size=2)])


@pytest.mark.parametrize("cfg", [
    dict(stride=1, padding=0, dilation=1, groups=1),
    dict(stride=2, padding=2, dilation=1, groups=1),
    dict(stride=1, padding=3, dilation=3, groups=1),
    dict(stride=3, padding=1, dilation=2, groups=2),
])
@pytest.mark.parametrize("bsz", [1, 2])
def test_gradcheck_conv1d(cfg, bsz, rng):
    g = cfg["groups"]
    x = rng.normal(size=(bsz, 2 * g, 11))
    w = rng.normal(size=(2 * g, 2, 3))
    b = rng.normal(size=2 * g)
    gradcheck(lambda x, w, b: T.conv1d(x, w, b, **cfg), [x, w, b])


@pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 4), (4, 2, 8)])
def test_gradcheck_conv_transpose(stride, padding, k, rng):
    x = rng.normal(size=(2, 3, 5))
    w = rng.normal(size=(3, 2, k))
    b = rng.normal(size=2)
    gradcheck(lambda x, w, b: T.conv_transpose1d(x, w, b, stride, padding), [x, w, b])


def test_gradcheck_conv2d_kx1(rng):
    x = rng.normal(size=(2, 2, 9, 3))
    w = rng.normal(size=(3, 2, 5, 1))
    b = rng.normal(size=3)
    gradcheck(lambda x, w, b: T.conv2d_kx1(x, w, b, stride=3, padding=2), [x, w, b])


def test_gradcheck_avg_pool(rng):
    gradcheck(lambda x: T.avg_pool1d(x, 4, 2, 2), [rng.normal(size=(2, 2, 13))])


def test_gradcheck_weight_norm(rng):
    for axis in (0, 1):
        gradcheck(lambda v, g: T.weight_norm(v, g, axis=axis),
                  [rng.normal(size=(3, 3, 4)), rng.normal(size=3)])


def test_gradcheck_spectral_norm_at_converged_vectors(rng):
    # the backward pass treats u and v as constants, which is exact once they converge
    w = rng.normal(size=(4, 2, 3))
    u0 = rng.normal(size=4)
    gradcheck(lambda w: T.spectral_norm_apply(w, u0, 200)[0], [w])


def test_kernel_layouts_agree(rng):
    # the batched channel-major path must equal per-item evaluation
    x = rng.normal(size=(3, 4, 40))
    w = rng.normal(size=(6, 4, 5))
    full = K.conv1d_forward(x, w, None, 2, 2, 1, 1)
    each = np.concatenate([K.conv1d_forward(x[i:i + 1], w, None, 2, 2, 1, 1) for i in range(3)])
    np.testing.assert_allclose(full, each, atol=1e-12)


def test_float32_mode_keeps_dtype(rng):
    with T.default_dtype(np.float32):
        x = Tensor(rng.normal(size=(1, 2, 8)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 2, 3)), requires_grad=True)
        y = T.conv1d(x, w, padding=1)
        T.sum(y).backward()
    assert y.dtype == np.float32 and x.grad.dtype == np.float32 and w.grad.dtype == np.float32
