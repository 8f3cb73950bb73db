import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planesweep.tensor import (
    Tensor,
    batch_norm,
    bilinear_sample,
    check_gradient,
    conv,
    conv2d,
    conv3d,
    expectation_along_depth,
    masked_l1,
    mean_across,
    relu,
    softmax_axis,
    transposed_conv,
    variance_across,
)


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def naive_conv2d(x, k, b, stride):
    """Direct sliding-window loops; independent of the im2col path."""
    C, H, W = x.shape
    Co, _, kh, kw = k.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((Co, H // stride, W // stride))
    for o in range(Co):
        for i in range(H // stride):
            for j in range(W // stride):
                win = xp[:, i * stride:i * stride + kh, j * stride:j * stride + kw]
                out[o, i, j] = np.sum(win * k[o]) + (b[o] if b is not None else 0.0)
    return out


# -- convolution ----------------------------------------------------------------

def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).standard_normal((3, 8, 8))
    k = np.zeros((3, 3, 1, 1))
    k[np.arange(3), np.arange(3)] = 1.0
    out = conv2d(Tensor(x), Tensor(k), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_all_ones_interior_is_nine():
    out = conv2d(Tensor(np.ones((1, 6, 6))), Tensor(np.ones((1, 1, 3, 3))))
    np.testing.assert_array_equal(out.data[0, 1:-1, 1:-1], 9.0)
    assert out.data[0, 0, 0] == 4.0  # zero padding at the corner


def test_conv2d_shape_with_stride():
    out = conv2d(Tensor(np.zeros((8, 64, 64), np.float32)), Tensor(np.zeros((16, 8, 5, 5), np.float32)),
                 stride=2)
    assert out.shape == (16, 32, 32)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_matches_direct_loops(stride):
    rng = np.random.default_rng(stride)
    x = rng.standard_normal((3, 8, 6))
    k = rng.standard_normal((4, 3, 5, 3))
    b = rng.standard_normal(4)
    out = conv2d(Tensor(x), Tensor(k), Tensor(b), stride=stride)
    np.testing.assert_allclose(out.data, naive_conv2d(x, k, b, stride), rtol=1e-12, atol=1e-12)


def test_conv3d_identity_all_ones_and_stride():
    x = np.random.default_rng(1).standard_normal((2, 4, 4, 4))
    k = np.zeros((2, 2, 1, 1, 1))
    k[0, 0] = k[1, 1] = 1.0
    np.testing.assert_array_equal(conv3d(Tensor(x), Tensor(k)).data, x)
    ones = conv3d(Tensor(np.ones((1, 5, 5, 5))), Tensor(np.ones((1, 1, 3, 3, 3))))
    np.testing.assert_array_equal(ones.data[0, 1:-1, 1:-1, 1:-1], 27.0)
    assert conv3d(Tensor(np.ones((1, 4, 8, 6))), Tensor(np.ones((2, 1, 3, 3, 3))), stride=2).shape == (2, 2, 4, 3)


def test_conv_rejects_bad_shapes():
    with pytest.raises(ValueError, match="channel"):
        conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))
    with pytest.raises(ValueError, match="odd"):
        conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 3, 2, 2))))
    with pytest.raises(ValueError, match="divisible"):
        conv2d(Tensor(np.zeros((3, 5, 4))), Tensor(np.zeros((2, 3, 3, 3))), stride=2)


@pytest.mark.parametrize("nd", [2, 3])
def test_transposed_conv_is_adjoint_of_strided_conv(nd):
    rng = np.random.default_rng(nd)
    x = rng.standard_normal((3,) + (4,) * nd)
    y = rng.standard_normal((2,) + (2,) * nd)
    k = rng.standard_normal((2, 3) + (3,) * nd)  # conv kernel [Cout, Cin, ...]
    lhs = np.sum(conv(Tensor(x), Tensor(k), stride=2).data * y)
    # the transposed conv kernel is laid out [Cin_of_transposed, Cout_of_transposed, ...]
    rhs = np.sum(x * transposed_conv(Tensor(y), Tensor(k), stride=2).data)
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_transposed_conv_shape_and_zero_input():
    k = Tensor(np.ones((8, 4, 3, 3, 3)))
    out = transposed_conv(Tensor(np.zeros((8, 4, 4, 4))), k, stride=2)
    assert out.shape == (4, 8, 8, 8)
    assert not out.data.any()
    with pytest.raises(ValueError):
        transposed_conv(Tensor(np.zeros((8, 4, 4, 4))), k, stride=0)


# -- batch norm -----------------------------------------------------------------

def _bn_params(c, gamma=1.0, beta=0.0):
    return Tensor(np.full(c, gamma)), Tensor(np.full(c, beta))


def test_batch_norm_standardized_input_passes_through():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 50, 40))
    x = (x - x.mean(axis=(1, 2), keepdims=True)) / x.std(axis=(1, 2), keepdims=True)
    g, b = _bn_params(2)
    # the default eps of 1e-5 moves the output by ~5e-6; a small eps isolates the formula
    out = batch_norm(Tensor(x), g, b, "train", eps=1e-12)
    np.testing.assert_allclose(out.data, x, atol=1e-6)


def test_batch_norm_constant_input_and_zero_gamma():
    g, b = _bn_params(1)
    out = batch_norm(Tensor(np.full((1, 4, 4), 7.0)), g, b, "train")
    np.testing.assert_array_equal(out.data, 0.0)
    g0, b3 = _bn_params(2, gamma=0.0, beta=3.0)
    out = batch_norm(Tensor(np.random.default_rng(0).standard_normal((2, 3, 3))), g0, b3, "train")
    np.testing.assert_array_equal(out.data, 3.0)


def test_batch_norm_single_element_channel_is_finite():
    g, b = _bn_params(3)
    out = batch_norm(Tensor(np.ones((3, 1, 1))), g, b, "train")
    assert np.all(np.isfinite(out.data))


def test_batch_norm_running_stats_and_eval():
    rng = np.random.default_rng(0)
    x = rng.normal(5.0, 2.0, size=(2, 10, 10))
    rm, rv = np.zeros(2), np.ones(2)
    g, b = _bn_params(2)
    batch_norm(Tensor(x), g, b, "train", rm, rv, momentum=0.1)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(1, 2)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(1, 2), ddof=1))
    out = batch_norm(Tensor(x), g, b, "eval", rm, rv, eps=1e-5)
    expect = (x - rm[:, None, None]) / np.sqrt(rv[:, None, None] + 1e-5)
    np.testing.assert_allclose(out.data, expect)
    frozen = batch_norm(Tensor(x), Tensor(np.array([2.0, 3.0])), Tensor(np.array([1.0, -1.0])), "frozen")
    np.testing.assert_allclose(frozen.data, x * np.array([2.0, 3.0])[:, None, None]
                               + np.array([1.0, -1.0])[:, None, None])


def test_batch_norm_unknown_mode():
    g, b = _bn_params(1)
    with pytest.raises(ValueError):
        batch_norm(Tensor(np.ones((1, 2, 2))), g, b, "inference")


# -- activations ------------------------------------------------------------------

def test_relu_values_and_gradient_mask():
    x = t64([-1.0, 2.0, 0.0, 3.5])
    y = relu(x)
    np.testing.assert_array_equal(y.data, [0.0, 2.0, 0.0, 3.5])
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0, 1.0])


def test_softmax_examples():
    np.testing.assert_allclose(softmax_axis(Tensor(np.zeros((256, 2)))).data, 1 / 256)
    out = softmax_axis(Tensor(np.array([0.0, np.log(3.0)])))
    np.testing.assert_allclose(out.data, [0.25, 0.75], rtol=1e-15)
    x = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_allclose(softmax_axis(Tensor(x + 123.4)).data, softmax_axis(Tensor(x)).data,
                               atol=1e-9)


@given(st.integers(0, 10_000), st.floats(1.0, 1e4))
def test_softmax_sums_to_one_for_large_logits(seed, scale):
    x = np.random.default_rng(seed).uniform(-scale, scale, size=(16, 3, 2)).astype(np.float32)
    y = softmax_axis(Tensor(x), axis=0).data
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=0), 1.0, atol=1e-5)


# -- bilinear sampling ----------------------------------------------------------

def test_bilinear_examples():
    img = Tensor(np.arange(12.0).reshape(1, 3, 4))
    ys, xs = np.mgrid[0:3, 0:4]
    out = bilinear_sample(img, np.stack([xs, ys]).astype(np.float64))
    np.testing.assert_array_equal(out.data, img.data)
    pair = Tensor(np.array([[[0.0, 2.0]]]))
    assert bilinear_sample(pair, np.array([[0.5], [0.0]])).data[0, 0] == 1.0
    assert bilinear_sample(pair, np.array([[-5.0], [-5.0]])).data[0, 0] == 0.0


def test_bilinear_rejects_non_finite():
    with pytest.raises(ValueError):
        bilinear_sample(Tensor(np.ones((1, 2, 2))), np.array([[np.nan], [0.0]]))


def test_bilinear_partial_border_blends_with_zero():
    img = Tensor(np.full((1, 2, 2), 4.0))
    assert bilinear_sample(img, np.array([[1.5], [0.0]])).data[0, 0] == 2.0


# -- cost metrics -------------------------------------------------------------------

def test_variance_examples():
    v = [Tensor(np.array([1.0])), Tensor(np.array([3.0]))]
    assert variance_across(v).data[0] == 1.0
    same = Tensor(np.random.default_rng(0).standard_normal((2, 3)))
    assert not variance_across([same, same, same]).data.any()
    assert mean_across(v).data[0] == 2.0
    np.testing.assert_array_equal(mean_across([same]).data, same.data)
    np.testing.assert_array_equal(mean_across([same, same]).data, same.data)


def test_variance_matches_two_pass_oracle():
    rng = np.random.default_rng(3)
    vols = [rng.standard_normal((4, 5, 6)) for _ in range(3)]
    mean = sum(vols) / 3
    oracle = sum((v - mean) ** 2 for v in vols) / 3
    np.testing.assert_allclose(variance_across([Tensor(v) for v in vols]).data, oracle, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_cost_metrics_are_bit_exact_under_permutation(seed, n):
    rng = np.random.default_rng(seed)
    vols = [Tensor(rng.standard_normal((3, 4)).astype(np.float32)) for _ in range(n)]
    perm = list(rng.permutation(n))
    shuffled = [vols[i] for i in perm]
    assert np.array_equal(variance_across(vols).data, variance_across(shuffled).data)
    assert np.array_equal(mean_across(vols).data, mean_across(shuffled).data)
    assert np.all(variance_across(vols).data >= 0)


def test_cost_metric_shape_mismatch():
    with pytest.raises(ValueError):
        variance_across([Tensor(np.zeros(2)), Tensor(np.zeros(3))])


# -- depth regression and loss --------------------------------------------------

def test_expectation_examples():
    depths = 425.0 + 2.0 * np.arange(256)
    onehot = np.zeros((256, 1, 1))
    onehot[41] = 1.0
    assert expectation_along_depth(Tensor(onehot), depths).data[0, 0] == 507.0
    uniform = np.full((256, 1, 1), 1 / 256)
    np.testing.assert_allclose(expectation_along_depth(Tensor(uniform), depths).data, 680.0, rtol=1e-12)
    half = np.zeros((256, 1, 1))
    half[:2] = 0.5
    assert expectation_along_depth(Tensor(half), depths).data[0, 0] == 426.0


@given(st.integers(0, 10_000))
def test_expectation_bounded_by_depth_range(seed):
    rng = np.random.default_rng(seed)
    logits = rng.uniform(-30, 30, size=(8, 3, 3)).astype(np.float32)
    depths = np.sort(rng.uniform(1, 100, size=8))
    p = softmax_axis(Tensor(logits), axis=0)
    est = expectation_along_depth(p, depths).data
    assert np.all(est >= np.float32(depths.min())) and np.all(est <= np.float32(depths.max()))


def test_masked_l1_examples():
    gt = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.array([[1, 0], [0, 0]])
    assert masked_l1(Tensor(gt), gt, np.ones((2, 2))).item() == 0.0
    pred = t64(gt + np.array([[2.0, 100.0], [-100.0, 7.0]]))
    loss = masked_l1(pred, gt, mask)
    assert loss.item() == 2.0
    loss.backward()
    np.testing.assert_array_equal(pred.grad, [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="no valid"):
        masked_l1(Tensor(gt), gt, np.zeros((2, 2)))


# -- gradient checks ------------------------------------------------------------

def test_check_gradient_on_linear_op_is_tiny():
    x = t64(np.random.default_rng(0).standard_normal((3, 4)))
    assert check_gradient(lambda a: a * 3.0 + 1.0, [x]) < 1e-9


def test_bilinear_coordinate_gradient_at_non_integer_points():
    rng = np.random.default_rng(5)
    img = t64(rng.standard_normal((2, 5, 6)))
    coords = t64(np.stack([rng.uniform(-1, 6, (3, 4)), rng.uniform(-1, 5, (3, 4))]))
    assert check_gradient(bilinear_sample, [img, coords], h=1e-5) < 1e-4


def test_relu_gradient_away_from_zero():
    x = np.random.default_rng(0).standard_normal(20)
    x[np.abs(x) < 0.05] = 0.5
    assert check_gradient(relu, [t64(x)]) < 1e-6
