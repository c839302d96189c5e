"""Tensor core forward semantics against independent references."""
import numpy as np
import numpy.testing as npt
import pytest

import tscnet.autodiff as ad
from tscnet.autodiff import Tensor
from tscnet.errors import ContractError, NumericsError, ShapeError

from oracles import naive_adaptive_avg, naive_bilinear_up, naive_conv2d


def t64(arr, requires_grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=requires_grad)


# -- conv2d ---------------------------------------------------------------------

def test_conv2d_scalar_scaling():
    x = t64(np.ones((1, 3, 3)))
    w = t64(np.full((1, 1, 1, 1), 2.0))
    b = t64(np.zeros(1))
    out = ad.conv2d(x, w, b)
    npt.assert_array_equal(out.data, np.full((1, 3, 3), 2.0))


def test_conv2d_dilated_size_preserving():
    # k=5 branch geometry: 3x3 kernel, dilation 5, padding 5 keeps 64x64.
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((32, 64, 64)).astype(np.float32))
    w = Tensor((rng.standard_normal((32, 32, 3, 3)) * 0.05).astype(np.float32))
    b = Tensor(np.zeros(32, dtype=np.float32))
    out = ad.conv2d(x, w, b, dilation=5, padding=5)
    assert out.shape == (32, 64, 64)


def test_conv2d_impulse_dilation_footprint():
    x = np.zeros((1, 5, 5))
    x[0, 2, 2] = 1.0
    w = np.ones((1, 1, 3, 3))
    out = ad.conv2d(t64(x), t64(w), t64(np.zeros(1)), dilation=2, padding=2)
    expected = naive_conv2d(x, w, np.zeros(1), dilation=2, padding=(2, 2, 2, 2))
    npt.assert_allclose(out.data, expected, atol=1e-12)
    # the impulse response is exactly the dilation-2 footprint mask
    assert set(np.unique(out.data)) <= {0.0, 1.0}
    assert out.data.sum() == 9.0


@pytest.mark.parametrize("seed", range(12))
def test_conv2d_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    c_in = int(rng.integers(1, 4))
    c_out = int(rng.integers(1, 4))
    h = int(rng.integers(3, 9))
    w = int(rng.integers(3, 9))
    kh = int(rng.integers(1, 4))
    kw = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    dilation = int(rng.integers(1, 3))
    pt, pb, pl, pr = (int(rng.integers(0, 3)) for _ in range(4))
    if (h + pt + pb - dilation * (kh - 1) - 1) < 0 or (w + pl + pr - dilation * (kw - 1) - 1) < 0:
        pytest.skip("degenerate geometry")
    x = rng.standard_normal((c_in, h, w))
    wgt = rng.standard_normal((c_out, c_in, kh, kw))
    b = rng.standard_normal(c_out)
    out = ad.conv2d(t64(x), t64(wgt), t64(b), stride=stride, dilation=dilation,
                    padding=(pt, pb, pl, pr))
    expected = naive_conv2d(x, wgt, b, stride=stride, dilation=dilation, padding=(pt, pb, pl, pr))
    npt.assert_allclose(out.data, expected, atol=1e-10)


def test_conv2d_channel_mismatch():
    with pytest.raises(ContractError):
        ad.conv2d(t64(np.ones((2, 4, 4))), t64(np.ones((1, 3, 3, 3))), t64(np.zeros(1)))


def test_conv2d_nonpositive_output():
    with pytest.raises(ShapeError):
        ad.conv2d(t64(np.ones((1, 2, 2))), t64(np.ones((1, 1, 5, 5))), t64(np.zeros(1)))


# -- deconv2d -------------------------------------------------------------------

def test_deconv_doubles():
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((32, 64, 64)).astype(np.float32))
    w = Tensor((rng.standard_normal((32, 32, 4, 4)) * 0.05).astype(np.float32))
    out = ad.deconv2d(x, w)
    assert out.shape == (32, 128, 128)


def test_deconv_nearest_neighbor_kernel():
    # 1-D kernel [0,1,1,0] outer itself replicates each value into 2x2.
    k1 = np.array([0.0, 1.0, 1.0, 0.0])
    w = np.outer(k1, k1)[None, None]
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = ad.deconv2d(t64(x), t64(w))
    expected = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    npt.assert_array_equal(out.data, expected)


def test_deconv_gradient_matches_fd():
    rng = np.random.default_rng(2)
    x = t64(rng.standard_normal((2, 3, 3)), requires_grad=True)
    w = t64(rng.standard_normal((2, 2, 4, 4)) * 0.3)
    loss = ad.sum_(ad.deconv2d(x, w))
    loss.backward()
    eps = 1e-6
    flat = x.data.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        with ad.no_grad():
            flat[idx] = orig + eps
            fp = ad.sum_(ad.deconv2d(x, w)).item()
            flat[idx] = orig - eps
            fm = ad.sum_(ad.deconv2d(x, w)).item()
            flat[idx] = orig
        numeric = (fp - fm) / (2 * eps)
        analytic = x.grad.reshape(-1)[idx]
        assert abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1.0) < 1e-5


def test_deconv_rejects_other_configs():
    x = t64(np.ones((1, 2, 2)))
    with pytest.raises(ShapeError):
        ad.deconv2d(x, t64(np.ones((1, 1, 3, 3))))
    with pytest.raises(ShapeError):
        ad.deconv2d(x, t64(np.ones((1, 1, 4, 4))), stride=3)


# -- linear -----------------------------------------------------------------------

def test_linear_identity():
    x = t64([1.0, -2.0, 3.0])
    out = ad.linear(x, t64(np.eye(3)), t64(np.zeros(3)))
    npt.assert_array_equal(out.data, x.data)


def test_linear_zero_weight_gives_bias():
    b = np.array([0.5, -1.5])
    out = ad.linear(t64([1.0, 2.0, 3.0]), t64(np.zeros((2, 3))), t64(b))
    npt.assert_array_equal(out.data, b)


def test_linear_matches_manual_matmul():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal(4)
    b = rng.standard_normal(3)
    out = ad.linear(t64(x), t64(w), t64(b))
    expected = np.array([sum(w[i, j] * x[j] for j in range(4)) + b[i] for i in range(3)])
    npt.assert_allclose(out.data, expected, atol=1e-12)


def test_linear_rank_contract():
    with pytest.raises(ContractError):
        ad.linear(t64(np.ones((2, 2))), t64(np.eye(2)), t64(np.zeros(2)))
    with pytest.raises(ContractError):
        ad.linear(t64(np.ones(3)), t64(np.eye(2)), t64(np.zeros(2)))


# -- activations ------------------------------------------------------------------

def test_activation_values():
    npt.assert_array_equal(ad.activation(t64([-1.0, 0.0, 2.0]), "relu").data, [0.0, 0.0, 2.0])
    assert ad.activation(t64([0.0]), "sigmoid").data[0] == 0.5
    npt.assert_allclose(ad.activation(t64([1.0, 1.0, 1.0, 1.0]), "softmax-last-axis").data,
                        [0.25, 0.25, 0.25, 0.25], atol=1e-15)
    with pytest.raises(ContractError):
        ad.activation(t64([0.0]), "tanh")


@pytest.mark.parametrize("seed", range(5))
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    x = t64(rng.standard_normal((3, 5, 7)) * 10)
    out = ad.softmax_lastdim(x)
    npt.assert_allclose(out.data.sum(axis=-1), np.ones((3, 5)), atol=1e-6)


def test_sigmoid_strictly_inside_unit_interval():
    rng = np.random.default_rng(7)
    out = ad.sigmoid(t64(rng.uniform(-20, 20, size=500)))
    assert np.all(out.data > 0.0) and np.all(out.data < 1.0)


# -- pooling / resizing -------------------------------------------------------------

def test_global_avg_constant():
    out = ad.global_avg_pool(t64(np.full((3, 4, 5), 2.5)))
    assert out.shape == (3, 1, 1)
    npt.assert_allclose(out.data.reshape(-1), [2.5, 2.5, 2.5], atol=1e-12)


def test_adaptive_avg_block_means():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 4, 4))
    out = ad.adaptive_avg_pool(t64(x), 2, 2)
    npt.assert_allclose(out.data, naive_adaptive_avg(x, 2, 2), atol=1e-12)


@pytest.mark.parametrize("shape,out_hw", [((2, 5, 7), (3, 4)), ((1, 8, 8), (5, 5)), ((3, 6, 4), (6, 2))])
def test_adaptive_avg_matches_oracle(shape, out_hw):
    rng = np.random.default_rng(5)
    x = rng.standard_normal(shape)
    out = ad.adaptive_avg_pool(t64(x), *out_hw)
    npt.assert_allclose(out.data, naive_adaptive_avg(x, *out_hw), atol=1e-12)


def test_adaptive_avg_identity_when_same_size():
    x = np.random.default_rng(6).standard_normal((2, 3, 3))
    out = ad.adaptive_avg_pool(t64(x), 3, 3)
    npt.assert_array_equal(out.data, x)


def test_bilinear_identity_when_same_size():
    x = np.random.default_rng(6).standard_normal((2, 3, 3))
    out = ad.bilinear_upsample(t64(x), 3, 3)
    npt.assert_array_equal(out.data, x)


def test_bilinear_matches_loop_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 2, 2))
    out = ad.bilinear_upsample(t64(x), 4, 4)
    npt.assert_allclose(out.data, naive_bilinear_up(x, 4, 4), atol=1e-12)


def test_bilinear_convexity_and_partition_of_unity():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((1, 2, 2))
    out = ad.bilinear_upsample(t64(x), 4, 4)
    assert out.data.min() >= x.min() - 1e-12
    assert out.data.max() <= x.max() + 1e-12
    # interpolating a constant map reproduces it exactly: weights sum to 1
    const = ad.bilinear_upsample(t64(np.full((1, 2, 2), 3.7)), 4, 4)
    npt.assert_allclose(const.data, 3.7, atol=1e-12)


def test_adaptive_then_bilinear_preserves_global_mean():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((3, 8, 8))
    down = ad.adaptive_avg_pool(t64(x), 4, 4)
    up = ad.bilinear_upsample(down, 8, 8)
    assert abs(up.data.mean() - x.mean()) < 1e-6


def test_pool_resize_monotonicity_errors():
    x = t64(np.ones((1, 4, 4)))
    with pytest.raises(ShapeError):
        ad.adaptive_avg_pool(x, 5, 4)
    with pytest.raises(ShapeError):
        ad.bilinear_upsample(x, 3, 4)
    with pytest.raises(ContractError):
        ad.pool_resize(x, "nearest", 2, 2)


def test_maxpool_basic():
    x = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    out = ad.maxpool2x2(t64(x))
    npt.assert_array_equal(out.data, [[[5.0, 7.0], [13.0, 15.0]]])
    with pytest.raises(ShapeError):
        ad.maxpool2x2(t64(np.ones((1, 3, 4))))


# -- backward basics -----------------------------------------------------------------

def test_backward_sum_gives_ones():
    x = t64(np.random.default_rng(11).standard_normal((3, 4)), requires_grad=True)
    ad.sum_(x).backward()
    npt.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_square_gives_two_x():
    x = t64(np.random.default_rng(12).standard_normal(5), requires_grad=True)
    ad.sum_(ad.mul(x, x)).backward()
    npt.assert_allclose(x.grad, 2 * x.data, atol=1e-12)


def test_backward_accumulates_across_calls():
    x = t64([1.0, 2.0], requires_grad=True)
    loss = ad.sum_(ad.mul(x, x))
    loss.backward()
    first = x.grad.copy()
    loss.backward()
    npt.assert_allclose(x.grad, 2 * first, atol=1e-12)


def test_backward_requires_scalar():
    x = t64(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        ad.mul(x, 2.0).backward()


def test_clip_gradient_mask():
    x = t64([-1.0, 0.3, 2.0], requires_grad=True)
    ad.sum_(ad.clip(x, 0.0, 1.0)).backward()
    npt.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_nonfinite_forward_raises():
    with pytest.raises(NumericsError):
        ad.div(t64([1.0]), t64([0.0]))
    with pytest.raises(NumericsError):
        ad.log(t64([0.0]))


def test_no_grad_blocks_graph():
    x = t64([1.0, 2.0], requires_grad=True)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad
    assert y._backward is None


def test_structural_ops_roundtrip():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((2, 3, 4))
    t = t64(x, requires_grad=True)
    back = ad.transpose(ad.transpose(t, (2, 0, 1)), (1, 2, 0))
    npt.assert_array_equal(back.data, x)
    again = ad.reshape(ad.reshape(t, (6, 4)), (2, 3, 4))
    npt.assert_array_equal(again.data, x)
    cat = ad.concat([t, t], axis=0)
    assert cat.shape == (4, 3, 4)
    ad.sum_(ad.mul(cat, cat)).backward()
    npt.assert_allclose(t.grad, 4 * x, atol=1e-12)
