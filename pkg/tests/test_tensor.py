import numpy as np
import pytest

from fpcodec.tensor import ShapeError, conv2d, conv_transpose2d, leaky_relu


def conv2d_naive(x, k, bias, stride, padding):
    """Straight-line reference convolution (cross-correlation)."""
    out_ch, in_ch, kh, kw = k.shape
    x = np.pad(np.asarray(x, np.float64), ((0, 0), (padding, padding), (padding, padding)))
    _, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((out_ch, ho, wo))
    for o in range(out_ch):
        for i in range(ho):
            for j in range(wo):
                patch = x[:, i * stride : i * stride + kh, j * stride : j * stride + kw]
                out[o, i, j] = np.sum(patch * k[o]) + (bias[o] if bias is not None else 0.0)
    return out


def test_identity_kernel():
    x = np.random.RandomState(1).rand(3, 7, 9).astype(np.float32)
    k = np.zeros((3, 3, 1, 1), np.float32)
    for c in range(3):
        k[c, c, 0, 0] = 1.0
    out = conv2d(x, k, np.zeros(3, np.float32), stride=1, padding=0)
    np.testing.assert_array_equal(out, x)


def test_ones_kernel_center_value():
    x = np.ones((1, 5, 5), np.float32)
    k = np.ones((1, 1, 3, 3), np.float32)
    out = conv2d(x, k, None, stride=1, padding=1)
    assert out.shape == (1, 5, 5)
    assert out[0, 2, 2] == 9.0


def test_conv_shape_320():
    x = np.zeros((1, 320, 320), np.float32)
    k = np.zeros((4, 1, 5, 5), np.float32)
    out = conv2d(x, k, None, stride=2, padding=2)
    assert out.shape == (4, 160, 160)


def test_conv_transpose_identity_and_shape():
    x = np.random.RandomState(2).rand(2, 6, 6).astype(np.float32)
    k = np.zeros((2, 2, 1, 1), np.float32)
    k[0, 0] = 1.0
    k[1, 1] = 1.0
    out = conv_transpose2d(x, k, None, stride=1, padding=0, output_padding=0)
    np.testing.assert_array_equal(out, x)

    x = np.zeros((3, 160, 160), np.float32)
    k = np.zeros((3, 1, 5, 5), np.float32)
    out = conv_transpose2d(x, k, None, stride=2, padding=2, output_padding=1)
    assert out.shape == (1, 320, 320)


@pytest.mark.parametrize("k", [1, 3, 5])
@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("padding", [0, 1, 2])
def test_shape_formula_sweep(k, stride, padding):
    h = w = 16
    x = np.zeros((2, h, w), np.float32)
    kern = np.zeros((3, 2, k, k), np.float32)
    expect = (h + 2 * padding - k) // stride + 1
    out = conv2d(x, kern, None, stride=stride, padding=padding)
    assert out.shape == (3, expect, expect)

    kt = np.zeros((2, 3, k, k), np.float32)
    for op in range(stride):
        y = conv_transpose2d(x, kt, None, stride=stride, padding=padding, output_padding=op)
        want = (h - 1) * stride - 2 * padding + k + op
        if want > 0:
            assert y.shape == (3, want, want)


def test_conv_matches_naive_oracle():
    rng = np.random.RandomState(7)
    for stride, padding in [(1, 0), (1, 2), (2, 1), (2, 2)]:
        x = rng.randn(3, 10, 11).astype(np.float32)
        k = rng.randn(4, 3, 3, 3).astype(np.float32)
        b = rng.randn(4).astype(np.float32)
        got = conv2d(x, k, b, stride=stride, padding=padding)
        want = conv2d_naive(x, k, b, stride, padding)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_adjoint_identity():
    # <conv2d(a, K), b> == <a, conv_transpose2d(b, K)> for matching geometry
    rng = np.random.RandomState(11)
    for stride, padding, k in [(1, 0, 3), (2, 2, 5), (2, 1, 3)]:
        a = rng.randn(2, 8, 8).astype(np.float32)
        kern = rng.randn(3, 2, k, k).astype(np.float32)
        fwd = conv2d(a, kern, None, stride=stride, padding=padding)
        b = rng.randn(*fwd.shape).astype(np.float32)
        # output_padding restores a's extent exactly
        op = a.shape[1] - ((fwd.shape[1] - 1) * stride - 2 * padding + k)
        back = conv_transpose2d(b, kern, None, stride=stride, padding=padding, output_padding=op)
        assert back.shape == a.shape
        lhs = float(np.sum(fwd.astype(np.float64) * b))
        rhs = float(np.sum(a.astype(np.float64) * back))
        assert abs(lhs - rhs) <= 1e-5 * max(1.0, abs(lhs))


def test_leaky_relu():
    x = np.array([-1.0, 0.0, 2.0], np.float32)
    np.testing.assert_allclose(leaky_relu(x, 0.01), [-0.01, 0.0, 2.0])
    np.testing.assert_allclose(leaky_relu(x, 1.0), x)
    np.testing.assert_allclose(leaky_relu(np.array([-3.0, 3.0], np.float32), 0.0), [0.0, 3.0])


def test_purity_bit_identical():
    rng = np.random.RandomState(3)
    x = rng.randn(2, 12, 12).astype(np.float32)
    k = rng.randn(3, 2, 3, 3).astype(np.float32)
    first = conv2d(x, k, None, stride=2, padding=1)
    second = conv2d(x, k, None, stride=2, padding=1)
    assert first.tobytes() == second.tobytes()


def test_shape_errors():
    x = np.zeros((2, 8, 8), np.float32)
    k = np.zeros((3, 4, 3, 3), np.float32)  # in_ch mismatch
    with pytest.raises(ShapeError):
        conv2d(x, k, None)
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((3, 2, 3, 3), np.float32), np.zeros(5, np.float32))
    with pytest.raises(ShapeError):
        conv2d(x, np.zeros((3, 2, 3, 3), np.float32), None, stride=0)
    with pytest.raises(ShapeError):
        conv_transpose2d(x, np.zeros((2, 3, 3, 3), np.float32), None, stride=2, output_padding=2)
