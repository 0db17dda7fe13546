"""Dense float32 tensor ops backing the codec transforms.

Arrays use the (channels, height, width) layout for images and latents.
Convolution kernels are (out_ch, in_ch, k, k) and use the cross-correlation
convention (no kernel flip), so weight files mean the same thing to the
trainer and to this inference path.  All ops are pure; outputs are checked
to stay finite.
"""

from __future__ import annotations

import numpy as np

__all__ = ["ShapeError", "conv2d", "conv_transpose2d", "leaky_relu"]


class ShapeError(ValueError):
    """Tensor extents inconsistent with the requested operation."""


def _to_f32(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float32)


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"{op} produced non-finite values")
    return out


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Direct 2-D cross-correlation of a (C, H, W) input with an (O, C, k, k) kernel.

    Output spatial extent is floor((H + 2*padding - k)/stride) + 1 per axis,
    with zero padding.
    """
    x = _to_f32(x)
    k = _to_f32(kernel)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (C, H, W), got shape {x.shape}")
    if k.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (O, C, k, k), got shape {k.shape}")
    out_ch, in_ch, kh, kw = k.shape
    if x.shape[0] != in_ch:
        raise ShapeError(
            f"input has {x.shape[0]} channels but kernel expects {in_ch}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    _, h, w = x.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"kernel {kh}x{kw} does not fit {h}x{w} input with padding {padding}"
        )
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))

    # One GEMM per kernel tap; avoids materialising an im2col matrix.  Taps
    # are re-laid-out contiguously first or BLAS falls off its fast path.
    taps = np.ascontiguousarray(k.transpose(2, 3, 0, 1))
    out = np.zeros((out_ch, ho, wo), dtype=np.float32)
    acc = out.reshape(out_ch, -1)
    for dy in range(kh):
        for dx in range(kw):
            win = x[:, dy : dy + stride * ho : stride, dx : dx + stride * wo : stride]
            acc += taps[dy, dx] @ win.reshape(in_ch, -1)
    if bias is not None:
        b = _to_f32(bias)
        if b.shape != (out_ch,):
            raise ShapeError(f"bias must have shape ({out_ch},), got {b.shape}")
        out += b[:, None, None]
    return _finite(out, "conv2d")


def conv_transpose2d(
    x,
    kernel,
    bias=None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> np.ndarray:
    """Adjoint of :func:`conv2d` with the same geometry.

    The kernel is (I, O, k, k) where I matches the input channels, so the
    exact array used by ``conv2d`` maps back from its output space.  Output
    spatial extent is (H - 1)*stride - 2*padding + k + output_padding.
    """
    x = _to_f32(x)
    k = _to_f32(kernel)
    if x.ndim != 3:
        raise ShapeError(f"conv_transpose2d input must be (C, H, W), got {x.shape}")
    if k.ndim != 4:
        raise ShapeError(f"conv_transpose2d kernel must be (I, O, k, k), got {k.shape}")
    in_ch, out_ch, kh, kw = k.shape
    if x.shape[0] != in_ch:
        raise ShapeError(
            f"input has {x.shape[0]} channels but kernel expects {in_ch}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    if not 0 <= output_padding < max(stride, 1):
        raise ShapeError(
            f"output_padding must satisfy 0 <= p < stride, got {output_padding}"
        )
    _, h, w = x.shape
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv_transpose2d output would be empty")

    full_h = (h - 1) * stride + kh + output_padding
    full_w = (w - 1) * stride + kw + output_padding
    out = np.zeros((out_ch, full_h, full_w), dtype=np.float32)
    xf = x.reshape(in_ch, -1)
    taps = np.ascontiguousarray(k.transpose(2, 3, 1, 0))
    for dy in range(kh):
        for dx in range(kw):
            tap = (taps[dy, dx] @ xf).reshape(out_ch, h, w)
            out[:, dy : dy + stride * h : stride, dx : dx + stride * w : stride] += tap
    out = out[:, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        b = _to_f32(bias)
        if b.shape != (out_ch,):
            raise ShapeError(f"bias must have shape ({out_ch},), got {b.shape}")
        out = out + b[:, None, None]
    return _finite(np.ascontiguousarray(out), "conv_transpose2d")


def leaky_relu(x, negative_slope: float = 0.01) -> np.ndarray:
    """Elementwise max(x, negative_slope * x)."""
    x = np.asarray(x, dtype=np.float32)
    return np.maximum(x, np.float32(negative_slope) * x)
