"""Wavelet transform-coding baseline: 9/7 lifting, dead-zone quantization,
range-coded subbands, and compression-ratio targeting.

This is a transform-coding stand-in for producing baseline RD and minutiae
curves without external codecs; it is not a standards-conformant bitstream
(no code-blocks, no bitplane coding).  Externally produced results can be
ingested as CSV instead (see the report module).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .codec import Bitstream, CODEC_WAVELET
from .entropy import (
    BitSource,
    DecodeError,
    RangeDecoder,
    RangeEncoder,
    centered_cost_bits,
    decode_centered,
    encode_centered,
    sigma_to_level,
)
from .tensor import ShapeError

__all__ = [
    "WaveletConfig",
    "Pyramid",
    "dwt_forward",
    "dwt_inverse",
    "quantize_deadzone",
    "dequantize_deadzone",
    "encode_baseline",
    "decode_baseline",
    "UnreachableRatioError",
]

# CDF 9/7 lifting constants
_ALPHA = -1.586134342059924
_BETA = -0.052980118572961
_GAMMA = 0.882911075530934
_DELTA = 0.443506852043971
_K = 1.230174104914001

_SQRT2 = np.sqrt(2.0)


class UnreachableRatioError(ValueError):
    """Requested compression ratio cannot be met (image too small)."""


@dataclass
class WaveletConfig:
    levels: int = 4
    target_ratio: float = 10.0
    wavelet: str = "cdf97"  # "cdf97" | "haar"

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.target_ratio <= 0:
            raise ValueError("target_ratio must be > 0")
        if self.wavelet not in ("cdf97", "haar"):
            raise ValueError(f"unknown wavelet {self.wavelet!r}")


@dataclass
class Pyramid:
    """Coefficient pyramid: bands[d] = (LH, HL, HH) at depth d+1; ll is coarsest."""

    ll: np.ndarray
    bands: list
    wavelet: str = "cdf97"


def _shift_left(a):
    # a[i+1] with symmetric extension a[n] := a[n-1] along the last axis
    return np.concatenate([a[..., 1:], a[..., -1:]], axis=-1)


def _shift_right(a):
    # a[i-1] with symmetric extension a[-1] := a[0]
    return np.concatenate([a[..., :1], a[..., :-1]], axis=-1)


def _fwd_1d(x: np.ndarray, wavelet: str):
    s = np.array(x[..., 0::2], dtype=np.float64)
    d = np.array(x[..., 1::2], dtype=np.float64)
    if wavelet == "haar":
        d -= s
        s += 0.5 * d
        return s * _SQRT2, d / _SQRT2
    d += _ALPHA * (s + _shift_left(s))
    s += _BETA * (d + _shift_right(d))
    d += _GAMMA * (s + _shift_left(s))
    s += _DELTA * (d + _shift_right(d))
    return s * _K, d / _K


def _inv_1d(s: np.ndarray, d: np.ndarray, wavelet: str):
    if wavelet == "haar":
        s = s / _SQRT2
        d = d * _SQRT2
        s = s - 0.5 * d
        d = d + s
    else:
        s = s / _K
        d = d * _K
        s = s - _DELTA * (d + _shift_right(d))
        d = d - _GAMMA * (s + _shift_left(s))
        s = s - _BETA * (d + _shift_right(d))
        d = d - _ALPHA * (s + _shift_left(s))
    out = np.empty(s.shape[:-1] + (s.shape[-1] * 2,), dtype=np.float64)
    out[..., 0::2] = s
    out[..., 1::2] = d
    return out


def dwt_forward(img, levels: int, wavelet: str = "cdf97") -> Pyramid:
    """Multi-level 2-D DWT; dimensions must be divisible by 2**levels."""
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got shape {x.shape}")
    h, w = x.shape
    if h % (1 << levels) or w % (1 << levels):
        raise ShapeError(
            f"image {h}x{w} not divisible by 2^{levels}; crop first "
            "(see fpcodec.data.center_crop)"
        )
    bands = []
    ll = x
    for _ in range(levels):
        lo_r, hi_r = _fwd_1d(ll, wavelet)  # along width
        llc, lh = _fwd_1d(np.swapaxes(lo_r, 0, 1), wavelet)
        hl, hh = _fwd_1d(np.swapaxes(hi_r, 0, 1), wavelet)
        ll = np.swapaxes(llc, 0, 1)
        bands.append(
            (np.swapaxes(lh, 0, 1), np.swapaxes(hl, 0, 1), np.swapaxes(hh, 0, 1))
        )
    return Pyramid(ll=ll, bands=bands, wavelet=wavelet)


def dwt_inverse(pyr: Pyramid) -> np.ndarray:
    ll = pyr.ll
    for lh, hl, hh in reversed(pyr.bands):
        # undo the height transform of each width half, then the width transform
        lo_r = np.swapaxes(
            _inv_1d(np.swapaxes(ll, 0, 1), np.swapaxes(lh, 0, 1), pyr.wavelet), 0, 1
        )
        hi_r = np.swapaxes(
            _inv_1d(np.swapaxes(hl, 0, 1), np.swapaxes(hh, 0, 1), pyr.wavelet), 0, 1
        )
        ll = _inv_1d(lo_r, hi_r, pyr.wavelet)
    return ll


def quantize_deadzone(coeffs: np.ndarray, step: float) -> np.ndarray:
    """Dead-zone scalar quantizer: q = sign(c) * floor(|c| / step)."""
    if step <= 0:
        raise ValueError("step must be > 0")
    return (np.sign(coeffs) * np.floor(np.abs(coeffs) / step)).astype(np.int64)


def dequantize_deadzone(q: np.ndarray, step: float) -> np.ndarray:
    """Midpoint reconstruction: c = sign(q) * (|q| + 0.5) * step, 0 -> 0."""
    return np.sign(q) * (np.abs(q) + 0.5) * step


# ---------------------------------------------------------------------------
# baseline codec


def _subband_steps(base_step: float, levels: int):
    """Quantizer step per subband in coding order (LL first, then coarse->fine).

    Coarser subbands get step/2^depth so their larger synthesis footprint is
    weighted in; returns [(depth_index, step)] aligned with _subband_arrays.
    """
    steps = [base_step / 2.0 ** (levels - 1)]  # LL
    for d in range(levels, 0, -1):  # depth L .. 1
        steps.extend([base_step / 2.0 ** (d - 1)] * 3)
    return steps


def _subband_arrays(pyr: Pyramid):
    """Subbands in coding order: LL, then (LH, HL, HH) from coarsest to finest."""
    arrays = [pyr.ll]
    for bands in reversed(pyr.bands):
        arrays.extend(bands)
    return arrays


def _quantize_pyramid(pyr: Pyramid, base_step: float):
    arrays = _subband_arrays(pyr)
    steps = _subband_steps(base_step, len(pyr.bands))
    quantized = [quantize_deadzone(a, s) for a, s in zip(arrays, steps)]
    levels = [
        int(sigma_to_level(max(float(np.sqrt(np.mean(q.astype(np.float64) ** 2))), 0.2)))
        for q in quantized
    ]
    return quantized, steps, levels


_ENVELOPE_BYTES = 4 + struct.calcsize("<IBIIQHHH") + 1 + 8  # container + 1 segment frame


def _estimate_bytes(quantized, levels, extra_len: int) -> float:
    bits = sum(centered_cost_bits(q.ravel(), lv) for q, lv in zip(quantized, levels))
    return bits / 8.0 + _ENVELOPE_BYTES + extra_len + 8  # + flush allowance


def encode_with_step(img: np.ndarray, base_step: float, levels: int = 4) -> Bitstream:
    """Encode at an explicit quantizer step (no ratio targeting)."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ShapeError(f"expected a uint8 (H, W) image, got {img.dtype} {img.shape}")
    pyr = dwt_forward(img.astype(np.float64), levels)
    quantized, steps, sig_levels = _quantize_pyramid(pyr, base_step)
    extra = struct.pack("<Bd", levels, base_step) + bytes(sig_levels)
    enc = RangeEncoder()
    for q, lv in zip(quantized, sig_levels):
        encode_centered(enc, q.ravel(), lv)
    return Bitstream(
        codec=CODEC_WAVELET,
        height=img.shape[0],
        width=img.shape[1],
        extra=extra,
        segments=(enc.finish(),),
    )


def decode_baseline(bs: Bitstream) -> np.ndarray:
    if bs.codec != CODEC_WAVELET:
        raise DecodeError(f"bitstream codec id {bs.codec} is not the wavelet baseline")
    if len(bs.segments) != 1:
        raise DecodeError(f"expected 1 segment, found {len(bs.segments)}")
    levels, base_step = struct.unpack("<Bd", bs.extra[:9])
    sig_levels = list(bs.extra[9:])
    if len(sig_levels) != 3 * levels + 1:
        raise DecodeError("wavelet header has wrong subband count")
    h, w = bs.height, bs.width
    shapes = [(h >> levels, w >> levels)]
    for d in range(levels, 0, -1):
        shapes.extend([(h >> d, w >> d)] * 3)
    steps = _subband_steps(base_step, levels)
    dec = RangeDecoder(BitSource(bs.segments[0]))
    arrays = []
    for shape, step, lv in zip(shapes, steps, sig_levels):
        q = decode_centered(dec, shape[0] * shape[1], lv).reshape(shape)
        arrays.append(dequantize_deadzone(q, step))
    bands = []
    pos = 1
    for _ in range(levels):  # coarsest first
        bands.append((arrays[pos], arrays[pos + 1], arrays[pos + 2]))
        pos += 3
    pyr = Pyramid(ll=arrays[0], bands=list(reversed(bands)))
    rec = dwt_inverse(pyr)
    return np.clip(np.round(rec), 0, 255).astype(np.uint8)


def encode_baseline(img: np.ndarray, cfg: WaveletConfig) -> Bitstream:
    """Encode to within 5% of cfg.target_ratio (original bytes / coded bytes)."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ShapeError(f"expected a uint8 (H, W) image, got {img.dtype} {img.shape}")
    orig_bytes = img.shape[0] * img.shape[1]
    target_bytes = orig_bytes / cfg.target_ratio
    extra_len = 9 + 3 * cfg.levels + 1
    floor_bytes = _ENVELOPE_BYTES + extra_len + 2
    if target_bytes < floor_bytes * 1.02:
        raise UnreachableRatioError(
            f"ratio {cfg.target_ratio} needs <= {target_bytes:.0f} bytes but the "
            f"container floor is ~{floor_bytes} bytes; image too small"
        )
    pyr = dwt_forward(img.astype(np.float64), cfg.levels)

    def estimate(step):
        quantized, _, sig_levels = _quantize_pyramid(pyr, step)
        return _estimate_bytes(quantized, sig_levels, extra_len)

    lo, hi = 2.0**-8, 2.0**13
    if estimate(lo) < target_bytes:
        step = lo
    else:
        for _ in range(40):
            mid = np.sqrt(lo * hi)
            if estimate(mid) > target_bytes:
                lo = mid
            else:
                hi = mid
        step = np.sqrt(lo * hi)

    best = None
    for _ in range(6):
        bs = encode_with_step(img, float(step), cfg.levels)
        achieved = orig_bytes / bs.total_bytes
        err = abs(achieved - cfg.target_ratio) / cfg.target_ratio
        if best is None or err < best[0]:
            best = (err, bs)
        if err <= 0.045:
            return bs
        step *= (cfg.target_ratio / achieved) ** 1.2
    err, bs = best
    if err <= 0.05:
        return bs
    raise UnreachableRatioError(
        f"could not reach ratio {cfg.target_ratio} within 5% "
        f"(best achieved {orig_bytes / bs.total_bytes:.2f})"
    )
