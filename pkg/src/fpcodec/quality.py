"""Image fidelity metrics (PSNR, SSIM) and Bjontegaard deltas over RD curves."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .tensor import ShapeError

__all__ = [
    "RDPoint",
    "RDCurve",
    "psnr",
    "ssim",
    "bd_metrics",
    "BDOverlapError",
]

# SSIM constants: 11x11 Gaussian window, sigma 1.5, K1/K2 defaults, 8-bit range
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


class BDOverlapError(ValueError):
    """RD curves share no quality/rate overlap to integrate over."""


def _check_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def psnr(a, b) -> float:
    """10*log10(255^2 / MSE); identical images return the +inf sentinel."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(SSIM_L**2 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    g = np.exp(-0.5 * (np.arange(size) - half) ** 2 / sigma**2)
    k = np.outer(g, g)
    return k / k.sum()


_WINDOW = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def ssim(a, b) -> float:
    """Mean local SSIM with the standard 11x11 sigma-1.5 Gaussian window."""
    a, b = _check_pair(a, b)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    pad = SSIM_WINDOW // 2

    mu_a = correlate(a, _WINDOW, mode="reflect")
    mu_b = correlate(b, _WINDOW, mode="reflect")
    saa = correlate(a * a, _WINDOW, mode="reflect") - mu_a * mu_a
    sbb = correlate(b * b, _WINDOW, mode="reflect") - mu_b * mu_b
    sab = correlate(a * b, _WINDOW, mode="reflect") - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    smap = num / den
    # interior only so the padded border does not bias the mean
    core = smap[pad:-pad, pad:-pad] if min(smap.shape) > 2 * pad else smap
    return float(core.mean())


@dataclass(frozen=True)
class RDPoint:
    rate_bpp: float
    psnr_db: float
    ssim: float

    def __post_init__(self):
        if not (self.rate_bpp > 0 and math.isfinite(self.rate_bpp)):
            raise ValueError(f"rate must be finite and > 0, got {self.rate_bpp}")

    def quality(self, key: str) -> float:
        if key == "psnr":
            return self.psnr_db
        if key == "ssim":
            return self.ssim
        raise ValueError(f"unknown quality key {key!r}")


@dataclass(frozen=True)
class RDCurve:
    label: str
    points: tuple

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: p.rate_bpp))
        object.__setattr__(self, "points", pts)
        rates = [p.rate_bpp for p in pts]
        if any(r2 <= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ValueError(f"curve {self.label!r} has non-increasing rates")

    def rates(self) -> np.ndarray:
        return np.array([p.rate_bpp for p in self.points])

    def qualities(self, key: str) -> np.ndarray:
        return np.array([p.quality(key) for p in self.points])


def _fit_and_integrate(x: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    """Average of a cubic fit y(x) over [lo, hi]."""
    coeffs = np.polyfit(x, y, 3)
    integral = np.polyint(coeffs)
    return float((np.polyval(integral, hi) - np.polyval(integral, lo)) / (hi - lo))


def bd_metrics(anchor: RDCurve, test: RDCurve, quality_key: str = "psnr") -> dict:
    """Classic cubic-fit Bjontegaard deltas of test versus anchor.

    ``bd_rate_percent`` is the average rate change at equal quality (negative
    means the test codec saves rate); ``bd_quality`` is the average quality
    change at equal rate, in the metric's own units.
    """
    for curve in (anchor, test):
        if len(curve.points) < 4:
            raise ValueError(
                f"curve {curve.label!r} has {len(curve.points)} points; BD needs >= 4"
            )
    qa = anchor.qualities(quality_key)
    qt = test.qualities(quality_key)
    ra = np.log10(anchor.rates())
    rt = np.log10(test.rates())

    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise BDOverlapError(
            f"no overlapping {quality_key} range between "
            f"{anchor.label!r} and {test.label!r}"
        )
    avg_anchor = _fit_and_integrate(qa, ra, lo, hi)
    avg_test = _fit_and_integrate(qt, rt, lo, hi)
    bd_rate = (10.0 ** (avg_test - avg_anchor) - 1.0) * 100.0

    lo_r = max(ra.min(), rt.min())
    hi_r = min(ra.max(), rt.max())
    if hi_r <= lo_r:
        raise BDOverlapError(
            f"no overlapping rate range between {anchor.label!r} and {test.label!r}"
        )
    bd_quality = _fit_and_integrate(rt, qt, lo_r, hi_r) - _fit_and_integrate(
        ra, qa, lo_r, hi_r
    )
    return {"bd_rate_percent": bd_rate, "bd_quality": bd_quality}
