"""Fingerprint enhancement, minutiae extraction and original-vs-compressed
matching.

The enhancement pipeline is the classical one: normalization to a fixed
mean/variance, a block-wise gradient orientation field, ridge-frequency
estimation from oriented projection signatures, even-symmetric Gabor
filtering, and a zero threshold.  Ridges come out as 1s together with a
block-variance foreground mask.

Extraction thins the ridge map (Zhang-Suen) and classifies skeleton pixels
by crossing number: CN 1 is a termination, CN 3 a bifurcation.  Matching is
a pooled greedy nearest-first one-to-one assignment with a Euclidean pixel
threshold, so type changes (termination <-> bifurcation) are observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import (
    binary_closing,
    binary_erosion,
    binary_fill_holes,
    binary_opening,
    gaussian_filter,
    label,
    sobel,
)
from scipy.signal import fftconvolve

from .tensor import ShapeError

__all__ = [
    "Minutia",
    "MinutiaeReport",
    "BinaryImage",
    "NoRidgeStructureError",
    "enhance",
    "skeletonize",
    "extract",
    "crossing_number_map",
    "match",
    "evaluate_pair",
]

BLOCK = 16  # orientation/frequency block size
GABOR_SIGMA = 4.0
MIN_PERIOD = 3.0
MAX_PERIOD = 25.0
ORIENT_BINS = 16
BORDER_MARGIN = 10  # default exclusion margin for extraction
PRUNE_DIST = 5.0  # termination pairs closer than this on one ridge are noise


class NoRidgeStructureError(ValueError):
    """The image has no usable ridge structure (blank or constant input)."""


@dataclass(frozen=True, order=True)
class Minutia:
    y: int  # row
    x: int  # column
    kind: str  # "termination" | "bifurcation"


@dataclass
class MinutiaeReport:
    """Per-image tallies of how compression moved, added or retyped minutiae.

    ``changed_t`` counts original terminations matched to bifurcations;
    ``changed_b`` the reverse.  Totals satisfy
    orig = kept + changed(out) + lost and comp = kept + changed(in) + extra
    per kind.
    """

    kept_t: int = 0
    kept_b: int = 0
    extra_t: int = 0
    extra_b: int = 0
    changed_t: int = 0
    changed_b: int = 0
    lost_t: int = 0
    lost_b: int = 0
    orig_t: int = 0
    orig_b: int = 0
    comp_t: int = 0
    comp_b: int = 0

    @property
    def kept(self) -> int:
        return self.kept_t + self.kept_b

    @property
    def extra(self) -> int:
        return self.extra_t + self.extra_b

    @property
    def changed(self) -> int:
        return self.changed_t + self.changed_b

    @property
    def lost(self) -> int:
        return self.lost_t + self.lost_b

    @property
    def kept_fraction(self) -> float:
        total = self.orig_t + self.orig_b
        return self.kept / total if total else 1.0

    def check_consistency(self) -> None:
        assert self.orig_t == self.kept_t + self.changed_t + self.lost_t
        assert self.orig_b == self.kept_b + self.changed_b + self.lost_b
        assert self.comp_t == self.kept_t + self.changed_b + self.extra_t
        assert self.comp_b == self.kept_b + self.changed_t + self.extra_b


@dataclass
class BinaryImage:
    pixels: np.ndarray  # bool (H, W); ridge/skeleton = True
    mask: np.ndarray  # bool (H, W); fingerprint foreground


# ---------------------------------------------------------------------------
# enhancement


def _block_reduce(a: np.ndarray, func) -> np.ndarray:
    h, w = a.shape
    bh, bw = h // BLOCK, w // BLOCK
    view = a[: bh * BLOCK, : bw * BLOCK].reshape(bh, BLOCK, bw, BLOCK)
    return func(view, axis=(1, 3))


def _block_expand(blocks: np.ndarray, shape) -> np.ndarray:
    out = np.repeat(np.repeat(blocks, BLOCK, axis=0), BLOCK, axis=1)
    h, w = shape
    if out.shape[0] < h:
        out = np.vstack([out, np.repeat(out[-1:], h - out.shape[0], axis=0)])
    if out.shape[1] < w:
        out = np.hstack([out, np.repeat(out[:, -1:], w - out.shape[1], axis=1)])
    return out[:h, :w]


def _normalize(img: np.ndarray) -> np.ndarray:
    mean = img.mean()
    var = img.var()
    if var < 1e-6:
        raise NoRidgeStructureError("no ridge structure: image is constant")
    dev = np.sqrt(100.0 * (img - mean) ** 2 / var)
    return np.where(img > mean, 100.0 + dev, 100.0 - dev)


def _orientation_blocks(norm: np.ndarray) -> np.ndarray:
    """Gradient-direction angle per block (radians, axis of max variation)."""
    gx = sobel(norm, axis=1)
    gy = sobel(norm, axis=0)
    gxx = _block_reduce(gx * gx, np.sum)
    gyy = _block_reduce(gy * gy, np.sum)
    gxy = _block_reduce(gx * gy, np.sum)
    ang2 = np.arctan2(2.0 * gxy, gxx - gyy)
    # smooth the doubled-angle vector field so block noise does not flip bins
    c = gaussian_filter(np.cos(ang2), 1.0)
    s = gaussian_filter(np.sin(ang2), 1.0)
    return 0.5 * np.arctan2(s, c)


def _foreground_blocks(img: np.ndarray) -> np.ndarray:
    stds = np.sqrt(_block_reduce(img.astype(np.float64), np.var))
    thr = max(6.0, 0.3 * float(stds.max()))
    fg = stds >= thr
    fg = binary_closing(fg, np.ones((3, 3)))
    fg = binary_opening(fg, np.ones((2, 2)))
    return binary_fill_holes(fg)


def _ridge_periods(norm: np.ndarray, angles: np.ndarray, fg: np.ndarray) -> np.ndarray:
    """Ridge period per block from the x-signature along the gradient axis."""
    h, w = norm.shape
    bh, bw = angles.shape
    periods = np.zeros((bh, bw))
    span = np.arange(-BLOCK, BLOCK)  # 32 samples across the ridges
    width = np.arange(-BLOCK // 2, BLOCK // 2)
    for by in range(bh):
        for bx in range(bw):
            if not fg[by, bx]:
                continue
            cy = by * BLOCK + BLOCK // 2
            cx = bx * BLOCK + BLOCK // 2
            a = angles[by, bx]
            ux, uy = math.cos(a), math.sin(a)  # across ridges
            vx, vy = -uy, ux  # along ridges
            ys = np.clip(np.rint(cy + span[:, None] * uy + width[None, :] * vy), 0, h - 1).astype(int)
            xs = np.clip(np.rint(cx + span[:, None] * ux + width[None, :] * vx), 0, w - 1).astype(int)
            sig = norm[ys, xs].mean(axis=1)
            peaks = np.flatnonzero((sig[1:-1] > sig[:-2]) & (sig[1:-1] >= sig[2:])) + 1
            if len(peaks) >= 2:
                period = float(np.mean(np.diff(peaks)))
                if MIN_PERIOD <= period <= MAX_PERIOD:
                    periods[by, bx] = period
    valid = periods > 0
    if not valid.any():
        raise NoRidgeStructureError("no ridge structure: frequency estimation failed")
    periods[~valid] = np.median(periods[valid])
    return periods


def _gabor_kernel(angle: float, period: float) -> np.ndarray:
    half = int(math.ceil(2.5 * GABOR_SIGMA))
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = x * math.cos(angle) + y * math.sin(angle)
    yr = -x * math.sin(angle) + y * math.cos(angle)
    env = np.exp(-(xr**2 + yr**2) / (2.0 * GABOR_SIGMA**2))
    k = env * np.cos(2.0 * np.pi * xr / period)
    return k - k.mean()


def enhance(img: np.ndarray) -> BinaryImage:
    """8-bit grayscale fingerprint -> binary ridge map plus foreground mask."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ShapeError(f"expected a uint8 (H, W) image, got {img.dtype} {img.shape}")
    f = img.astype(np.float64)
    norm = _normalize(f)
    angles = _orientation_blocks(norm)
    fg_blocks = _foreground_blocks(f)
    if not fg_blocks.any():
        raise NoRidgeStructureError("no ridge structure: empty foreground")
    periods = _ridge_periods(norm, angles, fg_blocks)

    # quantize (angle, period) pairs and filter the whole image once per pair
    bins = np.rint(angles / (np.pi / ORIENT_BINS)).astype(int) % ORIENT_BINS
    period_int = np.clip(np.rint(periods), MIN_PERIOD, MAX_PERIOD).astype(int)
    centered = norm - 100.0
    response = np.zeros_like(norm)
    pix_bins = _block_expand(bins, norm.shape)
    pix_periods = _block_expand(period_int, norm.shape)
    pairs = set(zip(bins[fg_blocks].ravel(), period_int[fg_blocks].ravel()))
    for b, p in sorted(pairs):
        kernel = _gabor_kernel(b * np.pi / ORIENT_BINS, float(p))
        filtered = fftconvolve(centered, kernel, mode="same")
        sel = (pix_bins == b) & (pix_periods == p)
        response[sel] = filtered[sel]

    # a block is foreground if any of it is; pull the pixel mask back half a
    # block so partially-background blocks do not leak boundary artifacts
    mask = _block_expand(fg_blocks, norm.shape)
    mask = binary_erosion(mask, np.ones((3, 3)), iterations=BLOCK // 2)
    # dark ridges correlate negatively with the cosine carrier
    ridges = (response < 0.0) & mask
    return BinaryImage(pixels=ridges, mask=mask)


# ---------------------------------------------------------------------------
# thinning


def _neighbors(a: np.ndarray):
    """P2..P9 clockwise from north for each interior pixel of a padded array."""
    return (
        a[:-2, 1:-1],  # P2
        a[:-2, 2:],  # P3
        a[1:-1, 2:],  # P4
        a[2:, 2:],  # P5
        a[2:, 1:-1],  # P6
        a[2:, :-2],  # P7
        a[1:-1, :-2],  # P8
        a[:-2, :-2],  # P9
    )


def _zs_subiteration(img: np.ndarray, step: int) -> np.ndarray:
    ap = np.pad(img, 1).astype(np.uint8)
    n = _neighbors(ap)
    b = sum(x.astype(np.int32) for x in n)
    seq = n + (n[0],)
    a_count = sum(
        ((seq[i] == 0) & (seq[i + 1] == 1)).astype(np.int32) for i in range(8)
    )
    p2, p3, p4, p5, p6, p7, p8, p9 = n
    if step == 0:
        cond = (p2 & p4 & p6 == 0) & (p4 & p6 & p8 == 0)
    else:
        cond = (p2 & p4 & p8 == 0) & (p2 & p6 & p8 == 0)
    remove = img & (b >= 2) & (b <= 6) & (a_count == 1) & cond
    return img & ~remove


def skeletonize(b) -> BinaryImage:
    """Zhang-Suen thinning to a 1-pixel 8-connected skeleton.

    Components are never deleted outright (plain Zhang-Suen erases 2x2
    blobs); a vanished component keeps its first pixel so the component
    count is preserved.
    """
    if isinstance(b, BinaryImage):
        pixels, mask = b.pixels, b.mask
    else:
        pixels = np.asarray(b).astype(bool)
        mask = np.ones_like(pixels)
    cur = pixels.astype(bool)
    while True:
        nxt = _zs_subiteration(cur, 0)
        nxt = _zs_subiteration(nxt, 1)
        if (nxt == cur).all():
            break
        cur = nxt
    eight = np.ones((3, 3))
    labels, count = label(pixels, structure=eight)
    if count:
        survivors = np.unique(labels[cur])
        lost = np.setdiff1d(np.arange(1, count + 1), survivors)
        for lab in lost:
            ys, xs = np.nonzero(labels == lab)
            cur[ys[0], xs[0]] = True
    return BinaryImage(pixels=cur, mask=mask)


# ---------------------------------------------------------------------------
# extraction


def crossing_number_map(skel: np.ndarray) -> np.ndarray:
    """CN(p) = 1/2 sum |n_i - n_{i+1}| over the cyclic 8-neighborhood."""
    ap = np.pad(np.asarray(skel).astype(np.int32), 1)
    n = _neighbors(ap)
    seq = n + (n[0],)
    total = sum(np.abs(seq[i] - seq[i + 1]) for i in range(8))
    return total // 2


def extract(skel, border_margin: int = BORDER_MARGIN) -> list:
    """Terminations (CN=1) and bifurcations (CN=3) on the skeleton.

    Pixels within ``border_margin`` of the image edge or near/outside the
    foreground mask are excluded; termination pairs closer than PRUNE_DIST on
    the same ridge are dropped as broken-ridge noise.
    """
    if isinstance(skel, BinaryImage):
        pixels, mask = skel.pixels, skel.mask
    else:
        pixels = np.asarray(skel).astype(bool)
        mask = np.ones_like(pixels)
    h, w = pixels.shape
    cn = crossing_number_map(pixels)
    allowed = mask
    if border_margin > 0:
        allowed = binary_erosion(mask, np.ones((3, 3)), iterations=border_margin)
        edge = np.zeros_like(allowed)
        edge[border_margin:-border_margin, border_margin:-border_margin] = True
        allowed = allowed & edge
    cand = pixels & allowed & ((cn == 1) | (cn == 3))
    ys, xs = np.nonzero(cand)
    minutiae = [
        Minutia(int(y), int(x), "termination" if cn[y, x] == 1 else "bifurcation")
        for y, x in zip(ys, xs)
    ]

    # prune termination pairs that are close on the same skeleton component
    terms = [m for m in minutiae if m.kind == "termination"]
    if len(terms) >= 2:
        labels, _ = label(pixels, structure=np.ones((3, 3)))
        drop = set()
        for i in range(len(terms)):
            for j in range(i + 1, len(terms)):
                a, b = terms[i], terms[j]
                if labels[a.y, a.x] != labels[b.y, b.x]:
                    continue
                if math.hypot(a.y - b.y, a.x - b.x) < PRUNE_DIST:
                    drop.add(a)
                    drop.add(b)
        if drop:
            minutiae = [m for m in minutiae if m not in drop]
    return sorted(minutiae)


# ---------------------------------------------------------------------------
# matching


def match(orig: list, comp: list, threshold: float = 3.0) -> MinutiaeReport:
    """Greedy nearest-first one-to-one assignment across both kinds.

    Pairs within the pixel threshold are matched in ascending distance order
    (ties broken by the original minutia's (y, x), then the compressed one's);
    matched same-kind minutiae are kept, different-kind are type changes.
    """
    pairs = []
    for i, a in enumerate(orig):
        for j, b in enumerate(comp):
            d = math.hypot(a.y - b.y, a.x - b.x)
            if d <= threshold:
                pairs.append((d, a.y, a.x, b.y, b.x, i, j))
    pairs.sort()
    used_a = set()
    used_b = set()
    rep = MinutiaeReport(
        orig_t=sum(m.kind == "termination" for m in orig),
        orig_b=sum(m.kind == "bifurcation" for m in orig),
        comp_t=sum(m.kind == "termination" for m in comp),
        comp_b=sum(m.kind == "bifurcation" for m in comp),
    )
    for d, ay, ax, by, bx, i, j in pairs:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        a, b = orig[i], comp[j]
        if a.kind == b.kind:
            if a.kind == "termination":
                rep.kept_t += 1
            else:
                rep.kept_b += 1
        elif a.kind == "termination":
            rep.changed_t += 1  # termination became a bifurcation
        else:
            rep.changed_b += 1  # bifurcation became a termination
    for i, a in enumerate(orig):
        if i not in used_a:
            if a.kind == "termination":
                rep.lost_t += 1
            else:
                rep.lost_b += 1
    for j, b in enumerate(comp):
        if j not in used_b:
            if b.kind == "termination":
                rep.extra_t += 1
            else:
                rep.extra_b += 1
    rep.check_consistency()
    return rep


def extract_from_image(img: np.ndarray, border_margin: int = BORDER_MARGIN) -> list:
    """Full pipeline: enhance, thin, extract."""
    return extract(skeletonize(enhance(img)), border_margin)


def evaluate_pair(original: np.ndarray, compressed: np.ndarray) -> MinutiaeReport:
    """Minutiae preservation report between an original and its reconstruction.

    Enhancement failure on the original propagates (nothing to evaluate
    against); on the compressed side it means compression destroyed the ridge
    structure, which is reported as every original minutia lost.
    """
    original = np.asarray(original)
    compressed = np.asarray(compressed)
    if original.shape != compressed.shape:
        raise ShapeError(
            f"image shapes differ: {original.shape} vs {compressed.shape}"
        )
    orig_minutiae = extract_from_image(original)
    try:
        comp_minutiae = extract_from_image(compressed)
    except NoRidgeStructureError:
        comp_minutiae = []
    return match(orig_minutiae, comp_minutiae)
