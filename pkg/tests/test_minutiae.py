import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import label

from fpcodec.data import gen_synthetic_fingerprint
from fpcodec.minutiae import (
    BinaryImage,
    Minutia,
    NoRidgeStructureError,
    crossing_number_map,
    enhance,
    evaluate_pair,
    extract,
    extract_from_image,
    match,
    skeletonize,
)
from fpcodec.tensor import ShapeError


def cn_bruteforce(pattern_bits):
    """Literal CN formula on an explicit 8-neighborhood bit list (P2..P9)."""
    seq = list(pattern_bits) + [pattern_bits[0]]
    return sum(abs(seq[i] - seq[i + 1]) for i in range(8)) // 2


def test_crossing_number_all_256_patterns():
    # classifier must agree with the brute-force formula on every neighborhood
    offsets = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
    for pattern in range(256):
        bits = [(pattern >> i) & 1 for i in range(8)]
        img = np.zeros((5, 5), bool)
        img[2, 2] = True
        for bit, (dy, dx) in zip(bits, offsets):
            if bit:
                img[2 + dy, 2 + dx] = True
        got = crossing_number_map(img)[2, 2]
        assert got == cn_bruteforce(bits), f"pattern {pattern:08b}"


def test_line_segment_two_terminations():
    img = np.zeros((21, 31), bool)
    img[10, 8:23] = True
    mins = extract(img, border_margin=2)
    assert [m.kind for m in mins] == ["termination", "termination"]
    assert {(m.y, m.x) for m in mins} == {(10, 8), (10, 22)}


def test_y_junction_bifurcation():
    img = np.zeros((21, 21), bool)
    img[4:11, 10] = True  # stem from the north
    for i in range(1, 7):  # two diagonal branches
        img[10 + i, 10 - i] = True
        img[10 + i, 10 + i] = True
    mins = extract(img, border_margin=2)
    kinds = sorted(m.kind for m in mins)
    assert kinds == ["bifurcation", "termination", "termination", "termination"]
    bif = [m for m in mins if m.kind == "bifurcation"][0]
    assert (bif.y, bif.x) == (10, 10)


def test_interior_pixel_not_minutia():
    img = np.zeros((11, 31), bool)
    img[5, 2:29] = True
    cn = crossing_number_map(img)
    assert cn[5, 15] == 2
    mins = extract(img, border_margin=1)
    assert all(m.x in (2, 28) for m in mins)


def test_close_termination_pair_pruned():
    img = np.zeros((21, 21), bool)
    img[10, 8:12] = True  # 4-px fragment: endpoints 3 px apart on one ridge
    assert extract(img, border_margin=2) == []


def test_extract_respects_border_margin_and_mask():
    img = np.zeros((40, 40), bool)
    img[5, 1:15] = True  # endpoint at x=1 sits inside the margin
    mask = np.ones((40, 40), bool)
    mask[:, 30:] = False
    img[20, 20:39] = True  # right endpoint outside the mask
    mins = extract(BinaryImage(img, mask), border_margin=4)
    spots = {(m.y, m.x) for m in mins}
    assert (5, 1) not in spots
    assert all(x < 30 for _, x in spots)


# ---------------------------------------------------------------------------
# matching


def T(y, x):
    return Minutia(y, x, "termination")


def B(y, x):
    return Minutia(y, x, "bifurcation")


def test_match_kept_at_distance_283():
    rep = match([T(10, 10)], [T(12, 12)], threshold=3.0)
    assert rep.kept_t == 1
    assert rep.extra == rep.changed == rep.lost == 0


def test_match_lost_and_extra_at_distance_4():
    rep = match([T(10, 10)], [T(10, 14)], threshold=3.0)
    assert rep.lost_t == 1 and rep.extra_t == 1
    assert rep.kept == rep.changed == 0


def test_match_type_change():
    rep = match([T(10, 10)], [B(10, 11)], threshold=3.0)
    assert rep.changed_t == 1
    assert rep.kept == rep.extra == rep.lost == 0


def test_match_greedy_nearest_first():
    # two originals compete for one compressed point; nearest wins
    rep = match([T(0, 0), T(0, 2)], [T(0, 1)], threshold=3.0)
    assert rep.kept_t == 1 and rep.lost_t == 1


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n_orig=st.integers(0, 25),
    n_comp=st.integers(0, 25),
)
def test_match_properties(seed, n_orig, n_comp):
    rng = np.random.RandomState(seed)

    def points(n):
        out = []
        for _ in range(n):
            kind = "termination" if rng.rand() < 0.5 else "bifurcation"
            out.append(Minutia(int(rng.randint(0, 30)), int(rng.randint(0, 30)), kind))
        return out

    orig, comp = points(n_orig), points(n_comp)
    rep = match(orig, comp, threshold=3.0)
    rep.check_consistency()
    # matched pairs only exist where some cross pair is within the threshold
    within = sum(
        1
        for a in orig
        for b in comp
        if (a.y - b.y) ** 2 + (a.x - b.x) ** 2 <= 9.0
    )
    assert rep.kept + rep.changed <= min(len(orig), len(comp))
    if within == 0:
        assert rep.kept + rep.changed == 0
    # swap symmetry: extra <-> lost per kind, kept and changed totals preserved
    swapped = match(comp, orig, threshold=3.0)
    assert (rep.extra_t, rep.extra_b) == (swapped.lost_t, swapped.lost_b)
    assert (rep.lost_t, rep.lost_b) == (swapped.extra_t, swapped.extra_b)
    assert rep.kept == swapped.kept
    assert rep.changed == swapped.changed


def test_match_exact_duplicates_all_kept():
    rng = np.random.RandomState(3)
    pts = [
        Minutia(int(rng.randint(0, 50)), int(rng.randint(0, 50)), k)
        for k in ("termination", "bifurcation") * 6
    ]
    rep = match(pts, list(pts), threshold=3.0)
    assert rep.kept + rep.changed == len(pts)
    assert rep.extra == rep.lost == 0


def test_match_threshold_is_respected():
    # no pair further apart than the threshold is ever matched
    orig = [T(0, 0), B(10, 10)]
    comp = [T(0, 4), B(10, 14)]
    rep = match(orig, comp, threshold=3.0)
    assert rep.kept == rep.changed == 0
    assert rep.lost == 2 and rep.extra == 2


# ---------------------------------------------------------------------------
# skeletonization


def test_thick_bar_thins_to_line():
    img = np.zeros((15, 40), bool)
    img[6:9, 5:35] = True
    sk = skeletonize(img).pixels
    assert sk.sum() <= 32
    labels, count = label(sk, structure=np.ones((3, 3)))
    assert count == 1
    # one pixel per column over the bar's interior
    assert all(sk[:, x].sum() == 1 for x in range(7, 33))


def test_thin_line_unchanged():
    img = np.zeros((9, 30), bool)
    img[4, 3:27] = True
    np.testing.assert_array_equal(skeletonize(img).pixels, img)


def test_component_count_preserved_on_blobs():
    from scipy.ndimage import gaussian_filter

    rng = np.random.RandomState(0)
    eight = np.ones((3, 3))
    for trial in range(100):
        blobs = gaussian_filter(rng.randn(80, 80), 3.0) > 0.12
        before = label(blobs, structure=eight)[1]
        after = label(skeletonize(blobs).pixels, structure=eight)[1]
        assert before == after, f"trial {trial}: {before} -> {after}"


# ---------------------------------------------------------------------------
# enhancement


def test_enhance_sinusoid_period_by_autocorrelation():
    yy, xx = np.mgrid[0:256, 0:256].astype(np.float64)
    img = np.clip(np.round(127.5 - 95 * np.cos(2 * np.pi * xx / 8)), 0, 255).astype(np.uint8)
    out = enhance(img)
    sig = out.pixels[128].astype(np.float64)
    sig -= sig.mean()
    ac = np.correlate(sig, sig, "full")[sig.size - 1 :]
    lag = 3 + int(np.argmax(ac[3:20]))
    assert 7 <= lag <= 9


def test_enhance_constant_image_raises():
    with pytest.raises(NoRidgeStructureError):
        enhance(np.full((128, 128), 77, np.uint8))


def test_enhance_rejects_bad_input():
    with pytest.raises(ShapeError):
        enhance(np.zeros((64, 64), np.float32))


def test_enhance_idempotent_within_2pct():
    img = gen_synthetic_fingerprint(1, 320, 320)
    first = enhance(img)
    rescaled = np.where(first.pixels, 30, 220).astype(np.uint8)
    second = enhance(rescaled)
    flips = float(np.mean(first.pixels != second.pixels))
    assert flips <= 0.02


# ---------------------------------------------------------------------------
# pair evaluation


def straight_ridges(h=256, w=256, period=12):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 127.5 - 95.0 * np.cos(2 * np.pi * yy / period)
    cy, cx = (h - 1) / 2, (w - 1) / 2
    mask = ((yy - cy) / (0.45 * h)) ** 2 + ((xx - cx) / (0.45 * w)) ** 2 <= 1
    return np.clip(np.round(np.where(mask, img, 235.0)), 0, 255).astype(np.uint8)


def test_evaluate_pair_identity():
    img = gen_synthetic_fingerprint(12, 320, 320)
    total = len(extract_from_image(img))
    assert total >= 5
    rep = evaluate_pair(img, img)
    assert rep.kept == total
    assert rep.extra == rep.changed == rep.lost == 0
    assert rep.kept_fraction == 1.0


def test_evaluate_pair_severed_ridge():
    orig = straight_ridges()
    assert extract_from_image(orig) == []
    severed = orig.copy()
    severed[126:139, 80:176] = 222  # erase one ridge's full period band
    rep = evaluate_pair(orig, severed)
    assert rep.extra_t == 2
    assert rep.extra_b == rep.changed == rep.lost == rep.kept == 0
    # and the run is deterministic
    rep2 = evaluate_pair(orig, severed)
    assert rep == rep2


def test_evaluate_pair_blank_compressed_loses_all():
    img = gen_synthetic_fingerprint(13, 320, 320)
    total = len(extract_from_image(img))
    rep = evaluate_pair(img, np.full_like(img, 128))
    assert rep.lost == total
    assert rep.kept == rep.extra == rep.changed == 0


def test_evaluate_pair_blank_original_propagates():
    img = gen_synthetic_fingerprint(13, 320, 320)
    with pytest.raises(NoRidgeStructureError):
        evaluate_pair(np.full_like(img, 128), img)


def test_evaluate_pair_shape_mismatch():
    with pytest.raises(ShapeError):
        evaluate_pair(np.zeros((64, 64), np.uint8), np.zeros((64, 65), np.uint8))
