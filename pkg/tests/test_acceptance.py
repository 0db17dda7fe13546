"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are fixed here and nowhere else.
"""

import math
import time

import numpy as np
import pytest

from fpcodec.codec import decode, encode_full
from fpcodec.data import gen_synthetic_fingerprint
from fpcodec.entropy import (
    GaussianCodingModel,
    decode_symbols,
    encode_symbols,
    gaussian_channel_table,
    FactorizedPrior,
    quantize,
)
from fpcodec.minutiae import Minutia, crossing_number_map, evaluate_pair, match
from fpcodec.model import make_test_weights
from fpcodec.quality import RDCurve, RDPoint, bd_metrics, psnr, ssim
from fpcodec.wavelet import WaveletConfig, decode_baseline, dwt_forward, dwt_inverse, encode_baseline


def _passed(name):
    print(f"\nACCEPTANCE {name}: PASS")


def test_entropy_coder_losslessness():
    """1000 randomized sequences, both model families, exact round trip and
    per-stream rate within [cross-entropy - 8 bits, + 256 bits]; < 30 s."""
    rng = np.random.RandomState(2024)
    start = time.time()
    priors = [
        FactorizedPrior([gaussian_channel_table(-8, 8, sigma=s)]) for s in (0.4, 1.3, 4.0)
    ]
    for trial in range(1000):
        n = int(rng.randint(1, 300))
        if trial % 2 == 0:
            prior = priors[trial % 3]
            syms = rng.randint(-12, 13, size=(1, n))
            data = encode_symbols(syms, prior)
            back = decode_symbols(data, prior, n)
            cross = sum(prior.symbol_bits(0, int(v)) for v in syms.ravel())
        else:
            mu = rng.randn(n) * 3.0
            sigma = np.abs(rng.randn(n)) * rng.uniform(0.3, 8.0) + 0.05
            model = GaussianCodingModel(mu, sigma)
            syms = quantize(mu + rng.randn(n) * sigma * 1.4).astype(np.int64)
            data = encode_symbols(syms, model)
            back = decode_symbols(data, GaussianCodingModel(mu, sigma), n)
            cross = model.cost_bits(syms)
        assert np.array_equal(back, np.asarray(syms).ravel()), f"trial {trial}"
        bits = len(data) * 8
        assert cross - 8 <= bits <= cross + 256, f"trial {trial}: {bits} vs {cross:.1f}"
    elapsed = time.time() - start
    assert elapsed < 30, f"entropy acceptance took {elapsed:.1f}s"
    _passed(f"entropy losslessness (1000 streams, {elapsed:.1f}s)")


def test_codec_round_trip_50_images():
    """50 seed-0 encodes of 320x320 synthetics: decode bit-identical to the
    encoder-side reconstruction, per-stream rate within the coder-overhead
    bound of the model-cost estimates; < 2 min."""
    w = make_test_weights()  # defaults: N=128, M=192, seed 0
    start = time.time()
    for seed in range(50):
        img = gen_synthetic_fingerprint(seed, 320, 320)
        res = encode_full(img, w)
        out = decode(res.bitstream, w)
        assert np.array_equal(out, res.recon), f"seed {seed}: decoder mismatch"
        seg_z, seg_y = res.bitstream.segments
        assert res.coded_bits_z - 8 <= len(seg_z) * 8 <= res.coded_bits_z + 256
        assert res.coded_bits_y - 8 <= len(seg_y) * 8 <= res.coded_bits_y + 256
        est_bpp = (res.rate_y * res.y_elements + res.rate_z * res.z_elements) / img.size
        assert res.bitstream.bpp >= est_bpp
    elapsed = time.time() - start
    assert elapsed < 120, f"codec acceptance took {elapsed:.1f}s"
    _passed(f"codec round trip (50 images, {elapsed:.1f}s)")


def test_crossing_number_oracle():
    """All 256 neighborhood patterns classified identically to the CN formula."""
    offsets = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
    for pattern in range(256):
        bits = [(pattern >> i) & 1 for i in range(8)]
        img = np.zeros((5, 5), bool)
        img[2, 2] = True
        for bit, (dy, dx) in zip(bits, offsets):
            if bit:
                img[2 + dy, 2 + dx] = True
        seq = bits + [bits[0]]
        want = sum(abs(seq[i] - seq[i + 1]) for i in range(8)) // 2
        assert crossing_number_map(img)[2, 2] == want, f"pattern {pattern:08b}"
    _passed("crossing-number oracle (256 patterns)")


def test_minutiae_identity_100_images():
    """evaluate_pair(x, x) over 100 synthetics: kept 100%, nothing else."""
    total_minutiae = 0
    for seed in range(100):
        img = gen_synthetic_fingerprint(seed, 320, 320)
        rep = evaluate_pair(img, img)
        assert rep.extra == 0 and rep.changed == 0 and rep.lost == 0, f"seed {seed}"
        assert rep.kept == rep.orig_t + rep.orig_b, f"seed {seed}"
        total_minutiae += rep.kept
    _passed(f"minutiae identity (100 images, {total_minutiae} minutiae kept)")


def test_matching_threshold_semantics():
    """The three distance-threshold fixtures behave exactly as stated."""
    t = lambda y, x: Minutia(y, x, "termination")
    b = lambda y, x: Minutia(y, x, "bifurcation")
    rep = match([t(10, 10)], [t(12, 12)], threshold=3.0)  # distance 2.83
    assert (rep.kept_t, rep.extra, rep.changed, rep.lost) == (1, 0, 0, 0)
    rep = match([t(10, 10)], [t(14, 10)], threshold=3.0)  # distance 4
    assert (rep.lost_t, rep.extra_t, rep.kept, rep.changed) == (1, 1, 0, 0)
    rep = match([t(10, 10)], [b(10, 11)], threshold=3.0)  # type change
    assert (rep.changed_t, rep.kept, rep.extra, rep.lost) == (1, 0, 0, 0)
    _passed("matching threshold semantics")


def test_bd_metric_closed_forms():
    """Identical -> 0%; doubled rate -> +100% +-0.01; +1 dB -> +1.000 +-0.001."""
    rates = [0.2, 0.45, 0.9, 1.8, 3.5]
    qual = [27.0, 30.5, 34.0, 37.0, 39.5]
    a = RDCurve("a", tuple(RDPoint(r, q, 0.9) for r, q in zip(rates, qual)))
    same = bd_metrics(a, a)
    assert same["bd_rate_percent"] == pytest.approx(0.0, abs=1e-9)
    doubled = RDCurve("d", tuple(RDPoint(2 * r, q, 0.9) for r, q in zip(rates, qual)))
    assert bd_metrics(a, doubled)["bd_rate_percent"] == pytest.approx(100.0, abs=0.01)
    shifted = RDCurve("s", tuple(RDPoint(r, q + 1.0, 0.9) for r, q in zip(rates, qual)))
    assert bd_metrics(a, shifted)["bd_quality"] == pytest.approx(1.0, abs=0.001)
    _passed("BD-metric closed forms")


def test_psnr_ssim_anchors():
    """MSE=1 -> 48.1308 dB +-1e-3; identical images -> SSIM 1.0 +-1e-9."""
    a = np.random.RandomState(0).randint(0, 255, (64, 64)).astype(np.uint8)
    assert psnr(a, (a + 1).astype(np.uint8)) == pytest.approx(48.1308, abs=1e-3)
    img = np.random.RandomState(1).randint(0, 256, (64, 64), np.uint8)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)
    assert psnr(img, img) == math.inf
    _passed("PSNR/SSIM anchors")


def test_wavelet_baseline():
    """9/7 perfect reconstruction <= 1e-6 on 200 random images; PSNR strictly
    monotone over ratios {5,10,20,30,40} on 20 fixtures."""
    rng = np.random.RandomState(7)
    for trial in range(200):
        h = 16 * rng.randint(2, 6)
        w = 16 * rng.randint(2, 6)
        img = rng.rand(h, w) * 255
        rec = dwt_inverse(dwt_forward(img, 4))
        assert np.abs(rec - img).max() <= 1e-6, f"trial {trial}"
    for seed in range(20):
        img = gen_synthetic_fingerprint(1000 + seed, 256, 256)
        vals = []
        for ratio in (5, 10, 20, 30, 40):
            bs = encode_baseline(img, WaveletConfig(target_ratio=ratio))
            achieved = img.size / bs.total_bytes
            assert abs(achieved - ratio) / ratio <= 0.05, f"seed {seed} ratio {ratio}"
            vals.append(psnr(img, decode_baseline(bs)))
        assert all(x > y for x, y in zip(vals, vals[1:])), f"seed {seed}: {vals}"
    _passed("wavelet baseline (PR + monotone PSNR)")
