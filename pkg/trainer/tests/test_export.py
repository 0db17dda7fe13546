import numpy as np
import pytest
import torch

from fpcodec.codec import decode, encode_full
from fpcodec.entropy import FREQ_TOTAL
from fpcodec.model import (
    analysis,
    hyper_analysis,
    hyper_synthesis,
    load_weights,
    synthesis,
)
from fptrainer.export import serialize_weights
from fptrainer.model import HyperpriorAutoencoder, gaussian_bits_per_element
from fptrainer.prior import LogisticFactorizedPrior, export_prior_tables, quantize_pmf


@pytest.fixture()
def small():
    torch.manual_seed(3)
    model = HyperpriorAutoencoder(8, 12)
    prior = LogisticFactorizedPrior(12)
    with torch.no_grad():
        prior.loc.copy_(torch.randn(12) * 2)
        prior.log_scale.copy_(torch.randn(12) * 0.3)
    return model, prior


def test_export_loads_in_codec_and_validates(small):
    model, prior = small
    blob = serialize_weights(model, prior, lambda_tag=0.013)
    w = load_weights(blob)  # runs all shape invariants
    assert (w.n_latent, w.n_hyper) == (8, 12)
    assert w.lambda_tag == pytest.approx(0.013)
    assert w.leaky_slope == pytest.approx(0.01)


def test_exported_forward_matches_torch(small):
    model, prior = small
    w = load_weights(serialize_weights(model, prior, 0.0))
    x = torch.rand(1, 1, 64, 64)
    with torch.no_grad():
        y_t = model.analysis(x)
        z_t = model.hyper_analysis(y_t)
        mu_t, sigma_t = model.entropy_params(torch.round(z_t))
        x_t = model.synthesis(torch.round(y_t)).clamp(0, 1)
    y = analysis(x[0].numpy(), w)
    np.testing.assert_allclose(y, y_t[0].numpy(), atol=1e-5)
    z = hyper_analysis(y, w)
    np.testing.assert_allclose(z, z_t[0].numpy(), atol=1e-5)
    mu, sigma = hyper_synthesis(np.round(z), w)
    np.testing.assert_allclose(mu, mu_t[0].numpy(), atol=1e-5)
    np.testing.assert_allclose(sigma, sigma_t[0].numpy(), atol=1e-4)
    x_rec = synthesis(np.round(y), w)
    np.testing.assert_allclose(x_rec, x_t[0].numpy(), atol=1e-5)


def test_exported_weights_drive_full_codec(small):
    model, prior = small
    w = load_weights(serialize_weights(model, prior, 0.0))
    rng = np.random.RandomState(0)
    img = rng.randint(0, 256, (128, 128), np.uint8)
    res = encode_full(img, w)
    out = decode(res.bitstream, w)
    np.testing.assert_array_equal(out, res.recon)


def test_prior_tables_valid(small):
    _, prior = small
    tables = export_prior_tables(prior)
    assert len(tables) == 12
    for s_min, s_max, cdf in tables:
        assert s_max - s_min == 128
        assert cdf[0] == 0 and cdf[-1] == FREQ_TOTAL
        diffs = np.diff(cdf.astype(np.int64))
        assert (diffs[:-1] >= 1).all()  # in-range symbols strictly increasing
        assert diffs[-1] >= 1  # escape kept codable
        assert int(diffs.sum()) == FREQ_TOTAL


def test_quantize_pmf_contract():
    rng = np.random.RandomState(1)
    for n in (1, 3, 129, 500):
        f = quantize_pmf(rng.dirichlet(np.ones(n)))
        assert int(f.sum()) == FREQ_TOTAL
        assert (f >= 1).all()


def test_trainer_gaussian_bits_matches_formula():
    import math

    torch.manual_seed(0)
    y = torch.round(torch.randn(50, dtype=torch.float64) * 2)
    mu = torch.randn(50, dtype=torch.float64)
    sigma = torch.rand(50, dtype=torch.float64) * 3 + 0.11
    got = float(gaussian_bits_per_element(y, mu, sigma))

    def phi(v):
        return 0.5 * (1 + math.erf(v / math.sqrt(2)))

    want = 0.0
    for yi, mi, si in zip(y.tolist(), mu.tolist(), sigma.tolist()):
        p = phi((yi + 0.5 - mi) / si) - phi((yi - 0.5 - mi) / si)
        want += -math.log2(max(p, 2.0**-40))
    assert got == pytest.approx(want / 50, rel=1e-5)
