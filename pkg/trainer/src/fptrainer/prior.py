"""Learnable per-channel factorized prior and its integer CDF table export.

Each hyper channel gets a logistic distribution with trainable location and
scale; likelihoods integrate it over unit bins, which works both for the
uniform-noise training proxy (continuous inputs) and rounded integers.  At
export the prior is evaluated on the integer grid [round(loc)-64,
round(loc)+64] and quantized to 16-bit frequencies with an escape slot, the
format the codec's weight file carries.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

FREQ_TOTAL = 1 << 16
TABLE_HALF_RANGE = 64


class LogisticFactorizedPrior(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.loc = nn.Parameter(torch.zeros(channels))
        self.log_scale = nn.Parameter(torch.zeros(channels))

    def _cdf(self, v: torch.Tensor) -> torch.Tensor:
        loc = self.loc.view(1, -1, 1, 1)
        scale = torch.exp(self.log_scale).view(1, -1, 1, 1).clamp(min=1e-3)
        return torch.sigmoid((v - loc) / scale)

    def bits_per_element(self, z_hat: torch.Tensor) -> torch.Tensor:
        p = self._cdf(z_hat + 0.5) - self._cdf(z_hat - 0.5)
        p = torch.clamp(p, min=2.0**-40)
        return -torch.log2(p).mean()


def quantize_pmf(p: np.ndarray) -> np.ndarray:
    """Largest-remainder 16-bit frequency quantization, every slot >= 1.

    Same contract as the codec side: frequencies sum to exactly 2^16 and the
    rounding order is deterministic.
    """
    p = np.maximum(np.asarray(p, dtype=np.float64), 0.0)
    n = p.size
    total = p.sum()
    p = p / total if total > 0 else np.full(n, 1.0 / n)
    budget = FREQ_TOTAL - n
    scaled = p * budget
    freqs = np.floor(scaled).astype(np.int64) + 1
    short = FREQ_TOTAL - int(freqs.sum())
    if short > 0:
        frac = scaled - np.floor(scaled)
        order = np.lexsort((np.arange(n), -frac))
        freqs[order[:short]] += 1
    return freqs


def export_prior_tables(prior: LogisticFactorizedPrior) -> list:
    """Per-channel (s_min, s_max, cdf) tuples on the integer grid."""
    loc = prior.loc.detach().cpu().numpy().astype(np.float64)
    scale = np.clip(np.exp(prior.log_scale.detach().cpu().numpy()), 1e-3, None)
    tables = []
    for c in range(prior.channels):
        center = int(np.floor(np.abs(loc[c]) + 0.5) * np.sign(loc[c])) if loc[c] else 0
        s_min = center - TABLE_HALF_RANGE
        s_max = center + TABLE_HALF_RANGE
        ks = np.arange(s_min, s_max + 1, dtype=np.float64)
        hi = 1.0 / (1.0 + np.exp(-(ks + 0.5 - loc[c]) / scale[c]))
        lo = 1.0 / (1.0 + np.exp(-(ks - 0.5 - loc[c]) / scale[c]))
        p_in = hi - lo
        p_escape = max(1.0 - p_in.sum(), 0.0)
        freqs = quantize_pmf(np.append(p_in, p_escape))
        cdf = np.concatenate([[0], np.cumsum(freqs)]).astype(np.uint32)
        tables.append((s_min, s_max, cdf))
    return tables


def analytic_rate_bits_per_element(prior: LogisticFactorizedPrior, z_hat: torch.Tensor) -> float:
    """Trainer-side reference rate for the cross-component agreement check."""
    with torch.no_grad():
        return float(prior.bits_per_element(z_hat))
