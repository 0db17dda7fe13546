"""Torch version of the hyperprior codec's four transforms.

Layer geometry mirrors the inference side exactly (stride-2 5x5 analysis and
synthesis stacks, 3x3 + two stride-2 5x5 hyper transforms, LeakyReLU 0.01);
sigma is exp-parameterised and floored so exported weights behave identically
when loaded by the codec.
"""

from __future__ import annotations

import torch
from torch import nn

SIGMA_MIN = 0.11
LEAKY_SLOPE = 0.01


def _act():
    return nn.LeakyReLU(LEAKY_SLOPE)


class HyperpriorAutoencoder(nn.Module):
    def __init__(self, n_latent: int = 48, n_hyper: int = 64):
        super().__init__()
        n, m = n_latent, n_hyper
        self.n_latent = n
        self.n_hyper = m
        self.analysis = nn.Sequential(
            nn.Conv2d(1, n, 5, 2, 2), _act(),
            nn.Conv2d(n, n, 5, 2, 2), _act(),
            nn.Conv2d(n, n, 5, 2, 2), _act(),
            nn.Conv2d(n, n, 5, 2, 2),
        )
        self.synthesis = nn.Sequential(
            nn.ConvTranspose2d(n, n, 5, 2, 2, 1), _act(),
            nn.ConvTranspose2d(n, n, 5, 2, 2, 1), _act(),
            nn.ConvTranspose2d(n, n, 5, 2, 2, 1), _act(),
            nn.ConvTranspose2d(n, 1, 5, 2, 2, 1),
        )
        self.hyper_analysis = nn.Sequential(
            nn.Conv2d(n, m, 3, 1, 1), _act(),
            nn.Conv2d(m, m, 5, 2, 2), _act(),
            nn.Conv2d(m, m, 5, 2, 2),
        )
        self.hyper_synthesis = nn.Sequential(
            nn.ConvTranspose2d(m, m, 5, 2, 2, 1), _act(),
            nn.ConvTranspose2d(m, m, 5, 2, 2, 1), _act(),
            nn.Conv2d(m, 2 * n, 3, 1, 1),
        )
        self._init_weights()

    def _init_weights(self) -> None:
        # signal-preserving init for the leaky-relu stacks; the default torch
        # init attenuates activations badly over eight conv layers
        for mod in self.modules():
            if isinstance(mod, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(
                    mod.weight, a=LEAKY_SLOPE, nonlinearity="leaky_relu"
                )
                nn.init.zeros_(mod.bias)
        # start the reconstruction at mid-gray instead of black
        nn.init.constant_(self.synthesis[-1].bias, 0.5)

    def entropy_params(self, z: torch.Tensor):
        out = self.hyper_synthesis(z)
        mu, raw = out.chunk(2, dim=1)
        sigma = torch.clamp(torch.exp(raw), min=SIGMA_MIN)
        return mu, sigma

    def forward(self, x: torch.Tensor, noise: bool = True):
        """Full pass with either additive-noise or hard-rounding quantization."""
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        if noise:
            z_hat = z + torch.rand_like(z) - 0.5
            y_hat = y + torch.rand_like(y) - 0.5
        else:
            z_hat = torch.round(z)
            y_hat = torch.round(y)
        mu, sigma = self.entropy_params(z_hat)
        x_hat = self.synthesis(y_hat)
        return x_hat, y_hat, z_hat, mu, sigma


def gaussian_bits_per_element(y_hat, mu, sigma) -> torch.Tensor:
    """Mean -log2 P(y_hat) under N(mu, sigma) discretized to unit bins."""
    upper = torch.special.ndtr((y_hat + 0.5 - mu) / sigma)
    lower = torch.special.ndtr((y_hat - 0.5 - mu) / sigma)
    p = torch.clamp(upper - lower, min=2.0**-40)
    return -torch.log2(p).mean()
