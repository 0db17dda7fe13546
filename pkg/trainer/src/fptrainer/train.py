"""End-to-end rate-distortion training with uniform-noise quantization.

The objective is lam * 255^2 * MSE + mean coded bits per latent element +
mean coded bits per hyper element.  Training uses additive uniform noise as
the quantization proxy; validation reports both the noisy objective and the
hard-rounding one, and the hard-rounding total drives the plateau schedule
(learning rate halves after ``plateau_patience`` epochs without improvement,
training stops once it reaches ``lr_stop``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .data import CropDataset, scan_manifest
from .export import export_weights
from .model import HyperpriorAutoencoder, gaussian_bits_per_element
from .prior import LogisticFactorizedPrior

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.0018, 0.0035, 0.0067, 0.013, 0.025, 0.0483, 0.0932)
DISTORTION_SCALE = 255.0**2


@dataclass
class TrainConfig:
    lam: float = 0.013
    max_epochs: int = 1000
    lr0: float = 1e-4
    plateau_patience: int = 20
    lr_decay: float = 0.5
    lr_stop: float = 5e-6
    batch_size: int = 8
    seed: int = 0
    n_latent: int = 48
    n_hyper: int = 64
    crop: int = 128
    crops_per_image: int = 4

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be > 0")
        if self.lr_stop >= self.lr0:
            raise ValueError("lr_stop must be below lr0")
        if self.lam not in LAMBDA_GRID:
            log.warning("lambda %g is outside the usual grid %s", self.lam, LAMBDA_GRID)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_loss_noisy: float
    val_loss_hard: float
    val_rate: float
    val_distortion: float


@dataclass
class TrainResult:
    weight_path: Path
    history: list = field(default_factory=list)
    model: object = None  # trained HyperpriorAutoencoder (in-memory handle)
    prior: object = None  # trained LogisticFactorizedPrior

    @property
    def first_val_loss(self) -> float:
        return self.history[0].val_loss_hard

    @property
    def final_val_loss(self) -> float:
        return self.history[-1].val_loss_hard


def _loss_terms(model, prior, x, lam, noise: bool):
    x_hat, y_hat, z_hat, mu, sigma = model(x, noise=noise)
    mse = torch.mean((x - x_hat) ** 2)
    rate_y = gaussian_bits_per_element(y_hat, mu, sigma)
    rate_z = prior.bits_per_element(z_hat)
    total = lam * DISTORTION_SCALE * mse + rate_y + rate_z
    return total, mse, rate_y, rate_z


def evaluate(model, prior, loader, lam: float, noise: bool):
    model.eval()
    totals = []
    rates = []
    dists = []
    with torch.no_grad():
        for x in loader:
            total, mse, ry, rz = _loss_terms(model, prior, x, lam, noise)
            totals.append(float(total))
            rates.append(float(ry + rz))
            dists.append(float(mse))
    n = max(len(totals), 1)
    return sum(totals) / n, sum(rates) / n, sum(dists) / n


def train(config: TrainConfig, manifest_path, out_path) -> TrainResult:
    """Train one rate point and export the weight file; returns the log."""
    torch.manual_seed(config.seed)
    items = scan_manifest(manifest_path)
    train_items = [i for i in items if i.split == "train"]
    val_items = [i for i in items if i.split == "val"]
    if not train_items or not val_items:
        raise ValueError("manifest must provide non-empty train and val splits")
    train_set = CropDataset(
        train_items,
        crop=config.crop,
        train=True,
        seed=config.seed,
        crops_per_image=config.crops_per_image,
    )
    val_set = CropDataset(val_items, crop=config.crop, train=False)
    train_loader = DataLoader(train_set, batch_size=config.batch_size, shuffle=False)
    val_loader = DataLoader(val_set, batch_size=config.batch_size, shuffle=False)

    model = HyperpriorAutoencoder(config.n_latent, config.n_hyper)
    prior = LogisticFactorizedPrior(config.n_hyper)
    params = list(model.parameters()) + list(prior.parameters())
    opt = torch.optim.Adam(params, lr=config.lr0, betas=(0.9, 0.999))
    sched = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt, factor=config.lr_decay, patience=config.plateau_patience
    )

    history = []
    for epoch in range(config.max_epochs):
        train_set.set_epoch(epoch)
        model.train()
        epoch_losses = []
        for x in train_loader:
            opt.zero_grad()
            total, mse, ry, rz = _loss_terms(model, prior, x, config.lam, noise=True)
            loss_val = float(total.detach())
            if not math.isfinite(loss_val):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: loss={loss_val}, "
                    f"mse={float(mse.detach())}, rate_y={float(ry.detach())}, "
                    f"rate_z={float(rz.detach())}"
                )
            total.backward()
            opt.step()
            epoch_losses.append(loss_val)
        val_noisy, _, _ = evaluate(model, prior, val_loader, config.lam, noise=True)
        val_hard, val_rate, val_dist = evaluate(
            model, prior, val_loader, config.lam, noise=False
        )
        lr = opt.param_groups[0]["lr"]
        stats = EpochStats(
            epoch=epoch,
            lr=lr,
            train_loss=sum(epoch_losses) / len(epoch_losses),
            val_loss_noisy=val_noisy,
            val_loss_hard=val_hard,
            val_rate=val_rate,
            val_distortion=val_dist,
        )
        history.append(stats)
        log.info(
            "epoch %d lr %.2e train %.4f val(noisy) %.4f val(hard) %.4f rate %.3f mse %.5f",
            epoch, lr, stats.train_loss, val_noisy, val_hard, val_rate, val_dist,
        )
        sched.step(val_hard)
        if opt.param_groups[0]["lr"] <= config.lr_stop:
            log.info("stopping: learning rate reached %.2e", opt.param_groups[0]["lr"])
            break

    path = export_weights(model, prior, config.lam, out_path)
    return TrainResult(weight_path=path, history=history, model=model, prior=prior)
