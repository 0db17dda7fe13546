import numpy as np
import pytest
import torch

from fpcodec.data import make_synthetic_corpus
from fptrainer.data import CropDataset, scan_manifest
from fptrainer.train import TrainConfig, train


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinycorpus")
    return make_synthetic_corpus(
        root, subjects=5, fingers=1, samples=2, height=192, width=192, seed=9
    )


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=0.0)
    with pytest.raises(ValueError):
        TrainConfig(lr_stop=1e-3, lr0=1e-4)
    cfg = TrainConfig(lam=0.013)
    assert cfg.lr0 == 1e-4 and cfg.max_epochs == 1000
    assert cfg.plateau_patience == 20 and cfg.lr_decay == 0.5 and cfg.lr_stop == 5e-6


def test_scan_manifest_splits(tiny_corpus):
    items = scan_manifest(tiny_corpus)
    assert len(items) == 10
    by = {}
    for it in items:
        by.setdefault(it.split, set()).add(it.subject_id)
    assert (len(by["train"]), len(by["val"]), len(by["test"])) == (3, 1, 1)


def test_crop_dataset_deterministic(tiny_corpus):
    items = [i for i in scan_manifest(tiny_corpus) if i.split == "train"]
    ds = CropDataset(items, crop=128, train=True, seed=4, crops_per_image=2)
    ds.set_epoch(3)
    a = ds[1].clone()
    b = ds[1].clone()
    torch.testing.assert_close(a, b)
    ds.set_epoch(4)
    c = ds[1]
    assert not torch.equal(a, c)  # different epoch, different crop
    assert a.shape == (1, 128, 128)


def test_short_training_decreases_loss_and_is_deterministic(tiny_corpus, tmp_path):
    def run(tag):
        cfg = TrainConfig(
            lam=0.013,
            max_epochs=3,
            batch_size=4,
            seed=11,
            n_latent=8,
            n_hyper=12,
            crop=128,
            crops_per_image=2,
            lr0=1e-3,
        )
        return train(cfg, tiny_corpus, tmp_path / f"{tag}.fpmw")

    first = run("a")
    assert first.final_val_loss < first.first_val_loss
    second = run("b")
    assert second.final_val_loss == pytest.approx(first.final_val_loss, abs=1e-6)
    # the log carries both quantization views per epoch
    assert all(np.isfinite(s.val_loss_noisy) and np.isfinite(s.val_loss_hard) for s in first.history)


def test_divergence_aborts(tiny_corpus, tmp_path):
    cfg = TrainConfig(
        lam=0.013,
        max_epochs=2,
        batch_size=4,
        seed=0,
        n_latent=8,
        n_hyper=12,
        crops_per_image=1,
        lr0=1e30,  # guaranteed blow-up
    )
    with pytest.raises(RuntimeError, match="diverged"):
        train(cfg, tiny_corpus, tmp_path / "x.fpmw")
