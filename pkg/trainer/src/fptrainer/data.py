"""Corpus access for training: manifest scan, grayscale loading, crops.

Reads the same manifest JSON the codec tools use ({root, pattern, subjects},
pattern a regex with subject/finger/sample groups) and yields [0, 1] float
tensors.  Splits follow the 60/20/20 subject-order rule.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

DEFAULT_PATTERN = r"s(?P<subject>\d+)/f(?P<finger>\d+)_(?P<sample>\d+)\.(?:png|pgm)$"


@dataclass(frozen=True)
class Item:
    subject_id: int
    path: Path
    split: str


def scan_manifest(manifest_path) -> list:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    root = Path(manifest["root"])
    if not root.is_absolute():
        root = manifest_path.parent / root
    pattern = re.compile(manifest.get("pattern", DEFAULT_PATTERN))
    wanted = manifest.get("subjects")
    found = []
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        m = pattern.search(p.relative_to(root).as_posix())
        if not m:
            continue
        subject = int(m.group("subject"))
        if wanted is not None and subject not in wanted:
            continue
        found.append((subject, p))
    subjects = sorted({s for s, _ in found})
    n = len(subjects)
    n_train, n_val = int(n * 0.6), int(n * 0.2)
    split_of = {}
    for i, s in enumerate(subjects):
        split_of[s] = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
    return [Item(s, p, split_of[s]) for s, p in found]


def load_tensor(path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr)[None]  # (1, H, W)


class CropDataset(torch.utils.data.Dataset):
    """Random crops (multiples of 64) for training; center crops for eval.

    ``crops_per_image`` multiplies the epoch length so small corpora still
    provide a useful number of optimizer steps per epoch.
    """

    def __init__(
        self,
        items: list,
        crop: int = 128,
        train: bool = True,
        seed: int = 0,
        crops_per_image: int = 1,
    ):
        if crop % 64:
            raise ValueError("crop size must be a multiple of 64")
        self.items = list(items)
        self.crop = crop
        self.train = train
        self.seed = seed
        self.crops_per_image = crops_per_image if train else 1
        self.epoch = 0
        self._cache = {}

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.items) * self.crops_per_image

    def _image(self, idx: int) -> torch.Tensor:
        if idx not in self._cache:
            self._cache[idx] = load_tensor(self.items[idx].path)
        return self._cache[idx]

    def __getitem__(self, idx: int) -> torch.Tensor:
        item_idx = idx % len(self.items)
        x = self._image(item_idx)
        _, h, w = x.shape
        c = self.crop
        if h < c or w < c:
            raise ValueError(f"{self.items[item_idx].path}: image smaller than crop {c}")
        if self.train:
            g = torch.Generator().manual_seed(
                (self.seed * 1_000_003 + self.epoch) * 1_000_003 + idx
            )
            oy = int(torch.randint(0, h - c + 1, (1,), generator=g))
            ox = int(torch.randint(0, w - c + 1, (1,), generator=g))
        else:
            oy, ox = (h - c) // 2, (w - c) // 2
        return x[:, oy : oy + c, ox : ox + c]
