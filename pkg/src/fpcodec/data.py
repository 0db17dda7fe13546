"""Corpus handling: grayscale I/O, crop and split rules, synthetic fingerprints.

A corpus is described by a manifest JSON ``{"root": ..., "pattern": ...,
"subjects": [...]}`` where ``pattern`` is a regex with named groups
``subject``, ``finger`` and ``sample`` matched against paths relative to
``root``.  The default pattern matches the ``s<subject>/f<finger>_<sample>``
tree that :func:`make_synthetic_corpus` writes; point it at other
subject/finger/sample layouts by overriding the pattern.  Splits are a pure
function of subject order: the first 60% of subjects train, the next 20%
validate, the rest test.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .tensor import ShapeError

__all__ = [
    "CorpusEntry",
    "CorpusIndex",
    "DEFAULT_PATTERN",
    "load_gray",
    "save_gray",
    "center_crop",
    "split",
    "gen_synthetic_fingerprint",
    "make_synthetic_corpus",
    "load_manifest",
    "scan_corpus",
]

log = logging.getLogger(__name__)

DEFAULT_PATTERN = r"s(?P<subject>\d+)/f(?P<finger>\d+)_(?P<sample>\d+)\.(?:png|pgm)$"

# ITU-R BT.601 luma weights for incidental RGB inputs
_LUMA = np.array([0.299, 0.587, 0.114])


def load_gray(path) -> np.ndarray:
    """Load an 8-bit grayscale PNG or PGM as a (H, W) uint8 array.

    RGB inputs are converted through BT.601 luma and flagged in the log.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix != ".png":
        raise ValueError(f"unsupported image format: {path.name}")
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        log.warning("converting RGB image %s to grayscale via BT.601 luma", path.name)
        arr = np.round(arr[..., :3].astype(np.float64) @ _LUMA)
        arr = np.clip(arr, 0, 255).astype(np.uint8)
    if arr.dtype != np.uint8:
        raise ValueError(f"{path.name}: expected 8-bit pixels, got {arr.dtype}")
    return arr


def save_gray(img: np.ndarray, path) -> None:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 (H, W) image, got {img.dtype} {img.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".pgm":
        _write_pgm(img, path)
    elif path.suffix.lower() == ".png":
        Image.fromarray(img, mode="L").save(path)
    else:
        raise ValueError(f"unsupported image format: {path.name}")


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path.name}: not a binary PGM (P5) file")
    # header tokens may be separated by whitespace and '#' comments
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path.name}: malformed PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path.name}: only 8-bit PGM supported, maxval={maxval}")
    pixels = data[pos : pos + w * h]
    if len(pixels) != w * h:
        raise ValueError(f"{path.name}: PGM payload truncated")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def _write_pgm(img: np.ndarray, path: Path) -> None:
    h, w = img.shape
    path.write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def center_crop(img: np.ndarray, side: int = 320) -> np.ndarray:
    """Centered side x side window; offsets floor((H-side)/2), floor((W-side)/2)."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h < side or w < side:
        raise ShapeError(f"image {h}x{w} smaller than crop side {side}")
    oy = (h - side) // 2
    ox = (w - side) // 2
    return img[oy : oy + side, ox : ox + side]


# ---------------------------------------------------------------------------
# corpus index


@dataclass(frozen=True)
class CorpusEntry:
    subject_id: int
    finger_id: int
    sample_id: int
    path: Path
    split: str = ""

    @property
    def image_id(self) -> str:
        return f"s{self.subject_id:03d}/f{self.finger_id:02d}_{self.sample_id:02d}"


@dataclass
class CorpusIndex:
    entries: list = field(default_factory=list)

    def subset(self, split_name: str) -> "CorpusIndex":
        if split_name in ("", "all"):
            return self
        return CorpusIndex([e for e in self.entries if e.split == split_name])

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def split(index: CorpusIndex) -> CorpusIndex:
    """Assign train/val/test by subject order: floor 60% / floor 20% / rest.

    Pure in the subject ids, so no subject ever spans splits.
    """
    subjects = sorted({e.subject_id for e in index.entries})
    n = len(subjects)
    n_train = int(n * 0.6)
    n_val = int(n * 0.2)
    assignment = {}
    for i, s in enumerate(subjects):
        if i < n_train:
            assignment[s] = "train"
        elif i < n_train + n_val:
            assignment[s] = "val"
        else:
            assignment[s] = "test"
    entries = [
        CorpusEntry(e.subject_id, e.finger_id, e.sample_id, e.path, assignment[e.subject_id])
        for e in index.entries
    ]
    entries.sort(key=lambda e: (e.subject_id, e.finger_id, e.sample_id))
    return CorpusIndex(entries)


def load_manifest(path) -> dict:
    manifest = json.loads(Path(path).read_text())
    if "root" not in manifest:
        raise ValueError("manifest missing 'root'")
    root = Path(manifest["root"])
    if not root.is_absolute():
        root = Path(path).parent / root
    manifest["root"] = root
    manifest.setdefault("pattern", DEFAULT_PATTERN)
    return manifest


def scan_corpus(manifest: dict) -> CorpusIndex:
    """Walk the manifest root, match the pattern, and assign splits."""
    root = Path(manifest["root"])
    pattern = re.compile(manifest.get("pattern", DEFAULT_PATTERN))
    wanted = manifest.get("subjects")
    entries = []
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        m = pattern.search(p.relative_to(root).as_posix())
        if not m:
            continue
        subject = int(m.group("subject"))
        if wanted is not None and subject not in wanted:
            continue
        entries.append(
            CorpusEntry(subject, int(m.group("finger")), int(m.group("sample")), p)
        )
    return split(CorpusIndex(entries))


# ---------------------------------------------------------------------------
# synthetic fingerprints


def gen_synthetic_fingerprint(seed: int, height: int = 320, width: int = 320) -> np.ndarray:
    """Deterministic fingerprint-like test image.

    Gently curving dark ridges from a smooth phase field; phase vortices act
    as ridge endings/splits so the minutiae pipeline finds real landmarks.
    Identical bytes for identical (seed, height, width) on any platform.
    """
    if height < 128 or width < 128:
        raise ValueError("synthetic fingerprints need height, width >= 128")
    rng = np.random.RandomState(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0

    theta0 = rng.uniform(0, np.pi)
    period = rng.uniform(7.0, 10.0)
    phase = xx * np.cos(theta0) + yy * np.sin(theta0)

    # low-frequency waviness so the orientation field drifts smoothly
    for _ in range(3):
        ang = rng.uniform(0, np.pi)
        freq = rng.uniform(0.002, 0.008)
        amp = rng.uniform(1.0, 3.0)
        ph = rng.uniform(0, 2 * np.pi)
        phase += amp * np.sin(2 * np.pi * freq * (xx * np.cos(ang) + yy * np.sin(ang)) + ph)

    # each phase vortex is a ridge dislocation, i.e. a minutia
    n_vortices = 10
    for _ in range(n_vortices):
        vy = cy + rng.uniform(-0.30, 0.30) * height
        vx = cx + rng.uniform(-0.30, 0.30) * width
        sign = 1.0 if rng.rand() < 0.5 else -1.0
        phase += sign * period * np.arctan2(yy - vy, xx - vx) / (2 * np.pi)

    img = 127.5 - 95.0 * np.cos(2 * np.pi * phase / period)

    texture = gaussian_filter(rng.randn(height, width), 8.0)
    peak = np.abs(texture).max()
    if peak > 0:
        texture /= peak
    img *= 1.0 + 0.06 * texture

    mask = ((yy - cy) / (0.42 * height)) ** 2 + ((xx - cx) / (0.40 * width)) ** 2 <= 1.0
    background = 235.0 + 4.0 * gaussian_filter(rng.randn(height, width), 4.0)
    img = np.where(mask, img, background)
    img = gaussian_filter(img, 0.8)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def _mix_seed(seed: int, *parts: int) -> int:
    h = seed & 0xFFFFFFFF
    for p in parts:
        h = (h * 1000003 + p + 0x9E3779B9) & 0xFFFFFFFF
    return h


def make_synthetic_corpus(
    root,
    subjects: int = 10,
    fingers: int = 2,
    samples: int = 2,
    height: int = 320,
    width: int = 320,
    seed: int = 0,
) -> Path:
    """Write a synthetic corpus tree plus its manifest; returns the manifest path."""
    root = Path(root)
    for s in range(1, subjects + 1):
        for f in range(fingers):
            for k in range(samples):
                img = gen_synthetic_fingerprint(_mix_seed(seed, s, f, k), height, width)
                save_gray(img, root / f"s{s:03d}" / f"f{f:02d}_{k:02d}.png")
    manifest = {"root": ".", "pattern": DEFAULT_PATTERN}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
