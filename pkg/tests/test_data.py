import logging

import numpy as np
import pytest
from PIL import Image

from fpcodec.data import (
    CorpusEntry,
    CorpusIndex,
    center_crop,
    gen_synthetic_fingerprint,
    load_gray,
    load_manifest,
    make_synthetic_corpus,
    save_gray,
    scan_corpus,
    split,
)
from fpcodec.tensor import ShapeError


def test_pgm_roundtrip_byte_identical(tmp_path):
    img = np.random.RandomState(0).randint(0, 256, (37, 29), np.uint8)
    p = tmp_path / "x.pgm"
    save_gray(img, p)
    first = p.read_bytes()
    np.testing.assert_array_equal(load_gray(p), img)
    save_gray(load_gray(p), p)
    assert p.read_bytes() == first


def test_pgm_with_comment(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n4 3\n255\n" + img.tobytes())
    np.testing.assert_array_equal(load_gray(p), img)


def test_png_roundtrip(tmp_path):
    img = np.random.RandomState(1).randint(0, 256, (20, 21), np.uint8)
    p = tmp_path / "x.png"
    save_gray(img, p)
    np.testing.assert_array_equal(load_gray(p), img)


def test_rgb_converted_via_luma(tmp_path, caplog):
    rgb = np.zeros((4, 4, 3), np.uint8)
    rgb[..., 0] = 255  # pure red
    p = tmp_path / "rgb.png"
    Image.fromarray(rgb, "RGB").save(p)
    with caplog.at_level(logging.WARNING):
        out = load_gray(p)
    assert "BT.601" in caplog.text
    # round(0.299 * 255) == 76
    assert (out == 76).all()


def test_unsupported_format(tmp_path):
    with pytest.raises(ValueError):
        load_gray(tmp_path / "x.tiff")


def test_center_crop_offsets():
    img = np.zeros((328, 356), np.uint8)
    img[4, 18] = 1  # the expected top-left corner of the window
    out = center_crop(img, 320)
    assert out.shape == (320, 320)
    assert out[0, 0] == 1


def test_center_crop_identity_and_error():
    img = np.random.RandomState(2).randint(0, 256, (320, 320), np.uint8)
    np.testing.assert_array_equal(center_crop(img, 320), img)
    with pytest.raises(ShapeError):
        center_crop(np.zeros((319, 320), np.uint8), 320)


def make_index(num_subjects):
    entries = [
        CorpusEntry(s, f, 0, None)
        for s in range(1, num_subjects + 1)
        for f in range(2)
    ]
    return CorpusIndex(entries)


def test_split_500_subjects():
    idx = split(make_index(500))
    by = {}
    for e in idx:
        by.setdefault(e.split, set()).add(e.subject_id)
    assert len(by["train"]) == 300
    assert len(by["val"]) == 100
    assert len(by["test"]) == 100
    # subject 301 (301st in order) falls in val
    assert 301 in by["val"]
    assert max(by["train"]) == 300


def test_split_10_subjects_and_disjoint():
    idx = split(make_index(10))
    by = {}
    for e in idx:
        by.setdefault(e.split, set()).add(e.subject_id)
    assert (len(by["train"]), len(by["val"]), len(by["test"])) == (6, 2, 2)
    assert not (by["train"] & by["val"] or by["val"] & by["test"] or by["train"] & by["test"])


def test_split_deterministic():
    a = split(make_index(17))
    b = split(make_index(17))
    assert [(e.subject_id, e.split) for e in a] == [(e.subject_id, e.split) for e in b]


def test_synthetic_deterministic_and_distinct():
    a = gen_synthetic_fingerprint(5, 160, 192)
    b = gen_synthetic_fingerprint(5, 160, 192)
    c = gen_synthetic_fingerprint(6, 160, 192)
    assert a.shape == (160, 192)
    np.testing.assert_array_equal(a, b)
    assert (a != c).any()
    with pytest.raises(ValueError):
        gen_synthetic_fingerprint(1, 100, 320)


def test_make_corpus_and_scan(tmp_path):
    manifest_path = make_synthetic_corpus(tmp_path, subjects=5, fingers=1, samples=2, height=128, width=128)
    manifest = load_manifest(manifest_path)
    idx = scan_corpus(manifest)
    assert len(idx) == 10
    splits = {e.split for e in idx}
    assert splits == {"train", "val", "test"}
    # 5 subjects -> 3/1/1
    subj = {}
    for e in idx:
        subj.setdefault(e.split, set()).add(e.subject_id)
    assert (len(subj["train"]), len(subj["val"]), len(subj["test"])) == (3, 1, 1)
    img = load_gray(idx.entries[0].path)
    assert img.shape == (128, 128)


def test_manifest_subject_filter(tmp_path):
    manifest_path = make_synthetic_corpus(tmp_path, subjects=4, fingers=1, samples=1, height=128, width=128)
    manifest = load_manifest(manifest_path)
    manifest["subjects"] = [1, 2]
    idx = scan_corpus(manifest)
    assert sorted({e.subject_id for e in idx}) == [1, 2]


def test_crop_then_codec_precondition():
    # 320 = 5 * 64, so cropped images satisfy the codec's divisibility rule
    img = gen_synthetic_fingerprint(9, 328, 356)
    out = center_crop(img, 320)
    assert out.shape[0] % 64 == 0 and out.shape[1] % 64 == 0
