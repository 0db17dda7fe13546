"""Benchmark drivers and report writers (CSV/JSON plus rendered figures).

Reports are deterministic: rows are sorted by (codec, quality, image id) and
carry no timestamps; run-time information goes to the logger instead.

External results are ingested from CSV with columns
``image_id, codec, bytes, psnr, ssim``.  A codec value of the form
``name@quality`` groups rows into the rate points of one curve; a bare name
yields a single aggregate point.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import codec as fpc
from . import minutiae as fpm
from . import wavelet as fpw
from .data import CorpusIndex, load_gray
from .quality import RDCurve, RDPoint, bd_metrics, psnr, ssim

__all__ = [
    "CodecSpec",
    "run_rd_bench",
    "run_minutiae_bench",
    "write_rd_report",
    "write_minutiae_report",
    "read_external_csv",
]

log = logging.getLogger(__name__)


@dataclass
class CodecSpec:
    """One codec to benchmark: either weight files or wavelet ratios."""

    kind: str  # "finger-msh" | "wavelet"
    label: str
    weights: list | None = None  # list[ModelWeights], one per quality
    ratios: list | None = None  # list[float]

    def runs(self):
        if self.kind == "finger-msh":
            for w in self.weights:
                yield (f"lambda={w.lambda_tag:g}" if w.lambda_tag else w.model_id[:8]), w
        elif self.kind == "wavelet":
            for r in self.ratios:
                yield f"ratio={r:g}", r
        else:
            raise ValueError(f"unknown codec kind {self.kind!r}")


def _encode_one(spec: CodecSpec, quality, img):
    """Returns (compressed bytes count, reconstruction)."""
    if spec.kind == "finger-msh":
        res = fpc.encode_full(img, quality)  # quality is the weights object
        return res.bitstream.total_bytes, res.recon
    bs = fpw.encode_baseline(img, fpw.WaveletConfig(target_ratio=quality))
    return bs.total_bytes, fpw.decode_baseline(bs)


def _iter_images(index: CorpusIndex):
    for entry in index:
        yield entry.image_id, load_gray(entry.path)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_rd_bench(index: CorpusIndex, specs: list, threads: int = 1):
    """Per-image RD rows for every (codec, quality, image)."""
    rows = []
    failures = 0
    images = list(_iter_images(index))
    for spec in specs:
        for qlabel, q in spec.runs():

            def work(item):
                image_id, img = item
                try:
                    nbytes, recon = _encode_one(spec, q, img)
                except Exception as e:  # per-file failure accounting
                    log.error("%s %s %s failed: %s", spec.label, qlabel, image_id, e)
                    return None
                return {
                    "codec": spec.label,
                    "quality": qlabel,
                    "image_id": image_id,
                    "bytes": nbytes,
                    "bpp": 8.0 * nbytes / img.size,
                    "psnr": psnr(img, recon),
                    "ssim": ssim(img, recon),
                }

            results = _pool_map(work, images, threads)
            failures += sum(r is None for r in results)
            rows.extend(r for r in results if r is not None)
    rows.sort(key=lambda r: (r["codec"], r["quality"], r["image_id"]))
    return rows, failures


def aggregate_rd(rows: list) -> list:
    """Mean bpp/PSNR/SSIM per (codec, quality); infinite PSNR excluded."""
    keys = sorted({(r["codec"], r["quality"]) for r in rows})
    out = []
    for codec_label, quality in keys:
        grp = [r for r in rows if r["codec"] == codec_label and r["quality"] == quality]
        finite = [r["psnr"] for r in grp if np.isfinite(r["psnr"])]
        out.append(
            {
                "codec": codec_label,
                "quality": quality,
                "images": len(grp),
                "mean_bpp": float(np.mean([r["bpp"] for r in grp])),
                "mean_psnr_db": float(np.mean(finite)) if finite else float("nan"),
                "mean_ssim": float(np.mean([r["ssim"] for r in grp])),
                "psnr_inf_excluded": len(grp) - len(finite),
            }
        )
    return out


def read_external_csv(path) -> list:
    """Ingest externally produced results; bpp is joined from corpus images."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "codec": rec["codec"],
                    "image_id": rec["image_id"],
                    "bytes": int(rec["bytes"]),
                    "psnr": float(rec["psnr"]),
                    "ssim": float(rec["ssim"]),
                }
            )
    return rows


def external_to_rd_rows(ext_rows: list, index: CorpusIndex) -> list:
    sizes = {e.image_id: None for e in index}
    out = []
    for rec in ext_rows:
        if rec["image_id"] not in sizes:
            raise ValueError(f"external row references unknown image {rec['image_id']!r}")
    for entry in index:
        sizes[entry.image_id] = load_gray(entry.path).size
    for rec in ext_rows:
        name, _, quality = rec["codec"].partition("@")
        out.append(
            {
                "codec": name,
                "quality": quality or "external",
                "image_id": rec["image_id"],
                "bytes": rec["bytes"],
                "bpp": 8.0 * rec["bytes"] / sizes[rec["image_id"]],
                "psnr": rec["psnr"],
                "ssim": rec["ssim"],
            }
        )
    out.sort(key=lambda r: (r["codec"], r["quality"], r["image_id"]))
    return out


def curves_from_aggregate(agg: list) -> dict:
    by_codec = {}
    for row in agg:
        by_codec.setdefault(row["codec"], []).append(row)
    curves = {}
    for label, rows in by_codec.items():
        pts = [
            RDPoint(r["mean_bpp"], r["mean_psnr_db"], r["mean_ssim"])
            for r in rows
            if np.isfinite(r["mean_psnr_db"])
        ]
        if pts:
            curves[label] = RDCurve(label, tuple(pts))
    return curves


def bd_summary(agg: list, anchor_label: str) -> dict:
    curves = curves_from_aggregate(agg)
    if anchor_label not in curves:
        raise ValueError(f"anchor codec {anchor_label!r} has no RD curve")
    anchor = curves[anchor_label]
    comparisons = []
    for label in sorted(curves):
        if label == anchor_label:
            continue
        entry = {"codec": label}
        for key in ("psnr", "ssim"):
            try:
                out = bd_metrics(anchor, curves[label], quality_key=key)
                entry[f"bd_rate_percent_{key}"] = out["bd_rate_percent"]
                entry[f"bd_{key}"] = out["bd_quality"]
            except ValueError as e:
                entry[f"bd_rate_percent_{key}"] = None
                entry[f"bd_{key}"] = None
                entry.setdefault("errors", []).append(f"{key}: {e}")
        comparisons.append(entry)
    return {"anchor": anchor_label, "comparisons": comparisons}


# ---------------------------------------------------------------------------
# minutiae benchmark


def run_minutiae_bench(index: CorpusIndex, specs: list, threads: int = 1):
    """Per-image minutiae reports joined with rate and SSIM."""
    rows = []
    skipped = 0
    failures = 0
    images = list(_iter_images(index))
    for spec in specs:
        for qlabel, q in spec.runs():

            def work(item):
                image_id, img = item
                try:
                    nbytes, recon = _encode_one(spec, q, img)
                    rep = fpm.evaluate_pair(img, recon)
                except fpm.NoRidgeStructureError as e:
                    log.warning("%s %s %s skipped: %s", spec.label, qlabel, image_id, e)
                    return "skipped"
                except Exception as e:
                    log.error("%s %s %s failed: %s", spec.label, qlabel, image_id, e)
                    return None
                return {
                    "codec": spec.label,
                    "quality": qlabel,
                    "image_id": image_id,
                    "bpp": 8.0 * nbytes / img.size,
                    "ssim": ssim(img, recon),
                    "kept_t": rep.kept_t,
                    "kept_b": rep.kept_b,
                    "extra_t": rep.extra_t,
                    "extra_b": rep.extra_b,
                    "changed_t": rep.changed_t,
                    "changed_b": rep.changed_b,
                    "lost_t": rep.lost_t,
                    "lost_b": rep.lost_b,
                    "orig_t": rep.orig_t,
                    "orig_b": rep.orig_b,
                    "comp_t": rep.comp_t,
                    "comp_b": rep.comp_b,
                }

            results = _pool_map(work, images, threads)
            skipped += sum(r == "skipped" for r in results)
            failures += sum(r is None for r in results)
            rows.extend(r for r in results if isinstance(r, dict))
    rows.sort(key=lambda r: (r["codec"], r["quality"], r["image_id"]))
    return rows, skipped, failures


_COUNT_FIELDS = (
    "kept_t",
    "kept_b",
    "extra_t",
    "extra_b",
    "changed_t",
    "changed_b",
    "lost_t",
    "lost_b",
    "orig_t",
    "orig_b",
    "comp_t",
    "comp_b",
)


def aggregate_minutiae(rows: list, skipped: int = 0) -> list:
    keys = sorted({(r["codec"], r["quality"]) for r in rows})
    out = []
    for codec_label, quality in keys:
        grp = [r for r in rows if r["codec"] == codec_label and r["quality"] == quality]
        entry = {
            "codec": codec_label,
            "quality": quality,
            "images": len(grp),
            "skipped": skipped,
            "mean_bpp": float(np.mean([r["bpp"] for r in grp])),
            "mean_ssim": float(np.mean([r["ssim"] for r in grp])),
        }
        for f in _COUNT_FIELDS:
            entry[f"mean_{f}"] = float(np.mean([r[f] for r in grp]))
        orig_total = entry["mean_orig_t"] + entry["mean_orig_b"]
        kept_total = entry["mean_kept_t"] + entry["mean_kept_b"]
        entry["kept_fraction"] = kept_total / orig_total if orig_total else 1.0
        entry["mean_extra"] = entry["mean_extra_t"] + entry["mean_extra_b"]
        entry["mean_changed"] = entry["mean_changed_t"] + entry["mean_changed_b"]
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# writers


def _write_csv(path: Path, rows: list, fields: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fields})


def _plot_rd(agg: list, key: str, ylabel: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.2))
    by_codec = {}
    for row in agg:
        by_codec.setdefault(row["codec"], []).append(row)
    for label in sorted(by_codec):
        rows = sorted(by_codec[label], key=lambda r: r["mean_bpp"])
        x = [r["mean_bpp"] for r in rows]
        y = [r[key] for r in rows]
        ax.plot(x, y, marker="o", label=label)
    ax.set_xlabel("rate [bpp]")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_rd_report(out_dir, rows: list, anchor: str | None = None) -> dict:
    """rd_points.csv + rd_curves.csv + bd_summary.json + RD figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    point_fields = ["codec", "quality", "image_id", "bytes", "bpp", "psnr", "ssim"]
    _write_csv(out_dir / "rd_points.csv", rows, point_fields)
    agg = aggregate_rd(rows)
    agg_fields = [
        "codec",
        "quality",
        "images",
        "mean_bpp",
        "mean_psnr_db",
        "mean_ssim",
        "psnr_inf_excluded",
    ]
    _write_csv(out_dir / "rd_curves.csv", agg, agg_fields)
    summary = {}
    if anchor:
        summary = bd_summary(agg, anchor)
        (out_dir / "bd_summary.json").write_text(json.dumps(summary, indent=2))
    _plot_rd(agg, "mean_psnr_db", "PSNR [dB]", out_dir / "rd_psnr.png")
    _plot_rd(agg, "mean_ssim", "SSIM", out_dir / "rd_ssim.png")
    return summary


def _plot_minutiae(agg: list, xkey: str, xlabel: str, path: Path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    panels = [
        ("kept_fraction", "kept fraction"),
        ("mean_extra", "extra minutiae"),
        ("mean_changed", "changed type"),
    ]
    by_codec = {}
    for row in agg:
        by_codec.setdefault(row["codec"], []).append(row)
    for ax, (key, ylabel) in zip(axes, panels):
        for label in sorted(by_codec):
            rows = sorted(by_codec[label], key=lambda r: r[xkey])
            ax.plot([r[xkey] for r in rows], [r[key] for r in rows], marker="o", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
    axes[0].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_minutiae_report(out_dir, rows: list, skipped: int = 0) -> list:
    """minutiae.csv + minutiae_summary.json + preservation figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fields = ["codec", "quality", "image_id", "bpp", "ssim", *_COUNT_FIELDS]
    _write_csv(out_dir / "minutiae.csv", rows, fields)
    agg = aggregate_minutiae(rows, skipped)
    (out_dir / "minutiae_summary.json").write_text(json.dumps(agg, indent=2))
    if agg:
        _plot_minutiae(agg, "mean_bpp", "rate [bpp]", out_dir / "minutiae_vs_rate.png")
        _plot_minutiae(agg, "mean_ssim", "SSIM", out_dir / "minutiae_vs_ssim.png")
    return agg
