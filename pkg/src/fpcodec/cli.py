"""Command-line surface: encode/decode, RD and minutiae benchmarks, fixtures.

Exit codes: 0 success, 1 partial per-file failures, 2 configuration error.
Benchmark commands write delimited data (CSV/JSON) and render the matching
figures next to them.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import codec as fpc
from . import data as fpd
from . import report as fpr
from .model import load_weights, make_test_weights, save_weights

log = logging.getLogger("fpcodec")


class ConfigError(Exception):
    pass


def _setup_logging(args) -> None:
    handlers = [logging.StreamHandler(sys.stderr)]
    if getattr(args, "log", None):
        handlers.append(logging.FileHandler(args.log))
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )


def _load_weight_files(paths_arg: str):
    weights = []
    for p in paths_arg.split(","):
        path = Path(p)
        if not path.exists():
            raise ConfigError(f"weights file not found: {path}")
        weights.append(load_weights(path.read_bytes()))
    return weights


def _corpus(args) -> fpd.CorpusIndex:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    index = fpd.scan_corpus(fpd.load_manifest(manifest_path)).subset(args.split)
    if not len(index):
        raise ConfigError(f"no images in split {args.split!r} of {manifest_path}")
    return index


def _build_specs(args) -> list:
    specs = []
    for kind in args.codec.split(","):
        kind = kind.strip()
        if kind == "finger-msh":
            if not args.weights:
                raise ConfigError("--codec finger-msh requires --weights")
            specs.append(
                fpr.CodecSpec(
                    kind="finger-msh",
                    label="finger-msh",
                    weights=_load_weight_files(args.weights),
                )
            )
        elif kind == "wavelet":
            ratios = [float(x) for x in (args.qualities or "5,10,20,30,40").split(",")]
            specs.append(fpr.CodecSpec(kind="wavelet", label="wavelet", ratios=ratios))
        elif kind == "external-csv":
            if not args.external_csv:
                raise ConfigError("--codec external-csv requires --external-csv")
        else:
            raise ConfigError(f"unknown codec {kind!r}")
    return specs


def cmd_encode(args) -> int:
    weights = _load_weight_files(args.weights)
    if len(weights) != 1:
        raise ConfigError("encode takes exactly one weights file")
    w = weights[0]
    index = _corpus(args)
    out_dir = Path(args.out)
    failures = 0
    for entry in index:
        try:
            img = fpd.load_gray(entry.path)
            bs = fpc.encode(img, w)
            dest = out_dir / f"{entry.image_id}.fpbs"
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(bs.to_bytes())
            print(f"{entry.image_id} bytes={bs.total_bytes} bpp={bs.bpp:.4f}")
        except Exception as e:
            log.error("encode %s failed: %s", entry.image_id, e)
            failures += 1
    return 1 if failures else 0


def cmd_decode(args) -> int:
    w = None
    if args.weights:
        weights = _load_weight_files(args.weights)
        if len(weights) != 1:
            raise ConfigError("decode takes exactly one weights file")
        w = weights[0]
    src = Path(args.inputs)
    files = sorted(src.rglob("*.fpbs")) if src.is_dir() else [src]
    if not files:
        raise ConfigError(f"no .fpbs files under {src}")
    out_dir = Path(args.out)
    failures = 0
    for f in files:
        try:
            bs = fpc.Bitstream.from_bytes(f.read_bytes())
            if bs.codec == fpc.CODEC_WAVELET:
                from .wavelet import decode_baseline

                img = decode_baseline(bs)
            elif w is None:
                raise ConfigError("hyperprior streams need --weights")
            else:
                img = fpc.decode(bs, w)
            rel = f.relative_to(src) if src.is_dir() else Path(f.name)
            dest = (out_dir / rel).with_suffix(".png")
            fpd.save_gray(img, dest)
            print(f"{rel.as_posix()} -> {dest.as_posix()}")
        except ConfigError:
            raise
        except Exception as e:
            log.error("decode %s failed: %s", f, e)
            failures += 1
    return 1 if failures else 0


def cmd_bench_rd(args) -> int:
    index = _corpus(args)
    specs = _build_specs(args)
    rows, failures = fpr.run_rd_bench(index, specs, threads=args.threads)
    if args.external_csv:
        ext = fpr.read_external_csv(args.external_csv)
        rows.extend(fpr.external_to_rd_rows(ext, index))
        rows.sort(key=lambda r: (r["codec"], r["quality"], r["image_id"]))
    if not rows:
        raise ConfigError("benchmark produced no rows")
    anchor = args.anchor
    labels = {r["codec"] for r in rows}
    if anchor and anchor not in labels:
        raise ConfigError(f"anchor {anchor!r} not among benchmarked codecs {sorted(labels)}")
    summary = fpr.write_rd_report(args.out, rows, anchor=anchor)
    if summary:
        for cmp_entry in summary["comparisons"]:
            log.info(
                "%s vs %s: bd-rate(psnr) %s%%, bd-psnr %s dB",
                cmp_entry["codec"],
                summary["anchor"],
                _fmt(cmp_entry.get("bd_rate_percent_psnr")),
                _fmt(cmp_entry.get("bd_psnr")),
            )
    print(f"wrote RD report to {args.out}")
    return 1 if failures else 0


def _fmt(v):
    return f"{v:.2f}" if isinstance(v, float) else "n/a"


def cmd_minutiae(args) -> int:
    index = _corpus(args)
    specs = _build_specs(args)
    rows, skipped, failures = fpr.run_minutiae_bench(index, specs, threads=args.threads)
    if not rows:
        raise ConfigError("benchmark produced no rows")
    fpr.write_minutiae_report(args.out, rows, skipped=skipped)
    print(f"wrote minutiae report to {args.out} (skipped {skipped})")
    return 1 if failures else 0


def cmd_make_corpus(args) -> int:
    manifest = fpd.make_synthetic_corpus(
        args.out,
        subjects=args.subjects,
        fingers=args.fingers,
        samples=args.samples,
        height=args.size,
        width=args.size,
        seed=args.seed,
    )
    print(f"wrote synthetic corpus manifest to {manifest}")
    return 0


def cmd_make_weights(args) -> int:
    w = make_test_weights(
        n_latent=args.n_latent,
        n_hyper=args.n_hyper,
        seed=args.seed,
        lambda_tag=args.lambda_tag,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_weights(w))
    print(f"wrote weights {w.model_id} to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpcodec",
        description="Fingerprint compression toolkit: hyperprior codec, wavelet "
        "baseline, RD and minutiae-preservation benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--manifest", required=True, help="corpus manifest JSON")
        p.add_argument("--split", default="test", help="train|val|test|all")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="parallel image workers")
        p.add_argument("--log", help="write a timestamped run log to this file")

    p = sub.add_parser("encode", help="encode a corpus split to .fpbs files")
    common(p)
    p.add_argument("--weights", required=True, help="weight file (.fpmw)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode .fpbs files to PNGs")
    p.add_argument("--weights", help="weight file (.fpmw); wavelet streams need none")
    p.add_argument("--in", dest="inputs", required=True, help=".fpbs file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--log", help="write a timestamped run log to this file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench-rd", help="rate-distortion benchmark and BD summary")
    common(p)
    p.add_argument("--codec", default="wavelet", help="comma list: finger-msh,wavelet,external-csv")
    p.add_argument("--weights", help="comma list of weight files for finger-msh")
    p.add_argument("--qualities", help="comma list of wavelet compression ratios")
    p.add_argument("--external-csv", help="externally produced results CSV")
    p.add_argument("--anchor", default=None, help="codec label to anchor BD metrics")
    p.set_defaults(func=cmd_bench_rd)

    p = sub.add_parser("minutiae", help="minutiae preservation benchmark")
    common(p)
    p.add_argument("--codec", default="wavelet", help="comma list: finger-msh,wavelet")
    p.add_argument("--weights", help="comma list of weight files for finger-msh")
    p.add_argument("--qualities", help="comma list of wavelet compression ratios")
    p.add_argument("--external-csv", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_minutiae)

    p = sub.add_parser("make-corpus", help="write a synthetic fingerprint corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=10)
    p.add_argument("--fingers", type=int, default=2)
    p.add_argument("--samples", type=int, default=2)
    p.add_argument("--size", type=int, default=320)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("make-weights", help="write deterministic test weights")
    p.add_argument("--out", required=True)
    p.add_argument("--n-latent", type=int, default=128)
    p.add_argument("--n-hyper", type=int, default=192)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda-tag", type=float, default=0.0)
    p.set_defaults(func=cmd_make_weights)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
