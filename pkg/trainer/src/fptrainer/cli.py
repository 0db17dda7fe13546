"""Train one or more rate points from a corpus manifest."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .train import LAMBDA_GRID, TrainConfig, train


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fpcodec-train",
        description="Desk-scale RD training; exports fpcodec weight files.",
    )
    parser.add_argument("--manifest", required=True, help="corpus manifest JSON")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--lambdas",
        default="0.0067,0.025,0.0932",
        help=f"comma list of trade-off values (grid: {LAMBDA_GRID})",
    )
    parser.add_argument("--epochs", type=int, default=1000)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--n-latent", type=int, default=48)
    parser.add_argument("--n-hyper", type=int, default=64)
    parser.add_argument("--crop", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for lam in (float(x) for x in args.lambdas.split(",")):
        config = TrainConfig(
            lam=lam,
            max_epochs=args.epochs,
            batch_size=args.batch_size,
            seed=args.seed,
            n_latent=args.n_latent,
            n_hyper=args.n_hyper,
            crop=args.crop,
        )
        tag = f"{lam:g}".replace(".", "p")
        result = train(config, args.manifest, out_dir / f"finger_msh_lam{tag}.fpmw")
        log_path = out_dir / f"train_log_lam{tag}.csv"
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "lr", "train_loss", "val_loss_noisy", "val_loss_hard", "val_rate", "val_distortion"]
            )
            for s in result.history:
                writer.writerow(
                    [s.epoch, s.lr, s.train_loss, s.val_loss_noisy, s.val_loss_hard, s.val_rate, s.val_distortion]
                )
        print(f"lambda {lam:g}: {result.weight_path} ({len(result.history)} epochs)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
