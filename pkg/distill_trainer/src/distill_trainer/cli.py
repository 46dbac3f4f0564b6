"""Command-line entry point: train a student, serve a checkpoint."""

from __future__ import annotations

import argparse
import sys

from .data import DataError
from .serve import serve
from .train import LoadError, TrainingDiverged, TrainSpec, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distill-trainer",
        description="Train and serve a distilled student query optimizer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fine-tune on distillation pair files")
    tr.add_argument("--data", nargs="+", required=True, help="pair files (JSONL)")
    tr.add_argument("--out", required=True, help="checkpoint output directory")
    tr.add_argument("--base", default="base", help="model preset: small | base")
    tr.add_argument("--epochs", type=int, default=3)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--batch-size", type=int, default=4)
    tr.add_argument("--seed", type=int, default=0)

    sv = sub.add_parser("serve", help="serve a checkpoint over chat completions")
    sv.add_argument("--checkpoint", required=True)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8040)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            checkpoint = train(
                TrainSpec(
                    data_paths=args.data,
                    out_dir=args.out,
                    base_model=args.base,
                    epochs=args.epochs,
                    learning_rate=args.lr,
                    batch_size=args.batch_size,
                    seed=args.seed,
                )
            )
            print(
                f"checkpoint: {checkpoint.path} "
                f"(pairs={checkpoint.manifest['pairs']}, "
                f"final_loss={checkpoint.manifest['final_loss']:.6f})"
            )
            return 0
        if args.command == "serve":
            serve(args.checkpoint, host=args.host, port=args.port)
            return 0
    except (DataError, LoadError, TrainingDiverged, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
