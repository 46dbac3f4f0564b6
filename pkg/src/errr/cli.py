"""Command-line entry point: run, export-distill, ingest, report."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import load_run_config
from .errors import ErrrError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="errr",
        description="Pipelines and evaluation harness for retrieval-augmented QA",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a pipeline over a dataset slice")
    run.add_argument("--config", required=True, help="TOML run configuration")
    run.add_argument("--pipeline", help="direct | rag | rrr | errr (overrides config)")
    run.add_argument("--dataset", help="dataset name (overrides config)")
    run.add_argument("--limit", type=int, help="cap the number of questions")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--k", type=int, help="total retrieval budget (overrides config)")

    dist = sub.add_parser("export-distill", help="export teacher (input, target) pairs")
    dist.add_argument("--config", required=True)
    dist.add_argument("--dataset", help="dataset name (overrides config)")
    dist.add_argument("--limit", type=int)
    dist.add_argument("--out", help="output file for the pairs")

    ing = sub.add_parser("ingest", help="build and persist a dense index")
    ing.add_argument("--corpus", required=True, help="line-delimited corpus file")
    ing.add_argument("--out", required=True, help="index output directory")
    ing.add_argument("--dim", type=int, help="expected embedding dimensionality")

    rep = sub.add_parser("report", help="comparison table over transcript files")
    rep.add_argument("transcripts", nargs="+", help="transcripts.jsonl files")
    rep.add_argument("--out", help="write the table here instead of stdout")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except ErrrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "run":
        config = load_run_config(
            args.config,
            pipeline=args.pipeline,
            dataset=args.dataset,
            limit=args.limit,
            out_dir=args.out,
            total_k=args.k,
        )
        artifacts = harness.run_eval(config)
        print(f"transcripts: {artifacts.transcripts_path}")
        print(f"summary: {artifacts.summary_path}")
        print(f"report: {artifacts.report_path}")
        print(
            f"n={artifacts.summary.n} em={artifacts.summary.em:.4f} "
            f"f1={artifacts.summary.f1:.4f} "
            f"marginal_cost_usd={artifacts.marginal_cost_usd:.4f}"
        )
        return 0

    if args.command == "export-distill":
        config = load_run_config(
            args.config, dataset=args.dataset, limit=args.limit
        )
        written, skipped = harness.export_distillation(config, out_path=args.out)
        print(f"pairs written: {written}, skipped: {skipped}")
        return 0

    if args.command == "ingest":
        manifest = harness.ingest(args.corpus, args.out, dim=args.dim)
        print(f"ingested n={manifest['n']} dim={manifest['dim']} into {args.out}")
        return 0

    if args.command == "report":
        table = harness.report(args.transcripts)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(table)
        else:
            print(table, end="")
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
