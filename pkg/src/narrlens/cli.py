"""Command line entry point: ``narrlens {train,classify,explain,evaluate}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline


def _predictions_arg(values: list[str]) -> dict[str, str]:
    runs = {}
    for k, value in enumerate(values):
        name, sep, path = value.partition("=")
        if not sep:
            name, path = (Path(value).stem if len(values) > 1 else "run"), value
        if name in runs:
            raise SystemExit(f"duplicate run name {name!r}")
        runs[name] = path
    return runs


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline YAML config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--offline", action="store_true",
                        help="deterministic embedder and mock chat backend; no network")
    common.add_argument("--models", help="override paths.models")
    common.add_argument("--output-dir", help="override paths.outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="narrlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train the per-domain classifiers")

    p = sub.add_parser("classify", parents=[common], help="assign narratives and sub-narratives")
    p.add_argument("--articles", help="directory of .txt articles (default: paths.articles)")
    p.add_argument("--output", help="predictions file")
    p.add_argument("--domain", choices=("CC", "URW"), help="route every article to one model")

    p = sub.add_parser("explain", parents=[common], help="justify dominant narratives")
    p.add_argument("--input", required=True, help="`<filename>\\t<dominant>\\t<subs>` lines")
    p.add_argument("--articles", help="directory of .txt articles (default: paths.articles)")
    p.add_argument("--output", help="explanations file")

    p = sub.add_parser("evaluate", parents=[common], help="score predictions and explanations")
    p.add_argument("--predictions", action="append", required=True,
                   help="predictions file, optionally NAME=PATH; repeat to compare runs")
    p.add_argument("--gold", required=True)
    p.add_argument("--explanations")
    p.add_argument("--references")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pipeline.load_config(args.config).with_overrides(args.seed, args.offline)
        if args.models:
            cfg.paths.models = Path(args.models)
        if args.output_dir:
            cfg.paths.outputs = Path(args.output_dir)

        if args.command == "train":
            for domain, path in pipeline.run_train(cfg).items():
                print(f"{domain}\t{path}")
            return 0
        if args.command == "classify":
            run = pipeline.run_classify(cfg, args.articles or pipeline._require(
                cfg.paths.articles, "articles directory"), args.output, domain=args.domain)
            print(f"predictions: {run.predictions}")
            if run.failed:
                print(f"{len(run.failed)} article(s) failed, see {run.errors}", file=sys.stderr)
                return 1
            return 0
        if args.command == "explain":
            run = pipeline.run_explain(cfg, args.input, args.articles, args.output)
            print(f"explanations: {run.explanations}")
            if run.failed:
                print(f"{len(run.failed)} article(s) failed, see {run.errors}", file=sys.stderr)
                return 1
            return 0
        if args.command == "evaluate":
            written = pipeline.run_evaluate(cfg, _predictions_arg(args.predictions), args.gold,
                                            args.explanations, args.references, args.format)
            for path in written.values():
                print(f"wrote {path}")
            return 0
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"narrlens: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
