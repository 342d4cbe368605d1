"""Command-line entry point."""
from __future__ import annotations

import argparse
import sys

from .conll import CorpusError
from .export import ExportConfig, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ets-export",
        description=(
            "Run a token-classification encoder over a two-column CoNLL "
            "corpus and write an ETS1 token stream."
        ),
    )
    parser.add_argument("--model", required=True,
                        help="model identifier or local model directory")
    parser.add_argument("--corpus", required=True,
                        help="two-column token/tag corpus file")
    parser.add_argument("--out", required=True, help="output ETS1 path")
    parser.add_argument("--dataset-id", default="corpus")
    parser.add_argument("--max-length", type=int, default=128,
                        help="subword budget per encoder window")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--tag-map",
                        help="two-column file mapping corpus tags to O/B/I")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = ExportConfig(
        model=args.model,
        corpus=args.corpus,
        out=args.out,
        dataset_id=args.dataset_id,
        max_length=args.max_length,
        batch_size=args.batch_size,
        tag_map=args.tag_map,
    )
    try:
        summary = export(config)
    except (CorpusError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.out}: {summary['sentences']} sentences, "
        f"{summary['tokens']} tokens, dim {summary['dim']}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
