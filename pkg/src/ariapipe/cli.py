"""Command-line interface: `ariapipe scan|filter|tokenize|pack|views|stats|nt-xent`.

Exit codes: 0 success, 1 partial per-file failures (see the stage's error
manifest in the output directory), 2 configuration or fatal errors. Set
ARIAPIPE_LOG to DEBUG/INFO/WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .pipeline import PipelineConfig


def _configure_logging() -> None:
    level = os.environ.get("ARIAPIPE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.format is not None:
        overrides["format"] = args.format
    if getattr(args, "disjoint_views", False):
        overrides["disjoint_views"] = True
    if getattr(args, "stream_base", None) is not None:
        overrides["stream_base"] = args.stream_base
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--workers", type=int, default=None, help="override worker count")
    parser.add_argument(
        "--format", choices=("text", "binary"), default=None, help="override shard format"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ariapipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("scan", "parse every input file and write the catalog and status report"),
        ("filter", "apply quality filters and composer dedup; write the keep manifest"),
        ("tokenize", "tokenize kept files into a token shard"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("pack", help="pack token shards into fixed-length sequences")
    _add_common(p)
    p.add_argument("--mode", choices=("pretrain", "finetune"), default="pretrain")

    p = sub.add_parser("views", help="draw contrastive view pairs for kept files")
    _add_common(p)
    p.add_argument(
        "--disjoint-views",
        action="store_true",
        help="force the two slices of each pair to be non-overlapping",
    )
    p.add_argument(
        "--stream-base",
        type=int,
        default=None,
        help="offset added to per-file RNG stream ids",
    )

    p = sub.add_parser("stats", help="summarize token shards")
    p.add_argument("shards", nargs="+", help="shard files to summarize")

    p = sub.add_parser("nt-xent", help="evaluate the contrastive loss on embeddings")
    p.add_argument("embeddings", help="newline-delimited embedding records")
    p.add_argument("--tau", type=float, default=0.1, help="temperature (default 0.1)")
    p.add_argument("--no-grad-check", action="store_true", help="skip the gradient check")

    p = sub.add_parser("vocab", help="dump the token vocabulary or instrument table")
    p.add_argument("--out", default=None, help="write to a file instead of stdout")
    p.add_argument(
        "--instruments",
        action="store_true",
        help="emit the program-to-class table as JSON instead of the vocabulary",
    )

    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except BrokenPipeError:
        return 0


def _dispatch(args: argparse.Namespace) -> int:
    try:
        if args.command == "vocab":
            if args.instruments:
                from .notes import PROGRAM_CLASS_RANGES

                text = json.dumps(
                    [
                        {"program_min": lo, "program_max": hi, "class": name}
                        for lo, hi, name in PROGRAM_CLASS_RANGES
                    ]
                    + [{"channel": 10, "class": "drum"}],
                    indent=2,
                )
            else:
                from .tokenizer import default_vocabulary

                text = default_vocabulary().dumps()
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text if text.endswith("\n") else text + "\n")
            return 0
        if args.command == "stats":
            stats = pipeline.cmd_stats([Path(p) for p in args.shards])
            print(json.dumps(stats, indent=2, sort_keys=True))
            return 0
        if args.command == "nt-xent":
            result = pipeline.cmd_ntxent(
                Path(args.embeddings), args.tau, grad_check=not args.no_grad_check
            )
            print(json.dumps(result, indent=2, sort_keys=True))
            if result.get("grad_ok") is False:
                return 1
            return 0

        cfg = _load_config(args)
        if args.command == "scan":
            result = pipeline.cmd_scan(cfg)
        elif args.command == "filter":
            result = pipeline.cmd_filter(cfg)
        elif args.command == "tokenize":
            result = pipeline.cmd_tokenize(cfg)
        elif args.command == "pack":
            result = pipeline.cmd_pack(cfg, args.mode)
        elif args.command == "views":
            result = pipeline.cmd_views(cfg)
        else:  # pragma: no cover - argparse enforces choices
            raise AssertionError(args.command)
    except (FileNotFoundError, ValueError) as exc:
        print(f"ariapipe: error: {exc}", file=sys.stderr)
        return 2

    summary = {
        "stage": result.stage,
        "processed": result.processed,
        "errors": result.errors,
        "skipped": result.skipped,
        "outputs": result.outputs,
    }
    summary.update(result.info)
    print(json.dumps(summary, sort_keys=True))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
