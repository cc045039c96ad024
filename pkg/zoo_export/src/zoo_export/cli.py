"""Command line for the corpus exporter."""

from __future__ import annotations

import argparse
import logging
import sys

from .export import ExportSpec, export_corpus, resolve_model_ids


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zoo-export", description=__doc__)
    commands = parser.add_subparsers(dest="command", metavar="command")
    sub = commands.add_parser("export", help="write .arch summaries for zoo models")
    sub.add_argument("--models", required=True, help="'all' or comma-separated model ids")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--input-shape", default="3,224,224", help="C,H,W trace shape")
    sub.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command != "export":
        build_parser().print_help()
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        shape = tuple(int(v) for v in args.input_shape.split(","))
        if len(shape) != 3:
            raise ValueError("input shape must be C,H,W")
        spec = ExportSpec(model_ids=resolve_model_ids(args.models), out_dir=args.out, input_shape=shape)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = export_corpus(spec)
    for path in report.written:
        print(path)
    for model_id, reason in report.failures.items():
        print(f"FAILED {model_id}: {reason}", file=sys.stderr)
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
