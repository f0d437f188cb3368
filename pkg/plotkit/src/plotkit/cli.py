"""Command line entry point: plotkit render --spec fig.json."""

import argparse
import json
import sys

from .render import render
from .spec import FigureSpec, SpecError
from .tables import SchemaError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="render figures from harness CSVs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from a JSON spec")
    p.add_argument("--spec", required=True,
                   help="path to the FigureSpec JSON file")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        spec = FigureSpec.from_json(args.spec)
    except (OSError, json.JSONDecodeError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        out = render(spec)
    except (OSError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {spec.kind} figure to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
