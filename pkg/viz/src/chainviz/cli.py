"""chainviz command line: alluvial | trends | confusion renderers."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .geometry import GeometryError
from .io import SchemaError, load_alluvial, load_metrics, load_trends
from .palette import PaletteError
from .render import render_alluvial, render_confusion, render_trends

logger = logging.getLogger(__name__)

FORMATS = ("svg", "png")


def _out_path(args) -> Path:
    out = Path(args.out)
    if args.format and out.suffix.lstrip(".").lower() != args.format:
        out = out.with_suffix(f".{args.format}")
    if out.suffix.lstrip(".").lower() not in FORMATS:
        out = out.with_suffix(".svg")
    return out


def cmd_alluvial(args) -> int:
    payload = load_alluvial(args.infile)
    out = render_alluvial(payload, _out_path(args),
                          figsize=(args.width, args.height))
    print(f"wrote {out}")
    return 0


def cmd_trends(args) -> int:
    categories, rows = load_trends(args.infile)
    out = render_trends(categories, rows, _out_path(args),
                        figsize=(args.width, args.height))
    print(f"wrote {out}")
    return 0


def cmd_confusion(args) -> int:
    report = load_metrics(args.infile, task=args.task)
    out = render_confusion(report, _out_path(args),
                           figsize=(args.width, args.height))
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainviz",
        description="Render chainforge exports as figures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, width, height):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--width", type=float, default=width)
        p.add_argument("--height", type=float, default=height)

    p = sub.add_parser("alluvial", help="supply-chain alluvial diagram")
    common(p, 10.0, 6.0)
    p.set_defaults(func=cmd_alluvial)

    p = sub.add_parser("trends", help="stacked monthly product trends")
    common(p, 12.0, 6.0)
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("confusion", help="confusion-matrix heat map")
    common(p, 8.0, 7.0)
    p.add_argument("--task", choices=["product", "reply"], default="product")
    p.set_defaults(func=cmd_confusion)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, PaletteError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
