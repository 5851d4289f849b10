"""Command line interface: render one figure from a JSON spec or flags.

Usage:
    mindexplot plot --spec figure.json
    mindexplot plot --kind trajectories --input trajectories=GLOB \\
        --option y=risk --out fig.png

Exit codes: 0 success, 1 runtime failure, 2 spec/schema error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .io import SchemaError
from .render import KINDS, FigureSpec, render


def spec_from_file(path) -> FigureSpec:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"spec file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})")
    if not isinstance(data, dict) or "kind" not in data:
        raise SchemaError(f"{path}: spec must be a JSON object with a 'kind' field")
    allowed = {"kind", "inputs", "options", "out", "format", "dpi", "title"}
    unknown = set(data) - allowed
    if unknown:
        raise SchemaError(f"{path}: unknown spec fields {sorted(unknown)}")
    return FigureSpec(**data)


def _parse_pairs(pairs, what) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise SchemaError(f"--{what} needs NAME=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out.setdefault(key, []).append(value) if what == "input" else \
            out.__setitem__(key, _coerce(value))
    return out


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def spec_from_flags(args) -> FigureSpec:
    if args.kind is None:
        raise SchemaError("need --spec FILE or --kind KIND")
    return FigureSpec(
        kind=args.kind,
        inputs=_parse_pairs(args.input, "input"),
        options=_parse_pairs(args.option, "option"),
        out=args.out,
        format=args.format,
        dpi=args.dpi,
        title=args.title,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindexplot")
    sub = parser.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("plot")
    sp.add_argument("--spec", default=None, help="JSON figure spec file")
    sp.add_argument("--kind", choices=KINDS, default=None)
    sp.add_argument("--input", action="append", default=[],
                    metavar="ROLE=GLOB")
    sp.add_argument("--option", action="append", default=[],
                    metavar="NAME=VALUE")
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", default="png", choices=["png", "svg"])
    sp.add_argument("--dpi", type=int, default=120)
    sp.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_file(args.spec) if args.spec else spec_from_flags(args)
        if args.out:
            spec.out = args.out
        if spec.out is None:
            raise SchemaError("no output path: set 'out' in the spec or pass --out")
        import matplotlib.pyplot as plt

        fig, _ = render(spec)
        plt.close(fig)
    except SchemaError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
