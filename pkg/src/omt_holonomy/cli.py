"""Command-line driver: ``omt-holonomy <kind> --config cfg.json --out dir``.

Exit status is 0 on success, 2 for invalid input and 3 when a solver fails
to converge.
"""

import argparse
import logging
import sys
from pathlib import Path

from .errors import DomainError, IntegrationBreakdown, NonConvergenceError, PreconditionError, UsageError
from .experiments import KINDS, load_config, run, write_dump
from .plotting import UnsupportedDimensionError, render_ellipses

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("omt_holonomy")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    parser = _Parser(prog="omt-holonomy", description="Gaussian optimal transport experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, type=Path, help="JSON experiment description")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
        p.add_argument("--steps", type=int, help="grid intervals K, overrides the config")
        p.add_argument("--tol", type=float, help="solver tolerance, overrides the config")
        p.add_argument("--svg", action="store_true", help="also write trajectory.svg (n = 2 only)")
        p.add_argument("--stride", type=int, help="samples between drawn ellipses")
        p.add_argument("--no-tables", action="store_true", help="skip the CSV tables")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if not args.config.is_file():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config, kind=args.kind, overrides={"steps": args.steps, "tol": args.tol})
        if args.svg and cfg.dim != 2:
            raise UnsupportedDimensionError(f"ellipse plots need n = 2, got n = {cfg.dim}")
        dump = run(cfg)
        paths = write_dump(dump, args.out, tables=not args.no_tables)
        if args.svg:
            stride = args.stride if args.stride is not None else cfg.options.get("stride")
            svg = args.out / "trajectory.svg"
            render_ellipses(dump, stride, svg)
            paths.append(svg)
    except (UsageError, DomainError, PreconditionError) as exc:
        print(f"omt-holonomy: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergenceError, IntegrationBreakdown) as exc:
        print(f"omt-holonomy: no convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
