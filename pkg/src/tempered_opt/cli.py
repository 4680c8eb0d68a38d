"""Command line: ``run``, ``gen-data`` and ``plot-data``."""

from __future__ import annotations

import argparse
import logging
import sys

from .data import generate_particle_data
from .harness import ConfigError, load_config, run_experiment
from .plotdata import PLOT_KINDS, PlotKindError, emit_plot_data


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tempered-opt", description="Seeded experiment runner.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--scale", type=float, default=None,
                   help="divide iteration, generation, night and test-set counts by this factor")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")

    g = sub.add_parser("gen-data", help="write the synthetic particle dataset")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    d = sub.add_parser("plot-data", help="emit plot-ready columns from run outputs")
    d.add_argument("--kind", required=True, help=", ".join(PLOT_KINDS))
    d.add_argument("--in", dest="in_path", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--bins", type=int, default=40)
    d.add_argument("--burn-in", type=int, default=0)
    d.add_argument("--lo", type=float, default=0.0)
    d.add_argument("--hi", type=float, default=50.0)
    d.add_argument("--points", type=int, default=201)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "run":
            out = run_experiment(load_config(args.config, scale=args.scale), args.out)
            print(out)
        elif args.command == "gen-data":
            generate_particle_data(args.seed).write_csv(args.out)
        else:
            emit_plot_data(args.kind, args.in_path, args.out, bins=args.bins, burn_in=args.burn_in,
                           lo=args.lo, hi=args.hi, points=args.points)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (PlotKindError, KeyError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
