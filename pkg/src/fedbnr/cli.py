"""Command-line entry points.

    fedbnr run CONFIG.json [--out DIR]
    fedbnr synthetic-fig2 [--out DIR] [--seed N]
    fedbnr kernel-check [--m-max N] [--seed N]
"""

import argparse
import json
import logging
import sys

from .errors import FedBNRError
from . import experiments


def _kernel_m_values(m_max):
    values = [m for m in (100, 10_000, 1_000_000) if m < m_max]
    return tuple(values + [m_max])


def build_parser():
    parser = argparse.ArgumentParser(prog="fedbnr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a JSON experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="override output_dir")

    fig2 = sub.add_parser("synthetic-fig2", help="two-client 1-D study")
    fig2.add_argument("--out", default="fig2")
    fig2.add_argument("--seed", type=int, default=0)

    kc = sub.add_parser("kernel-check", help="Monte-Carlo kernel convergence and PSD check")
    kc.add_argument("--m-max", type=int, default=1_000_000)
    kc.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            _, rows = experiments.cmd_run(args.config, args.out)
            for row in rows:
                print(f"{row['mode']:12s} rmse {row['rmse_mean']:.4f} +/- {row['rmse_sem']:.4f}  "
                      f"ece {row['ece_mean']:.4f}")
        elif args.command == "synthetic-fig2":
            summary = experiments.synthetic_fig2(args.out, seed=args.seed)
            print(json.dumps({k: v for k, v in summary.items() if k != "new_client"},
                             sort_keys=True, indent=2))
        else:
            if args.m_max < 2:
                raise SystemExit("--m-max must be at least 2")
            report = experiments.kernel_check(_kernel_m_values(args.m_max), seed=args.seed)
            print(experiments.format_kernel_report(report))
    except (FedBNRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
