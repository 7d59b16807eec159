"""Command-line entry point: ``goralab <command> --config cfg.json [options]``.

Commands map one-to-one onto the harness functions:

* ``run``          -- active-learning runs (learning/goal curves, history.json)
* ``approx-check`` -- exact-vs-approximate utility study (scatter.csv, summary.json)
* ``util-hist``    -- exact-utility distributions (histograms.csv)
* ``synth2``       -- adversarial 2-D study (run outputs + queries_<seed>.csv)

Command-line flags override the matching config-file fields.  ``--seeds``
accepts either a comma list (``0,1,4``) or an inclusive range (``0..4``).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .harness import (ExperimentConfig, cmd_approx_check, cmd_run, cmd_synth2,
                      cmd_util_hist)

_COMMANDS = {
    "run": cmd_run,
    "approx-check": cmd_approx_check,
    "util-hist": cmd_util_hist,
    "synth2": cmd_synth2,
}


def parse_seeds(text: str) -> tuple:
    """Parse '0..4' (inclusive range) or '0,1,4' (comma list) into a tuple."""
    text = text.strip()
    if ".." in text:
        lo_s, _, hi_s = text.partition("..")
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range: {text!r}")
        return tuple(range(lo, hi + 1))
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goralab",
        description="Goal-oriented active-learning experiments for "
                    "L2-regularized multinomial logistic regression.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"{name} experiment")
        p.add_argument("--config", help="JSON config file (ExperimentConfig fields)")
        p.add_argument("--out", help="output directory (default: config 'out')")
        p.add_argument("--seeds", type=parse_seeds,
                       help="comma list '0,1,4' or inclusive range '0..4'")
        p.add_argument("--strategy", help="e.g. random, uncertainty, goral:ent:oracle")
        p.add_argument("--b", type=int, help="batch size per iteration")
        p.add_argument("--budget", type=int, help="number of query iterations")
        p.add_argument("--C", type=float, help="inverse-regularization constant")
        p.add_argument("--workers", type=int, help="parallel runs (threads)")
        p.add_argument("--snapshot-utilities", action="store_true", default=None,
                       help="record full pool-utility snapshots each iteration")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    config = (ExperimentConfig.from_json(args.config) if args.config
              else ExperimentConfig())
    overrides = {}
    for field in ("seeds", "strategy", "b", "budget", "C", "workers", "out"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if args.snapshot_utilities is not None:
        overrides["snapshot_utilities"] = args.snapshot_utilities
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    paths = _COMMANDS[args.command](config, out_dir=args.out)
    for key, value in sorted(paths.items()):
        if isinstance(value, str):
            print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
