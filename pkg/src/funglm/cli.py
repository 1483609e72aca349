"""Command line: ``funglm <experiment> --config path.json [--seed k] [--out dir]``."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .harness import run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="funglm", description="Simulation experiments for functional GLM estimators.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON file with flat configuration keys (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", default="funglm-out", help="output directory (default: %(default)s)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"funglm: invalid configuration: {exc}", file=sys.stderr)
        return 2
    outcome = run(args.experiment, cfg, args.out)
    for c in outcome.checks:
        print(c.line())
    print(f"artifacts written to {args.out}")
    return 0 if outcome.passed else 1


if __name__ == "__main__":
    sys.exit(main())
