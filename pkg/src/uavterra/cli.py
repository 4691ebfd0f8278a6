"""Command line entry point.

    uavterra <scenario> [--config FILE] [--seed N] [--out DIR]
                        [--trials N] [--workers N]

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from uavterra.config import parse_config
from uavterra.errors import ConfigError, ResourceLimitError
from uavterra.runner import SCENARIOS, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_RESOURCE = 4

#: which config key --trials overrides, per scenario
TRIAL_KEYS = {
    "fig4_losfit": "losfit.n_pairs",
    "fig6_coverage": "coverage.trials",
    "fig7_relay": "relay.n_scenes",
    "fig2_track": "tracking.map_seeds",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="uavterra",
        description="Seeded terrain-aware UAV network experiments.")
    p.add_argument("scenario", choices=sorted(SCENARIOS),
                   help="experiment preset to run")
    p.add_argument("--config", metavar="FILE", default=None,
                   help="YAML config file (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: config master_seed)")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="output directory (default: <out_dir>/<scenario>)")
    p.add_argument("--trials", type=int, default=None,
                   help="override the scenario's main trial count")
    p.add_argument("--workers", type=int, default=None,
                   help="worker count (never changes results)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.trials is not None:
        key = TRIAL_KEYS.get(args.scenario)
        if key is None:
            print(f"config error: scenario '{args.scenario}' does not "
                  "take --trials", file=sys.stderr)
            return EXIT_CONFIG
        overrides[key] = args.trials
    try:
        cfg = parse_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = (Path(args.out) if args.out
               else Path(cfg["out_dir"]) / args.scenario)
    try:
        man = run_scenario(args.scenario, cfg, out_dir, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except Exception as exc:
        print(f"runtime error in scenario '{args.scenario}': {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME
    names = ", ".join(sorted(man.outputs))
    total = man.timings_s.get("total", 0.0)
    print(f"{args.scenario}: wrote {names} to {out_dir} "
          f"in {total:.1f} s (seed {man.seed})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
