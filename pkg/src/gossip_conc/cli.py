"""Command-line entry point: ``gossip-conc <experiment> --config <path>``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment

log = logging.getLogger("gossip_conc")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gossip-conc", description=__doc__)
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON experiment config (model, params, seed, trials)")
    ap.add_argument("--seed", type=int, help="base seed, overrides the config")
    ap.add_argument("--out", help="output directory, overrides the config")
    ap.add_argument("--trials", type=int, help="trial count, overrides the config")
    ap.add_argument("--threads", type=int, help="worker threads for independent trials")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {"seed": args.seed, "trials": args.trials, "threads": args.threads,
                 "output_dir": args.out}
    try:
        if args.config:
            cfg = ExperimentConfig.from_file(args.config, experiment=args.experiment, **overrides)
        else:
            cfg = ExperimentConfig.from_dict(
                {"experiment": args.experiment, **{k: v for k, v in overrides.items() if v is not None}})
        res = run_experiment(cfg)
        out = res.write(cfg.output_dir)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"gossip-conc: error: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %s (manifest %s)", out, res.manifest_hash)
    print(out)
    return res.exit_code


if __name__ == "__main__":
    sys.exit(main())
