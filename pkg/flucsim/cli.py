#!/usr/bin/env python

"""Command line interface: fluc-sim {run, sweep, compress, audit}.

Any flucsim error prints a one-line diagnostic to stderr and exits with
status 2; outputs written by the failed command are removed.

Example
-------
$ fluc-sim run --config scenario.json --algorithm ktfluc --seed 1 --out runs/kt1
$ fluc-sim sweep --config scenario.json --ues 25,35,45 --seeds 1..5 --out runs/sweep
$ fluc-sim compress --config scenario.json --out runs/compress
$ fluc-sim audit --run runs/kt1
"""

import argparse
import sys
from typing import List, Optional
from loguru import logger

import flucsim
from flucsim.config import ALGORITHMS, RunConfig
from flucsim.harness import audit_run, run_compression, run_experiment, sweep
from flucsim.utils.logger_setup import set_log_level
from flucsim.utils.utils import FlucSimError

logger = logger.bind(name="flucsim")


def parse_seeds(text: str) -> List[int]:
    """Parse '1..5' (inclusive), '1,4,9' or '7' into a list of seeds."""
    try:
        if ".." in text:
            start, stop = text.split("..", 1)
            seeds = list(range(int(start), int(stop) + 1))
        else:
            seeds = [int(i) for i in text.split(",") if i.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"invalid seeds {text!r}") from err
    if not seeds or min(seeds) < 0:
        raise argparse.ArgumentTypeError(f"invalid seeds {text!r}")
    return seeds


def parse_floats(text: str) -> List[float]:
    try:
        return [float(i) for i in text.split(",") if i.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from err


def parse_names(text: str) -> List[str]:
    return [i.strip() for i in text.split(",") if i.strip()]


def _load_config(args) -> RunConfig:
    """Config file (or defaults) with command line overrides applied."""
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("algorithm", "seed", "ttis", "m_avg", "save_model", "load_model"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "save_fed_rounds", False):
        overrides["save_fed_rounds"] = True
    if getattr(args, "overlap", False):
        overrides["overlap_aggregation"] = True
    return config.replace(**overrides) if overrides else config


def _cmd_run(args) -> int:
    config = _load_config(args)
    record = run_experiment(config, out=args.out)
    summary = record.summary()
    print(
        f"{config.algorithm}: mean reward {summary['mean_reward']}, "
        f"{summary['n_ues']} UEs, {summary['federation_rounds']} federation rounds")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    table = sweep(
        config,
        ues=args.ues,
        seeds=args.seeds,
        algorithms=args.algorithms,
        workers=args.workers,
        out=args.out,
    )
    columns = ["algorithm", "m_avg", "n_seeds", "mean_reward_mean", "mean_reward_std"]
    print(table[columns].to_string(index=False))
    return 0


def _cmd_compress(args) -> int:
    config = _load_config(args)
    if args.compression_ttis is not None:
        config = config.replace(compression_ttis=args.compression_ttis)
    record = run_compression(config, out=args.out)
    report = record.effectiveness or {}
    print(
        f"peak {report.get('peak_neurons')} neurons, threshold "
        f"{report.get('threshold_neurons')} neurons, recommended hidden sizes "
        f"{report.get('recommended_hidden_sizes')}")
    return 0


def _cmd_audit(args) -> int:
    bad = audit_run(args.run)
    if not bad:
        print(f"audit passed: {args.run}")
        return 0
    for key, (stored, recomputed) in sorted(bad.items()):
        print(f"{key}: stored {stored}, recomputed {recomputed}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluc-sim",
        description="Federated traffic steering simulator for a dual-RAT RAN.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {flucsim.__version__}")
    parser.add_argument(
        "--log-level", default="WARNING",
        choices=["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--log-file", help="also write the log to this file")
    subs = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", help="scenario JSON file (defaults if omitted)")
        sub.add_argument("--ttis", type=int, help="TTIs to simulate")
        sub.add_argument("--load-model", dest="load_model", help="initial model snapshot")

    run = subs.add_parser("run", help="run one algorithm on one seed")
    common(run)
    run.add_argument("--algorithm", choices=ALGORITHMS)
    run.add_argument("--seed", type=int)
    run.add_argument("--ues", dest="m_avg", type=float, help="average number of active UEs")
    run.add_argument("--out", help="output directory")
    run.add_argument("--save-model", dest="save_model", help="path prefix for final models")
    run.add_argument("--save-fed-rounds", dest="save_fed_rounds", action="store_true")
    run.add_argument("--overlap", action="store_true", help="overlapped aggregation (ktfluc)")
    run.set_defaults(func=_cmd_run)

    swp = subs.add_parser("sweep", help="sweep UE counts and seeds")
    common(swp)
    swp.add_argument("--ues", type=parse_floats, default=[25.0, 35.0, 45.0, 55.0, 65.0])
    swp.add_argument("--seeds", type=parse_seeds, default=[1, 2, 3, 4, 5])
    swp.add_argument("--algorithms", type=parse_names, help="comma separated modes")
    swp.add_argument("--workers", type=int, default=1)
    swp.add_argument("--out", help="output directory")
    swp.set_defaults(func=_cmd_sweep)

    cmp = subs.add_parser("compress", help="grow/prune pre-simulation")
    common(cmp)
    cmp.add_argument("--seed", type=int)
    cmp.add_argument("--compression-ttis", dest="compression_ttis", type=int)
    cmp.add_argument("--out", help="output directory")
    cmp.set_defaults(func=_cmd_compress)

    aud = subs.add_parser("audit", help="recompute a run's summary from its CSV")
    aud.add_argument("--run", required=True, help="run output directory")
    aud.set_defaults(func=_cmd_audit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_log_level(args.log_level, log_file=args.log_file)
    logger.debug(f"fluc-sim {args.command} {vars(args)}")
    try:
        return args.func(args)
    except FlucSimError as err:
        print(f"fluc-sim: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
