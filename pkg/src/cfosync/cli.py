"""Command-line front end for the simulation harness.

Subcommands:
    simulate            Monte-Carlo MSE sweep (mse_vs_iter / mse_vs_snr csv)
    compare-consensus   message passing vs consensus baseline (consensus_vs_bp csv)
    crb                 centralized bound diagonal for a topology
    trace               one trial's full belief trajectory

Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import (
    ConfigError,
    ScenarioConfig,
    load_config,
    run_compare,
    run_crb,
    run_simulate,
    run_trace,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cfosync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario config file")
        p.add_argument("--seed", type=int, help="override master seed")
        p.add_argument("--trials", type=int, help="override trial count")
        p.add_argument("--out", help="override output directory")
        p.add_argument(
            "--mode", choices=["full", "oracle"], help="override measurement mode"
        )

    common(sub.add_parser("simulate", help="MSE vs iteration and vs SNR sweep"))
    common(sub.add_parser("compare-consensus", help="consensus baseline comparison"))

    p_crb = sub.add_parser("crb", help="centralized bound for a topology")
    p_crb.add_argument("--topology", help="edge-list file (defaults to config topology)")
    p_crb.add_argument("--snr", type=float, default=30.0, help="training SNR in dB")
    p_crb.add_argument("--train-len", type=int, default=16, help="training length")
    p_crb.add_argument("--antennas", type=int, default=1, help="antennas per node")
    p_crb.add_argument("--seed", type=int, default=0)
    p_crb.add_argument("--out", default="out")
    p_crb.add_argument("--config", help="scenario config file")

    p_trace = sub.add_parser("trace", help="dump one trial's trajectory")
    common(p_trace)
    p_trace.add_argument("--trial", type=int, default=0, help="trial index")

    return parser


def _scenario_from_args(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    return replace(config, **overrides) if overrides else config


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit:
        # argparse exits itself on --help; treat that as success
        return 0
    try:
        if args.command == "simulate":
            paths = run_simulate(_scenario_from_args(args))
            for name in sorted(paths):
                print(f"{name}: {paths[name]}")
        elif args.command == "compare-consensus":
            paths = run_compare(_scenario_from_args(args))
            for name in sorted(paths):
                print(f"{name}: {paths[name]}")
        elif args.command == "crb":
            if args.config:
                config = load_config(args.config)
            else:
                config = ScenarioConfig(
                    snr_db=(args.snr,),
                    train_len=args.train_len,
                    antennas=args.antennas,
                    seed=args.seed,
                    out_dir=args.out,
                    trials=1,
                )
            if args.topology:
                config = replace(
                    config, topology="edgelist", edge_list=args.topology
                )
            print(f"crb: {run_crb(config)}")
        elif args.command == "trace":
            config = _scenario_from_args(args)
            print(f"trace: {run_trace(config, args.trial)}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def console_main():  # pragma: no cover - thin wrapper
    raise SystemExit(cli())
