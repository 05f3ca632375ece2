"""Command-line entry point: ``shiftext {train,compare,sensitivity,simulate,replay,rerun}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ScenarioConfig, load_scenario
from .experiments import (
    GRIDS,
    POLICY_NAMES,
    TraceError,
    format_replay,
    replay_to_csv,
    replay_trace,
    rerun,
    run_compare,
    run_sensitivity,
    run_simulate,
    run_train,
)
from .neuralnet import CheckpointError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("shiftext")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario JSON file (a run manifest also works)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--episodes", type=int, help="training episodes (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel evaluation workers")


def _eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--runs", type=int, help="evaluation runs (overrides the config)")
    p.add_argument("--episodes-per-run", type=int, help="episodes averaged within each run")
    p.add_argument("--checkpoint", help="trained checkpoint; trains one first when omitted")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad flags are configuration errors, not runtime failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shiftext", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the DQN and write checkpoint + training curve")
    _common(p)

    p = sub.add_parser("compare", help="trained policy vs no-extension baseline on shared seeds")
    _common(p)
    _eval_flags(p)

    p = sub.add_parser("sensitivity", help="evaluate a scenario grid")
    _common(p)
    _eval_flags(p)
    p.add_argument("--grid", required=True, choices=sorted(GRIDS))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--retrain", dest="retrain", action="store_true", default=None,
                   help="train a fresh policy per cell")
    g.add_argument("--no-retrain", dest="retrain", action="store_false",
                   help="reuse one policy trained on the base scenario")

    p = sub.add_parser("simulate", help="roll one episode and write its per-epoch trace")
    _common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, default="no_extension")
    p.add_argument("--checkpoint")
    p.add_argument("--episode", type=int, default=0, help="evaluation episode index")

    p = sub.add_parser("replay", help="validate a trace and print its reward decomposition")
    p.add_argument("trace")
    p.add_argument("--csv", help="also write the decomposition here")

    p = sub.add_parser("rerun", help="regenerate a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def resolve_scenario(args: argparse.Namespace) -> ScenarioConfig:
    """Config file values, then command-line overrides."""
    scenario = load_scenario(args.config) if args.config else ScenarioConfig()
    changes = {}
    for flag, key in (("seed", "seed"), ("out", "out"), ("runs", "runs"),
                      ("episodes_per_run", "episodes_per_run"), ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            changes[key] = value
    if args.episodes is not None:
        changes["agent"] = scenario.agent.replace(episodes=args.episodes)
    scenario = scenario.replace(**changes)
    for key in ("runs", "episodes_per_run", "workers"):
        if getattr(scenario, key) < 1:
            raise ConfigError(f"{key}={getattr(scenario, key)}: must be >= 1")
    return scenario


def _print_summary(summary: dict) -> None:
    for label, s in summary.items():
        print(f"{label:14s} reward {s['total_reward']['mean']:10.2f}  lost {s['lost_requests']['mean']:7.2f} "
              f"({s['lost_pct']['mean']:5.2f}% of arrivals)  lost cost {s['lost_cost']['mean']:9.2f}  "
              f"extension cost {s['extension_cost']['mean']:8.2f}  extensions {s['extensions']['mean']:6.2f}")


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "replay":
        rows, total = replay_trace(args.trace)
        sys.stdout.write(format_replay(rows, total))
        if args.csv:
            replay_to_csv(rows, args.csv)
        return EXIT_OK
    if args.command == "rerun":
        rerun(args.manifest, args.out)
        print(f"regenerated into {args.out}")
        return EXIT_OK

    scenario = resolve_scenario(args)
    out = scenario.out
    if args.command == "train":
        run_train(scenario, out)
        print(f"checkpoint and training curve written to {out}")
    elif args.command == "compare":
        res = run_compare(scenario, out, args.checkpoint)
        _print_summary(res["summary"])
    elif args.command == "sensitivity":
        res = run_sensitivity(scenario, out, args.grid, args.checkpoint, args.retrain)
        _print_summary({f"{args.grid}:{c.label}": c.summary for c in res["cells"]})
    elif args.command == "simulate":
        res = run_simulate(scenario, out, args.policy, args.episode, args.checkpoint)
        print(f"episode reward {res['totals'].reward:.2f}; trace written to {out}/trace.csv")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceError, CheckpointError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
