"""Scenario runners behind the command line: training, comparison, sensitivity grids, trace replay.

Every runner writes its artifacts into one output directory together with a
``manifest.json`` holding the resolved scenario, its hash, the seed and the
runner arguments. Feeding a manifest back through ``rerun`` regenerates the
same CSV files byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .agent import AGENT_TAG, EVAL_TAG, TRAIN_TAG, TrainingResult, episode_seed, train
from .config import ConfigError, EpisodeConfig, ScenarioConfig, scenario_from_dict
from .environment import TRACE_HEADER, ShiftExtensionEnv, run_episode, write_episode_trace
from .policies import (
    NoExtensionPolicy,
    Policy,
    RandomPolicy,
    RunMetrics,
    TrainedDqnPolicy,
    evaluate,
    summarize,
)

log = logging.getLogger(__name__)

TRAINING_COLUMNS = ("episode", "episode_reward", "cumulative_avg_reward", "mean_loss", "epsilon")

# cell label -> overrides of the base scenario; cells always run in this order
GRIDS: dict[str, list[tuple[str, dict]]] = {
    "request": [
        ("low", {"request_rate": 1.0}),
        ("normal", {"request_rate": 2.0}),
        ("high", {"request_rate": 3.0}),
    ],
    "occasional": [
        ("low", {"occasional_rate": 0.5}),
        ("normal", {"occasional_rate": 1.0}),
        ("high", {"occasional_rate": 2.0}),
    ],
    "compensation": [
        ("low", {"extension_pay": 1.5, "accept_prob": 0.5}),
        ("normal", {"extension_pay": 3.0, "accept_prob": 0.7}),
        ("high", {"extension_pay": 6.0, "accept_prob": 0.9}),
    ],
}

# changing pay and acceptance alters the decision problem itself, so those cells retrain by default
RETRAIN_BY_DEFAULT = {"request": False, "occasional": False, "compensation": True}


class TraceError(ValueError):
    """A replayed trace is malformed; the message names the offending row."""


# ---------------------------------------------------------------- helpers

def fmt(x) -> str:
    """Full-precision, platform-stable number formatting for raw CSVs."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_json(path: Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "shiftext": __version__}


def write_manifest(out: Path, command: str, scenario: ScenarioConfig, args: dict, outputs: list[str],
                   derived_seeds: dict | None = None) -> dict:
    doc = {
        "command": command,
        "args": args,
        "config": scenario.to_dict(),
        "config_hash": scenario.fingerprint(),
        "seed": scenario.seed,
        "derived_seeds": derived_seeds or {},
        "versions": versions(),
        "outputs": {name: file_sha256(out / name) for name in sorted(outputs)},
    }
    write_json(out / "manifest.json", doc)
    return doc


def training_rows(result: TrainingResult):
    for i, (r, avg, loss, eps) in enumerate(zip(result.episode_rewards, result.cumulative_average,
                                                 result.episode_losses, result.episode_epsilons)):
        yield [i, float(r), float(avg), float(loss), float(eps)]


def _eval_seeds(scenario: ScenarioConfig) -> dict:
    return {
        f"run{r}": {"first_episode": episode_seed(scenario.seed, EVAL_TAG, r, 0),
                    "episodes": scenario.episodes_per_run}
        for r in range(scenario.runs)
    }


def _train_seeds(scenario: ScenarioConfig) -> dict:
    return {
        "agent": episode_seed(scenario.seed, AGENT_TAG),
        "first_episode": episode_seed(scenario.seed, TRAIN_TAG, 0),
        "episodes": scenario.agent.episodes,
    }


def train_and_save(scenario: ScenarioConfig, out: Path, stem: str = "") -> tuple[TrainingResult, Path]:
    """Train on ``scenario`` and write ``checkpoint{stem}.json`` and ``training{stem}.csv``."""
    every = scenario.agent.checkpoint_every

    def progress(ep, res):
        if every and (ep + 1) % every == 0:
            res.checkpoint({"episode": ep + 1, "seed": scenario.seed}).save(out / f"checkpoint{stem}_ep{ep + 1}.json")
        if (ep + 1) % 50 == 0:
            log.info("%s episode %d cumulative average reward %.2f", stem or "train", ep + 1,
                     res.cumulative_average[-1])

    result = train(scenario.env, scenario.agent, scenario.seed, on_episode=progress)
    ckpt_path = out / f"checkpoint{stem}.json"
    result.checkpoint({"config_hash": scenario.fingerprint(), "seed": scenario.seed}).save(ckpt_path)
    write_csv(out / f"training{stem}.csv", TRAINING_COLUMNS, training_rows(result))
    return result, ckpt_path


# ---------------------------------------------------------------- commands

def run_train(scenario: ScenarioConfig, out: str | Path) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    train_and_save(scenario, out)
    return write_manifest(out, "train", scenario, {}, ["training.csv", "checkpoint.json"],
                          {"train": _train_seeds(scenario)})


def load_policy(checkpoint: str | Path, env: EpisodeConfig) -> TrainedDqnPolicy:
    return TrainedDqnPolicy.from_checkpoint(checkpoint, env.extension.max_notified)


def _run_rows(runs: list[RunMetrics], prefix: list = ()):
    for r in runs:
        yield [*prefix, *r.row()]


def run_compare(scenario: ScenarioConfig, out: str | Path, checkpoint: str | Path | None = None) -> dict:
    """Evaluate the trained policy and the no-extension baseline on identical seed sets."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["compare_runs.csv", "compare_summary.csv"]
    seeds = {"eval": _eval_seeds(scenario)}
    given = None if checkpoint is None else str(checkpoint)
    if checkpoint is None:
        _, checkpoint = train_and_save(scenario, out)
        outputs += ["training.csv", "checkpoint.json"]
        seeds["train"] = _train_seeds(scenario)
    policies: list[Policy] = [load_policy(checkpoint, scenario.env), NoExtensionPolicy()]
    results = {}
    for pol in policies:
        results[pol.name] = evaluate(pol, scenario.env, scenario.runs, scenario.episodes_per_run, scenario.seed,
                                     workers=scenario.workers)
    rows = [row for runs in results.values() for row in _run_rows(runs)]
    write_csv(out / "compare_runs.csv", RunMetrics.columns(), rows)
    summary = {name: summarize(runs) for name, runs in results.items()}
    write_csv(out / "compare_summary.csv", SUMMARY_COLUMNS,
              [summary_row(name, s) for name, s in summary.items()])
    write_json(out / "compare_summary.json", summary)
    manifest = write_manifest(out, "compare", scenario, {"checkpoint": given}, outputs, seeds)
    return {"summary": summary, "manifest": manifest}


SUMMARY_COLUMNS = (
    "label",
    "mean_total_reward",
    "median_total_reward",
    "std_total_reward",
    "mean_lost_requests",
    "median_lost_requests",
    "mean_lost_cost",
    "median_lost_cost",
    "mean_lost_pct",
    "mean_extension_cost",
    "mean_extensions",
    "mean_extension_periods",
    "mean_arrivals",
)


def summary_row(label: str, s: dict) -> list:
    return [
        label,
        s["total_reward"]["mean"],
        s["total_reward"]["median"],
        s["total_reward"]["std"],
        s["lost_requests"]["mean"],
        s["lost_requests"]["median"],
        s["lost_cost"]["mean"],
        s["lost_cost"]["median"],
        s["lost_pct"]["mean"],
        s["extension_cost"]["mean"],
        s["extensions"]["mean"],
        s["extension_periods"]["mean"],
        s["arrivals"]["mean"],
    ]


def apply_cell(env: EpisodeConfig, overrides: dict) -> EpisodeConfig:
    """Return ``env`` with a grid cell's overrides, routed to the right sub-config."""
    econ, ext, top = {}, {}, {}
    for key, value in overrides.items():
        if key == "extension_pay":
            econ[key] = value
        elif key in ("accept_prob", "max_notified", "periods"):
            ext[key] = value
        else:
            top[key] = value
    out = env
    if econ:
        out = out.with_economics(**econ)
    if ext:
        out = out.with_extension(**ext)
    if top:
        out = out.replace(**top)
    return out


@dataclass
class CellResult:
    grid: str
    label: str
    overrides: dict
    runs: list[RunMetrics]

    @property
    def summary(self) -> dict:
        return summarize(self.runs)


def run_sensitivity(
    scenario: ScenarioConfig,
    out: str | Path,
    grid: str,
    checkpoint: str | Path | None = None,
    retrain: bool | None = None,
) -> dict:
    """Evaluate every cell of ``grid``, reusing one policy or retraining per cell."""
    if grid not in GRIDS:
        raise ConfigError(f"grid={grid!r}: expected one of {sorted(GRIDS)}")
    if retrain is None:
        retrain = RETRAIN_BY_DEFAULT[grid]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = ["sensitivity_runs.csv", "sensitivity_summary.csv"]
    seeds: dict = {"eval": _eval_seeds(scenario)}
    shared = None
    given = None if checkpoint is None else str(checkpoint)
    if not retrain:
        if checkpoint is None:
            _, checkpoint = train_and_save(scenario, out)
            outputs += ["training.csv", "checkpoint.json"]
            seeds["train"] = _train_seeds(scenario)
        shared = load_policy(checkpoint, scenario.env)
    cells = []
    for label, overrides in GRIDS[grid]:
        env = apply_cell(scenario.env, overrides)
        cell_scenario = scenario.replace(env=env)
        if retrain:
            _, ckpt = train_and_save(cell_scenario, out, stem=f"_{label}")
            outputs += [f"training_{label}.csv", f"checkpoint_{label}.json"]
            seeds[f"train_{label}"] = _train_seeds(cell_scenario)
            policy = load_policy(ckpt, env)
        else:
            policy = shared
        runs = evaluate(policy, env, scenario.runs, scenario.episodes_per_run, scenario.seed,
                        workers=scenario.workers)
        cells.append(CellResult(grid, label, overrides, runs))
        log.info("cell %s mean extension cost %.2f", label, cells[-1].summary["extension_cost"]["mean"])
    write_csv(out / "sensitivity_runs.csv", ["grid", "cell", *RunMetrics.columns()],
              [row for c in cells for row in _run_rows(c.runs, [grid, c.label])])
    summaries = {c.label: c.summary for c in cells}
    write_csv(out / "sensitivity_summary.csv", SUMMARY_COLUMNS,
              [summary_row(label, s) for label, s in summaries.items()])
    doc = {
        "grid": grid,
        "retrain": retrain,
        "cells": {c.label: {"overrides": c.overrides, "summary": summaries[c.label]} for c in cells},
    }
    write_json(out / "sensitivity_summary.json", doc)
    args = {"grid": grid, "retrain": retrain, "checkpoint": None if retrain else given}
    manifest = write_manifest(out, "sensitivity", scenario, args, outputs, seeds)
    return {"cells": cells, "manifest": manifest}


POLICY_NAMES = ("dqn", "no_extension", "random")


def run_simulate(scenario: ScenarioConfig, out: str | Path, policy: str, episode: int = 0,
                 checkpoint: str | Path | None = None) -> dict:
    """Roll one evaluation episode and write its per-epoch trace."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if policy == "dqn":
        if checkpoint is None:
            raise ConfigError("policy=dqn: --checkpoint is required")
        pol: Policy = load_policy(checkpoint, scenario.env)
    elif policy == "no_extension":
        pol = NoExtensionPolicy()
    elif policy == "random":
        pol = RandomPolicy(scenario.seed)
    else:
        raise ConfigError(f"policy={policy!r}: expected one of {POLICY_NAMES}")
    env = ShiftExtensionEnv(scenario.env)
    seed = episode_seed(scenario.seed, EVAL_TAG, 0, episode)
    pol.reset(0)
    totals, outcomes = run_episode(env, lambda s, f: pol.decide(f, s, scenario.env), seed, record=True)
    write_episode_trace(out / "trace.csv", outcomes)
    args = {"policy": policy, "episode": episode, "checkpoint": None if checkpoint is None else str(checkpoint)}
    manifest = write_manifest(out, "simulate", scenario, args, ["trace.csv"], {"episode": seed})
    return {"totals": totals, "manifest": manifest}


# ---------------------------------------------------------------- replay

_FLOAT_COLS = range(2, 10)
_INT_COLS = range(10, len(TRACE_HEADER))


@dataclass
class ReplayRow:
    epoch: int
    action: str
    values: list[float]  # reward then the seven components, in TRACE_HEADER order
    counts: list[int]


def replay_trace(path: str | Path, tol: float = 1e-6) -> tuple[list[ReplayRow], ReplayRow | None]:
    """Parse and validate a trace; raises ``TraceError`` naming the first bad row (1-based, header = 1)."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc}") from exc
    if not rows:
        return [], None
    if tuple(rows[0]) != TRACE_HEADER:
        raise TraceError("row 1: header does not match the trace format")
    parsed: list[ReplayRow] = []
    total: ReplayRow | None = None
    for n, row in enumerate(rows[1:], start=2):
        if total is not None:
            raise TraceError(f"row {n}: data after the total row")
        if len(row) != len(TRACE_HEADER):
            raise TraceError(f"row {n}: expected {len(TRACE_HEADER)} fields, got {len(row)}")
        try:
            values = [float(row[i]) for i in _FLOAT_COLS]
            counts = [int(row[i]) for i in _INT_COLS]
        except ValueError as exc:
            raise TraceError(f"row {n}: {exc}") from exc
        if not all(math.isfinite(v) for v in values):
            raise TraceError(f"row {n}: non-finite value")
        if row[0] == "total":
            total = ReplayRow(-1, "", values, counts)
            continue
        try:
            epoch = int(row[0])
        except ValueError as exc:
            raise TraceError(f"row {n}: bad epoch {row[0]!r}") from exc
        if parsed and epoch != parsed[-1].epoch + 1:
            raise TraceError(f"row {n}: epoch {epoch} does not follow {parsed[-1].epoch}")
        reward, revenue, *costs = values
        if abs(reward - (revenue - math.fsum(costs))) > tol:
            raise TraceError(f"row {n}: reward {reward} != components {revenue - math.fsum(costs)}")
        parsed.append(ReplayRow(epoch, row[1], values, counts))
    if total is not None:
        for j, name in enumerate(TRACE_HEADER[2:10]):
            s = math.fsum(r.values[j] for r in parsed)
            if abs(s - total.values[j]) > tol * max(1.0, abs(s)):
                raise TraceError(f"row {len(rows)}: total {name} {total.values[j]} != sum of rows {s}")
        for j, name in enumerate(TRACE_HEADER[10:]):
            s = sum(r.counts[j] for r in parsed)
            if s != total.counts[j]:
                raise TraceError(f"row {len(rows)}: total {name} {total.counts[j]} != sum of rows {s}")
    return parsed, total


def format_replay(rows: list[ReplayRow], total: ReplayRow | None) -> str:
    """Human-readable per-epoch decomposition with 2-decimal MU amounts."""
    if not rows:
        return ""
    names = TRACE_HEADER[2:10]
    lines = ["epoch  action                " + " ".join(f"{n[:12]:>12s}" for n in names)]
    for r in rows:
        lines.append(f"{r.epoch:5d}  {r.action:22s}" + " ".join(f"{v:12.2f}" for v in r.values))
    if total is not None:
        lines.append(f"{'total':>5s}  {'':22s}" + " ".join(f"{v:12.2f}" for v in total.values))
    return "\n".join(lines) + "\n"


def replay_to_csv(rows: list[ReplayRow], path: str | Path) -> None:
    write_csv(Path(path), ["epoch", "action", *TRACE_HEADER[2:10]],
              [[r.epoch, r.action, *r.values] for r in rows])


# ---------------------------------------------------------------- rerun

def load_manifest(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(doc, dict) or "command" not in doc or "config" not in doc:
        raise ConfigError(f"{path}: not a run manifest")
    return doc


def rerun(manifest_path: str | Path, out: str | Path) -> dict:
    """Regenerate a run from its manifest into ``out``."""
    doc = load_manifest(manifest_path)
    scenario = scenario_from_dict(doc["config"])
    args = doc.get("args", {})
    cmd = doc["command"]
    if cmd == "train":
        return run_train(scenario, out)
    if cmd == "compare":
        return run_compare(scenario, out, args.get("checkpoint"))
    if cmd == "sensitivity":
        return run_sensitivity(scenario, out, args["grid"], args.get("checkpoint"), args.get("retrain"))
    if cmd == "simulate":
        return run_simulate(scenario, out, args["policy"], args.get("episode", 0), args.get("checkpoint"))
    raise ConfigError(f"command={cmd!r}: cannot be rerun")


__all__ = [
    "GRIDS",
    "RETRAIN_BY_DEFAULT",
    "SUMMARY_COLUMNS",
    "TRAINING_COLUMNS",
    "TraceError",
    "apply_cell",
    "format_replay",
    "replay_to_csv",
    "replay_trace",
    "rerun",
    "run_compare",
    "run_sensitivity",
    "run_simulate",
    "run_train",
]
