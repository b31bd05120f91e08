"""Command-line entry point.

Subcommands::

    cadsim validate SCENARIO
    cadsim fixture --agents N --seed S -o PATH [--truth-out PATH]
    cadsim simulate --scenario PATH [--config PATH] -o PATH [--seed S] [--jobs N] [--dump-csv PATH]
    cadsim metrics --batch PATH [--truth PATH] -o PATH [--csv PATH]

Exit codes: 0 success, 1 validation failure, 2 I/O or schema error.
Diagnostics and the resolved configuration go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from cadsim.errors import CadsimError, SchemaError, ValidationError
from cadsim.fixture import DEFAULT_DT, DEFAULT_HISTORY_LEN, DEFAULT_HORIZON, make_fixture_scenario, make_fixture_truth
from cadsim.metrics import compute_batch_metrics, ground_truth_to_dict, load_ground_truth, metrics_to_csv, metrics_to_json
from cadsim.rollout import RolloutConfig, load_batch, load_rollout_config, save_batch, simulate_batch
from cadsim.scenario import load_scenario, partition_agents, save_scenario

logger = logging.getLogger("cadsim")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _echo(settings: dict) -> None:
    print("resolved config: " + json.dumps(settings, sort_keys=True), file=sys.stderr)


def cmd_validate(args: argparse.Namespace) -> int:
    _echo({"command": "validate", "scenario": args.scenario})
    scenario = load_scenario(args.scenario)
    part = partition_agents(scenario)
    print(
        f"OK {scenario.scenario_id}: {len(scenario.agents)} agents, H={scenario.history_len}, "
        f"T={scenario.horizon}, dt={scenario.dt}; adv={part.adv} "
        f"world_p={sorted(part.world_p)} world_o={sorted(part.world_o)}"
    )
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    _echo({"command": "fixture", **{k: v for k, v in vars(args).items() if k != "func"}})
    scenario = make_fixture_scenario(args.agents, args.seed, args.history, args.horizon, args.dt)
    save_scenario(scenario, args.output)
    if args.truth_out:
        truth = make_fixture_truth(scenario, args.seed)
        Path(args.truth_out).write_text(json.dumps(ground_truth_to_dict(truth)) + "\n", encoding="utf-8")
    return EXIT_OK


def _dump_csv(batch, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rollout", "agent_id", "step", "x", "y", "z", "heading"])
        for r_idx, r in enumerate(batch.rollouts):
            for agent_id, pose in r.poses.items():
                for step, (p, h) in enumerate(zip(pose.positions.tolist(), pose.headings.tolist())):
                    writer.writerow([r_idx, agent_id, step + 1, repr(p[0]), repr(p[1]), repr(p[2]), repr(h)])


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    config = load_rollout_config(args.config) if args.config else RolloutConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.num_rollouts is not None:
        overrides["num_rollouts"] = args.num_rollouts
    overrides["jobs"] = args.jobs
    config = dataclasses.replace(config, **overrides)
    _echo({"command": "simulate", "scenario": args.scenario, "output": args.output, "jobs": args.jobs, **config.to_dict()})
    batch = simulate_batch(scenario, config)
    save_batch(batch, args.output)
    if args.dump_csv:
        _dump_csv(batch, args.dump_csv)
    logger.info("wrote %d rollouts to %s", len(batch.rollouts), args.output)
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    _echo({"command": "metrics", **{k: v for k, v in vars(args).items() if k != "func"}})
    batch = load_batch(args.batch)
    truth = load_ground_truth(args.truth) if args.truth else None
    ade_agents = None
    if args.tracked_only:
        if not args.scenario:
            raise ValidationError("--tracked-only needs --scenario", rule="cli")
        part = partition_agents(load_scenario(args.scenario))
        ade_agents = part.adv_ids | part.world_p
    m = compute_batch_metrics(batch, args.threshold, args.distance_mode, truth, ade_agents)
    Path(args.output).write_text(metrics_to_json(batch.scenario_id, m), encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(metrics_to_csv([(batch.scenario_id, m)]), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file against schema and invariants")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fixture", help="write a deterministic synthetic scenario")
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--history", type=int, default=DEFAULT_HISTORY_LEN)
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--truth-out", help="also write a ground-truth future file")
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("simulate", help="run a rollout batch")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config", help="rollout config JSON (defaults apply when omitted)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--num-rollouts", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker thread cap")
    p.add_argument("--dump-csv", help="also write per-step positions as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="score a rollout batch")
    p.add_argument("--batch", required=True)
    p.add_argument("--truth")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--csv", help="also write a one-row CSV")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--distance-mode", choices=["3d", "xy"], default="3d")
    p.add_argument("--scenario", help="scenario file, needed by --tracked-only")
    p.add_argument("--tracked-only", action="store_true", help="minADE over ADV and World-p only")
    p.set_defaults(func=cmd_metrics)
    return parser


def _is_io_error(exc: BaseException) -> bool:
    while exc is not None:
        if isinstance(exc, (SchemaError, OSError)):
            return True
        exc = exc.__cause__
    return False


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CadsimError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO if _is_io_error(exc) else EXIT_INVALID


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
