"""Command-line front end: plan, jsi, network, verify, calibrate.

Exit codes: 0 success, 1 input error, 2 domain infeasibility or verification
failure. All outputs are plain data (JSON / CSV / DOT); rendering is left to
external tools. Stochastic subcommands require --seed and are byte-reproducible
for a given seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibration
from .grid import ChannelGrid, as_channel
from .network import Topology, UserAllocation, induced_topology
from .photon_stats import link_stats_montecarlo, measure_jsi
from .planner import (Plan, PlanError, PlanInfeasibleError, PlanProblem,
                      plan_schedule, plan_with_allocation_search, verify_plan)
from .qkd import link_stats_for_plan, network_skr, optimize_durations
from .sfwm import PumpConfig, correlation_graph

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2


class InputError(Exception):
    """User-facing input problem; message carries the location when known."""


def _load_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _require(data: dict, key: str, where: str):
    if key not in data:
        raise InputError(f"{where}: missing required field {key!r}")
    return data[key]


def _write_text(path: Path, text: str, force: bool) -> None:
    if path.exists() and not force:
        raise InputError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _parse_channel_list(text: str) -> list:
    """Comma list 'C30,C31' or inclusive range 'C30:C50'."""
    if ":" in text:
        lo, hi = text.split(":", 1)
        lo_i, hi_i = as_channel(lo).index, as_channel(hi).index
        if lo_i > hi_i:
            raise InputError(f"empty channel range {text!r}")
        return list(range(lo_i, hi_i + 1))
    return [as_channel(tok).index for tok in text.split(",") if tok]


def load_problem(path: Path) -> PlanProblem:
    data = _load_json(path)
    where = str(path)
    users = tuple(str(u) for u in _require(data, "users", where))
    grid = ChannelGrid.from_json_dict(data.get("grid", {}))
    target_field = data.get("target", "complete")
    if target_field == "complete":
        target = Topology.complete(users)
    else:
        target = Topology(users=users,
                          edges=frozenset(tuple(map(str, e)) for e in target_field))
    alloc_field = data.get("alloc", "free")
    alloc = None
    if alloc_field != "free":
        alloc = UserAllocation.from_json_dict(alloc_field, users=users)
    try:
        return PlanProblem(
            target=target, grid=grid, alloc=alloc,
            max_pumps_per_config=int(data.get("max_pumps_per_config", 3)),
            max_configs=int(data.get("max_configs", 8)),
            guard_band=int(data.get("guard_band", 1)),
        )
    except (PlanError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from exc


def _load_params(path: str | None) -> calibration.CalibrationResult:
    if path is None:
        return calibration.load_defaults()
    return calibration.CalibrationResult.from_json_dict(_load_json(Path(path)))


def cmd_plan(args) -> int:
    problem = load_problem(Path(args.problem))
    out = Path(args.out)
    try:
        if args.exhaustive_alloc:
            plan = plan_with_allocation_search(problem)
        else:
            plan = plan_schedule(problem)
    except PlanInfeasibleError as exc:
        print("plan infeasible:", file=sys.stderr)
        print(exc.report.describe(), file=sys.stderr)
        return EXIT_INFEASIBLE
    report = verify_plan(problem, plan)
    if not report.ok:
        print("planned schedule failed verification:", file=sys.stderr)
        for v in report.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_text(out / "plan.json", _dump_json(plan.to_json_dict()), args.force)
    for cfg, _ in plan.schedule.entries:
        topo = induced_topology(plan.alloc, cfg, plan.grid, plan.guard_band)
        _write_text(out / f"{cfg.label}.dot",
                    topo.to_dot(name=cfg.label, alloc=plan.alloc), args.force)
    print(f"plan: {len(plan.configs)} configuration(s) cover "
          f"{len(plan.target.edges)} target edge(s)")
    for cfg, _ in plan.schedule.entries:
        pumps = ",".join(str(c) for c in cfg.channels)
        print(f"  {cfg.label}: pumps {pumps}")
    print(f"wrote {out / 'plan.json'}")
    return EXIT_OK


def cmd_jsi(args) -> int:
    params = _load_params(args.params)
    grid_bounds = _parse_channel_list(args.grid) if args.grid else None
    grid = (ChannelGrid(min_index=grid_bounds[0], max_index=grid_bounds[-1])
            if grid_bounds else ChannelGrid())
    pumps = PumpConfig.from_channels(_parse_channel_list(args.pumps), label="jsi")
    channels = _parse_channel_list(args.channels)
    if args.mode == "montecarlo" and args.seed is None:
        raise InputError("--seed is required in montecarlo mode")
    loss = params.link.loss_db_per_side if args.loss_db is None else args.loss_db
    jsi = measure_jsi(pumps, channels, grid, params.source, params.detector,
                      loss_db=loss, window_ps=params.window_ps,
                      integration_s=args.integration, mode=args.mode,
                      seed=args.seed)
    out = Path(args.out)
    _write_text(out / "jsi_counts.csv", jsi.to_csv(), args.force)
    meta = jsi.to_json_dict()
    meta["mode"] = args.mode
    meta["seed"] = args.seed
    _write_text(out / "jsi_meta.json", _dump_json(meta), args.force)
    print(f"jsi: {len(jsi.sums)} coincidence line(s), "
          f"{len(jsi.forbidden)} forbidden channel(s)")
    print(f"wrote {out / 'jsi_counts.csv'}")
    return EXIT_OK


def _plan_problem_from_plan(plan: Plan) -> PlanProblem:
    return PlanProblem(target=plan.target, grid=plan.grid, alloc=plan.alloc,
                       guard_band=plan.guard_band)


def cmd_network(args) -> int:
    params = _load_params(args.params)
    plan = Plan.from_json_dict(_load_json(Path(args.plan)))
    problem = _plan_problem_from_plan(plan)
    report = verify_plan(problem, plan)
    if not report.ok:
        print("plan failed verification; not simulating:", file=sys.stderr)
        for v in report.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.mode == "montecarlo" and args.seed is None:
        raise InputError("--seed is required in montecarlo mode")

    loss = params.link.loss_db_per_side
    if args.mode == "analytic":
        stats = link_stats_for_plan(plan, params.source, params.detector,
                                    loss_db_per_side=loss,
                                    window_ps=params.window_ps,
                                    integration_time=args.integration)
    else:
        stats = {}
        jobs = []
        for cfg, _ in plan.schedule.entries:
            topo = induced_topology(plan.alloc, cfg, plan.grid, plan.guard_band)
            for pair in topo.sorted_edges():
                jobs.append((cfg, pair))
        seeds = np.random.SeedSequence(args.seed).spawn(len(jobs))
        graphs = {cfg.label: correlation_graph(cfg, plan.grid, exclude_forbidden=True)
                  for cfg, _ in plan.schedule.entries}
        for (cfg, pair), seq in zip(jobs, seeds):
            u, v = pair
            link = link_stats_montecarlo(
                (plan.alloc.channel_of[u], plan.alloc.channel_of[v]),
                graphs[cfg.label], params.source, params.detector,
                params.detector, loss, loss, params.window_ps,
                duration_s=args.integration,
                seed=int(seq.generate_state(1, np.uint64)[0]))
            stats.setdefault(cfg.label, {})[pair] = link

    if args.optimize_durations:
        plan.schedule = optimize_durations(plan, stats, params.qkd)
    report_skr = network_skr(plan, stats, params.qkd)
    payload = report_skr.to_json_dict()
    payload["mode"] = args.mode
    payload["seed"] = args.seed
    payload["integration_s"] = args.integration
    payload["durations_s"] = {cfg.label: d for cfg, d in plan.schedule.entries}
    out = Path(args.out)
    _write_text(out / "skr_report.json", _dump_json(payload), args.force)
    _write_text(out / "skr_matrix.csv", report_skr.to_csv(plan.alloc.users), args.force)
    s = report_skr.summary
    print(f"network: {s['links_positive']}/{s['links_total']} links with positive "
          f"key rate, mean {s['mean_overall_bps']:.1f} bps")
    print(f"wrote {out / 'skr_report.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    plan = Plan.from_json_dict(_load_json(Path(args.plan)))
    report = verify_plan(_plan_problem_from_plan(plan), plan)
    print(_dump_json(report.to_json_dict()), end="")
    if not report.ok:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_calibrate(args) -> int:
    targets = calibration.CalibrationTargets()
    if args.singles_rate is not None:
        targets = calibration.CalibrationTargets(singles_rate=args.singles_rate)
    result = calibration.calibrate(targets=targets,
                                   fit_skr_mean=not args.no_skr_fit)
    out = Path(args.out)
    if out.exists() and not args.force:
        raise InputError(f"{out} exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    calibration.write_defaults(result, out)
    print(f"calibrated defaults written to {out}")
    for key, value in sorted(result.achieved.items()):
        print(f"  {key}: {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pumpnet",
        description="Plan and simulate pump-managed entanglement distribution networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan a pump-configuration schedule")
    p_plan.add_argument("problem", help="problem JSON file")
    p_plan.add_argument("--out", default=".", help="output directory")
    p_plan.add_argument("--force", action="store_true")
    p_plan.add_argument("--exhaustive-alloc", action="store_true",
                        help="search user allocations jointly (small problems only)")
    p_plan.set_defaults(func=cmd_plan)

    p_jsi = sub.add_parser("jsi", help="joint spectral intensity matrix")
    p_jsi.add_argument("--pumps", required=True, help="e.g. C39,C41")
    p_jsi.add_argument("--channels", required=True, help="e.g. C30:C50")
    p_jsi.add_argument("--grid", default=None, help="grid bounds, e.g. C1:C72")
    p_jsi.add_argument("--mode", choices=("analytic", "montecarlo"), default="analytic")
    p_jsi.add_argument("--integration", type=float, default=20.0,
                       help="integration time per pair (s)")
    p_jsi.add_argument("--seed", type=int, default=None)
    p_jsi.add_argument("--loss-db", type=float, default=None,
                       help="loss per side (dB); defaults to the link budget")
    p_jsi.add_argument("--params", default=None, help="defaults JSON file")
    p_jsi.add_argument("--out", default=".", help="output directory")
    p_jsi.add_argument("--force", action="store_true")
    p_jsi.set_defaults(func=cmd_jsi)

    p_net = sub.add_parser("network", help="key rates for a planned network")
    p_net.add_argument("plan", help="plan JSON file")
    p_net.add_argument("--mode", choices=("analytic", "montecarlo"), default="analytic")
    p_net.add_argument("--integration", type=float, default=600.0,
                       help="per-link measurement time (s)")
    p_net.add_argument("--seed", type=int, default=None)
    p_net.add_argument("--optimize-durations", action="store_true",
                       help="re-weight time slices to maximize the worst link")
    p_net.add_argument("--params", default=None)
    p_net.add_argument("--out", default=".", help="output directory")
    p_net.add_argument("--force", action="store_true")
    p_net.set_defaults(func=cmd_network)

    p_ver = sub.add_parser("verify", help="independently re-check a plan")
    p_ver.add_argument("plan", help="plan JSON file")
    p_ver.set_defaults(func=cmd_verify)

    p_cal = sub.add_parser("calibrate", help="solve and write model defaults")
    p_cal.add_argument("--out", required=True, help="defaults JSON path")
    p_cal.add_argument("--force", action="store_true")
    p_cal.add_argument("--no-skr-fit", action="store_true",
                       help="skip the network key-rate fit of the singles scale")
    p_cal.add_argument("--singles-rate", type=float, default=None,
                       help="override the singles scale (counts/s)")
    p_cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlanInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
