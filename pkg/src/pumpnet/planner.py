"""Search for pump-configuration schedules realizing a target topology.

The planner covers the target edge set with as few pump configurations as
possible: a greedy weighted set cover over the candidate pool, followed by an
exact branch-and-bound pass on small instances that tries to beat the greedy
count. Coverage evaluation works on integer channel sums and edge bitmasks;
`verify_plan` re-derives every induced topology through the full correlation
graph, keeping checker and search independent.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .grid import Channel, ChannelGrid
from .network import (DEFAULT_GUARD_BAND, Schedule, Topology, UserAllocation,
                      accumulate, induced_topology)
from .sfwm import DEFAULT_MAX_PUMPS, DEFAULT_PUMP_POWER_MW, PumpConfig, forbidden_channels

LOGGER = logging.getLogger(__name__)

DEFAULT_POOL_CAP = 50_000
DEFAULT_EXACT_THRESHOLD = 6
DEFAULT_EXACT_POOL_LIMIT = 20_000
DEFAULT_MAX_CONFIGS = 8


class PlanError(ValueError):
    """Malformed planning problem."""


@dataclass
class InfeasibilityReport:
    """Why a target could not be covered."""

    stuck_edges: tuple[tuple[str, str], ...]
    reasons: dict[tuple[str, str], str]
    pool_truncated: bool = False
    configs_found: int = 0
    max_configs: int = 0

    def describe(self) -> str:
        lines = []
        if self.stuck_edges:
            lines.append("uncoverable target edges:")
            for e in self.stuck_edges:
                lines.append(f"  {e[0]} -- {e[1]}: {self.reasons.get(e, 'unknown')}")
        elif self.configs_found > self.max_configs:
            lines.append(
                f"cover needs {self.configs_found} configurations, "
                f"limit is {self.max_configs}")
        if self.pool_truncated:
            lines.append("note: candidate pool was truncated; result may be pessimistic")
        return "\n".join(lines) or "infeasible"


class PlanInfeasibleError(RuntimeError):
    def __init__(self, report: InfeasibilityReport):
        super().__init__(report.describe())
        self.report = report


@dataclass(frozen=True)
class PlanProblem:
    """Inputs of one planning run.

    alloc=None lets the planner place users on an even-spacing template.
    """

    target: Topology
    grid: ChannelGrid
    alloc: UserAllocation | None = None
    max_pumps_per_config: int = DEFAULT_MAX_PUMPS
    max_configs: int = DEFAULT_MAX_CONFIGS
    guard_band: int = DEFAULT_GUARD_BAND
    pump_power_mw: float = DEFAULT_PUMP_POWER_MW
    pool_cap: int = DEFAULT_POOL_CAP
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    exact_pool_limit: int = DEFAULT_EXACT_POOL_LIMIT

    def __post_init__(self):
        if self.max_pumps_per_config < 1 or self.max_configs < 1:
            raise PlanError("bounds must be positive")
        if self.guard_band < 0:
            raise PlanError("guard_band must be non-negative")
        if self.alloc is not None and set(self.alloc.users) != set(self.target.users):
            raise PlanError("allocation users must match target users")


@dataclass
class PlanStats:
    candidates_evaluated: int = 0
    pool_truncated: bool = False
    greedy_count: int = 0
    final_count: int = 0
    exact_search_ran: bool = False


@dataclass
class Plan:
    """A verified-coverable schedule plus the allocation it assumes."""

    schedule: Schedule
    alloc: UserAllocation
    grid: ChannelGrid
    guard_band: int
    coverage: dict[tuple[str, str], tuple[str, ...]]
    target: Topology
    stats: PlanStats = field(default_factory=PlanStats)

    @property
    def configs(self) -> tuple[PumpConfig, ...]:
        return self.schedule.configs

    def to_json_dict(self) -> dict:
        return {
            "alloc": self.alloc.to_json_dict(),
            "users": list(self.alloc.users),
            "grid": self.grid.to_json_dict(),
            "guard_band": self.guard_band,
            "configs": [
                {**cfg.to_json_dict(), "duration_s": duration}
                for cfg, duration in self.schedule.entries
            ],
            "target_edges": [list(e) for e in self.target.sorted_edges()],
            "coverage": {f"{u}|{v}": list(labels)
                         for (u, v), labels in sorted(self.coverage.items())},
            "stats": {
                "candidates_evaluated": self.stats.candidates_evaluated,
                "pool_truncated": self.stats.pool_truncated,
                "greedy_count": self.stats.greedy_count,
                "final_count": self.stats.final_count,
                "exact_search_ran": self.stats.exact_search_ran,
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Plan":
        users = tuple(data["users"])
        alloc = UserAllocation.from_json_dict(data["alloc"], users=users)
        grid = ChannelGrid.from_json_dict(data["grid"])
        entries = tuple(
            (PumpConfig.from_json_dict(cfg), float(cfg.get("duration_s", 1.0)))
            for cfg in data["configs"]
        )
        target = Topology(users=users,
                          edges=frozenset(tuple(e) for e in data["target_edges"]))
        coverage = {
            tuple(key.split("|")): tuple(labels)
            for key, labels in data.get("coverage", {}).items()
        }
        stats_d = data.get("stats", {})
        stats = PlanStats(
            candidates_evaluated=int(stats_d.get("candidates_evaluated", 0)),
            pool_truncated=bool(stats_d.get("pool_truncated", False)),
            greedy_count=int(stats_d.get("greedy_count", 0)),
            final_count=int(stats_d.get("final_count", len(entries))),
            exact_search_ran=bool(stats_d.get("exact_search_ran", False)),
        )
        return cls(schedule=Schedule(entries), alloc=alloc, grid=grid,
                   guard_band=int(data.get("guard_band", DEFAULT_GUARD_BAND)),
                   coverage=coverage, target=target, stats=stats)


def even_allocation(users: Sequence[str], grid: ChannelGrid) -> UserAllocation:
    """Spread users over the grid with the widest even channel step.

    An even step keeps integer midpoints between user channels available, so
    degenerate processes (pump exactly midway between two users) stay usable;
    odd steps would force every such midpoint onto or next to a user channel.
    """
    users = tuple(users)
    n = len(users)
    if n < 2:
        raise PlanError("need at least two users")
    span = grid.max_index - grid.min_index
    step = span // (n - 1)
    if step % 2:
        step -= 1
    if step < 2:
        raise PlanError(
            f"grid C{grid.min_index}..C{grid.max_index} too small for an even-spacing "
            f"allocation of {n} users")
    start = grid.min_index + (span - step * (n - 1)) // 2
    return UserAllocation(
        users=users,
        channel_of={u: Channel(start + step * i) for i, u in enumerate(users)})


def candidate_configs(alloc: UserAllocation | None, grid: ChannelGrid,
                      max_pumps: int = DEFAULT_MAX_PUMPS,
                      guard_band: int = DEFAULT_GUARD_BAND,
                      power_mw: float = DEFAULT_PUMP_POWER_MW) -> Iterator[PumpConfig]:
    """Stream all pump sets respecting the guard band against user channels.

    Sizes ascend from 1 to max_pumps; within a size, sets come in lexicographic
    order of their sorted indices. Pumps must sit strictly more than guard_band
    channels away from every user channel.
    """
    user_idx = [] if alloc is None else [c.index for c in alloc.channels]
    allowed = [c for c in range(grid.min_index, grid.max_index + 1)
               if all(abs(c - u) > guard_band for u in user_idx)]
    for size in range(1, max_pumps + 1):
        for combo in itertools.combinations(allowed, size):
            yield PumpConfig.from_channels(combo, power_mw=power_mw)


@dataclass
class _Candidate:
    config: PumpConfig
    mask: int
    n_pumps: int


def _evaluate_candidates(problem: PlanProblem, alloc: UserAllocation,
                         edges: list[tuple[str, str]]) -> tuple[list[_Candidate], bool]:
    """Coverage bitmask per candidate config, via integer sum arithmetic.

    A config covers edge (u, v) iff some process sum equals the channel-index
    sum of the pair and no bright channel of the config lands on a user
    channel. Configs colliding a bright channel with any user are dropped
    outright: a plan must keep every configuration collision-free.
    """
    user_of_channel = {alloc.index_of(u): u for u in alloc.users}
    edge_bit = {e: 1 << k for k, e in enumerate(edges)}
    sum_to_mask: dict[int, int] = {}
    for u, v in edges:
        s = alloc.index_of(u) + alloc.index_of(v)
        sum_to_mask[s] = sum_to_mask.get(s, 0) | edge_bit[(u, v)]

    candidates: list[_Candidate] = []
    truncated = False
    stream = candidate_configs(alloc, problem.grid, problem.max_pumps_per_config,
                               problem.guard_band, problem.pump_power_mw)
    for count, cfg in enumerate(stream):
        if count >= problem.pool_cap:
            truncated = True
            LOGGER.warning("candidate pool capped at %d configs; search may be "
                           "incomplete", problem.pool_cap)
            break
        idx = cfg.indices
        products = set()
        for a in idx:
            for b in idx:
                if a != b:
                    products.add(2 * a - b)
        for a, b, c in itertools.permutations(idx, 3):
            if a < b:
                products.add(a + b - c)
        if any(p in user_of_channel for p in products):
            continue
        mask = 0
        sums = {2 * a for a in idx} | {a + b for a, b in itertools.combinations(idx, 2)}
        for s in sums:
            mask |= sum_to_mask.get(s, 0)
        if mask:
            candidates.append(_Candidate(config=cfg, mask=mask, n_pumps=len(idx)))
    return candidates, truncated


def _greedy_cover(candidates: list[_Candidate], full_mask: int) -> list[_Candidate]:
    """Repeatedly take the config covering the most uncovered edges.

    Ties break toward fewer pumps, then lexicographically smaller indices.
    Stops when covered or when no candidate makes progress.
    """
    chosen: list[_Candidate] = []
    covered = 0
    while covered != full_mask:
        best = None
        best_key = None
        for cand in candidates:
            gain = (cand.mask & ~covered).bit_count()
            if gain == 0:
                continue
            key = (-gain, cand.n_pumps, cand.config.indices)
            if best_key is None or key < best_key:
                best, best_key = cand, key
        if best is None:
            break
        chosen.append(best)
        covered |= best.mask
    return chosen


def _branch_and_bound(candidates: list[_Candidate], full_mask: int,
                      upper_bound: int) -> list[_Candidate] | None:
    """Exact minimum set cover, searched only below the greedy upper bound.

    Candidates are deduplicated by coverage mask and dominated masks removed;
    both reductions preserve some minimum cover. Depth-first search branches
    on the uncovered edge with the fewest covering candidates, pruned by the
    ceil(uncovered / max_cover) bound, trying sizes from the counting lower
    bound upward so the first success is optimal.
    """
    by_mask: dict[int, _Candidate] = {}
    for cand in candidates:
        prev = by_mask.get(cand.mask)
        if prev is None or (cand.n_pumps, cand.config.indices) < (prev.n_pumps,
                                                                  prev.config.indices):
            by_mask[cand.mask] = cand
    unique = sorted(by_mask.values(),
                    key=lambda c: (-c.mask.bit_count(), c.n_pumps, c.config.indices))
    maximal: list[_Candidate] = []
    for cand in unique:
        if not any(cand.mask != other.mask and cand.mask & ~other.mask == 0
                   for other in unique):
            maximal.append(cand)
    if not maximal:
        return None
    max_cover = max(c.mask.bit_count() for c in maximal)
    n_bits = full_mask.bit_count()
    bit_cands: list[list[_Candidate]] = []
    for k in range(n_bits):
        bit = 1 << k
        bit_cands.append([c for c in maximal if c.mask & bit])
        if not bit_cands[-1]:
            return None

    def dfs(uncovered: int, chosen: list[_Candidate], limit: int):
        if uncovered == 0:
            return list(chosen)
        remaining = limit - len(chosen)
        if remaining <= 0:
            return None
        if (uncovered.bit_count() + max_cover - 1) // max_cover > remaining:
            return None
        branch_bit = None
        branch_n = None
        probe = uncovered
        while probe:
            bit_index = (probe & -probe).bit_length() - 1
            options = sum(1 for c in bit_cands[bit_index] if c.mask & uncovered)
            if options == 0:
                return None
            if branch_n is None or options < branch_n:
                branch_bit, branch_n = bit_index, options
            probe &= probe - 1
        for cand in bit_cands[branch_bit]:
            chosen.append(cand)
            result = dfs(uncovered & ~cand.mask, chosen, limit)
            chosen.pop()
            if result is not None:
                return result
        return None

    lower = (n_bits + max_cover - 1) // max_cover
    for limit in range(lower, upper_bound):
        result = dfs(full_mask, [], limit)
        if result is not None:
            return result
    return None


def _diagnose_stuck_edge(problem: PlanProblem, alloc: UserAllocation,
                         edge: tuple[str, str]) -> str:
    u, v = edge
    cu, cv = alloc.index_of(u), alloc.index_of(v)
    target_sum = cu + cv
    user_idx = [c.index for c in alloc.channels]
    allowed = [c for c in range(problem.grid.min_index, problem.grid.max_index + 1)
               if all(abs(c - w) > problem.guard_band for w in user_idx)]
    if not allowed:
        return "no grid channel clears the guard band around the users"
    producible = any(p + q == target_sum
                     for p in allowed for q in allowed if p <= q)
    if not producible:
        return (f"no allowed pump pair produces channel sum {target_sum} "
                f"(C{cu} + C{cv})")
    return ("every configuration producing this pair collides a bright channel "
            "with a user or is blocked by the guard band")


def plan_schedule(problem: PlanProblem) -> Plan:
    """Plan a minimal-count schedule covering the target topology.

    Greedy weighted set cover first; when the greedy count is small enough and
    the candidate pool is under the exact-search limit, an exact
    branch-and-bound pass attempts to shorten the schedule. Equal time slices
    are assigned per configuration. Raises PlanInfeasibleError with a stuck-edge
    report when the target cannot be covered within max_configs.
    """
    alloc = problem.alloc or even_allocation(problem.target.users, problem.grid)
    for ch in alloc.channels:
        problem.grid.validate(ch)
    edges = problem.target.sorted_edges()
    stats = PlanStats()

    if not edges:
        raise PlanError("target topology has no edges to cover")

    candidates, truncated = _evaluate_candidates(problem, alloc, edges)
    stats.candidates_evaluated = len(candidates)
    stats.pool_truncated = truncated
    full_mask = (1 << len(edges)) - 1

    chosen = _greedy_cover(candidates, full_mask)
    covered = 0
    for cand in chosen:
        covered |= cand.mask
    if covered != full_mask:
        stuck = [e for k, e in enumerate(edges) if not covered >> k & 1]
        reasons = {e: _diagnose_stuck_edge(problem, alloc, e) for e in stuck}
        raise PlanInfeasibleError(InfeasibilityReport(
            stuck_edges=tuple(stuck), reasons=reasons, pool_truncated=truncated,
            configs_found=len(chosen), max_configs=problem.max_configs))

    stats.greedy_count = len(chosen)
    if (len(chosen) <= problem.exact_threshold
            and len(candidates) <= problem.exact_pool_limit and len(chosen) > 1):
        stats.exact_search_ran = True
        improved = _branch_and_bound(candidates, full_mask, upper_bound=len(chosen))
        if improved is not None:
            chosen = improved
    stats.final_count = len(chosen)

    if len(chosen) > problem.max_configs:
        raise PlanInfeasibleError(InfeasibilityReport(
            stuck_edges=(), reasons={}, pool_truncated=truncated,
            configs_found=len(chosen), max_configs=problem.max_configs))

    labelled = tuple(
        (PumpConfig(cand.config.pumps, label=f"cfg{k + 1}"), 1.0)
        for k, cand in enumerate(chosen)
    )
    coverage = {
        e: tuple(cfg.label for (cfg, _), cand in zip(labelled, chosen)
                 if cand.mask >> k & 1)
        for k, e in enumerate(edges)
    }
    return Plan(schedule=Schedule(labelled), alloc=alloc, grid=problem.grid,
                guard_band=problem.guard_band, coverage=coverage,
                target=problem.target, stats=stats)


def plan_with_allocation_search(problem: PlanProblem,
                                max_allocations: int = 100_000) -> Plan:
    """Joint allocation + pump search: try every user-to-channel assignment.

    Exhaustive over channel combinations, so only meant for small problems
    (a handful of users on a short grid); combinations are capped to keep the
    run bounded. Users are assigned to the chosen channels in ascending order.
    """
    users = problem.target.users
    n = len(users)
    if n > 6:
        raise PlanError("exhaustive allocation search is limited to 6 users")
    grid_channels = list(range(problem.grid.min_index, problem.grid.max_index + 1))
    total = 1
    for k in range(n):
        total = total * (len(grid_channels) - k) // (k + 1)
    if total > max_allocations:
        raise PlanError(
            f"{total} candidate allocations exceed the cap {max_allocations}; "
            "shrink the grid")
    best: Plan | None = None
    for combo in itertools.combinations(grid_channels, n):
        alloc = UserAllocation(users=users,
                               channel_of={u: Channel(c) for u, c in zip(users, combo)})
        trial = PlanProblem(target=problem.target, grid=problem.grid, alloc=alloc,
                            max_pumps_per_config=problem.max_pumps_per_config,
                            max_configs=problem.max_configs,
                            guard_band=problem.guard_band,
                            pump_power_mw=problem.pump_power_mw,
                            pool_cap=problem.pool_cap,
                            exact_threshold=0,
                            exact_pool_limit=problem.exact_pool_limit)
        try:
            plan = plan_schedule(trial)
        except PlanInfeasibleError:
            continue
        if best is None or len(plan.configs) < len(best.configs):
            best = plan
    if best is None:
        raise PlanInfeasibleError(InfeasibilityReport(
            stuck_edges=tuple(problem.target.sorted_edges()),
            reasons={e: "no allocation admits a cover"
                     for e in problem.target.sorted_edges()},
            configs_found=0, max_configs=problem.max_configs))
    final = PlanProblem(target=problem.target, grid=problem.grid, alloc=best.alloc,
                        max_pumps_per_config=problem.max_pumps_per_config,
                        max_configs=problem.max_configs,
                        guard_band=problem.guard_band,
                        pump_power_mw=problem.pump_power_mw,
                        pool_cap=problem.pool_cap,
                        exact_threshold=problem.exact_threshold,
                        exact_pool_limit=problem.exact_pool_limit)
    return plan_schedule(final)


@dataclass
class VerificationReport:
    ok: bool
    missing_edges: tuple[tuple[str, str], ...]
    guard_violations: tuple[str, ...]
    forbidden_collisions: tuple[str, ...]
    channels_used: int
    users_total: int
    violations: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "missing_edges": [list(e) for e in self.missing_edges],
            "guard_violations": list(self.guard_violations),
            "forbidden_collisions": list(self.forbidden_collisions),
            "channels_used": self.channels_used,
            "users_total": self.users_total,
            "violations": list(self.violations),
        }


def verify_plan(problem: PlanProblem, plan: Plan) -> VerificationReport:
    """Independent plan checker.

    Recomputes every induced topology from the correlation graph (not the
    planner's sum arithmetic), then checks target coverage, the guard band
    between every pump and user, bright-channel collisions with user channels,
    and that the plan uses exactly one channel per user.
    """
    alloc = plan.alloc
    violations: list[str] = []
    guard_violations: list[str] = []
    forbidden_collisions: list[str] = []

    topologies = [induced_topology(alloc, cfg, plan.grid, plan.guard_band)
                  for cfg in plan.configs]
    achieved = accumulate(topologies) if topologies else Topology(alloc.users, frozenset())
    missing = tuple(sorted(problem.target.edges - achieved.edges))
    for e in missing:
        violations.append(f"target edge {e[0]} -- {e[1]} is not covered")

    for cfg in plan.configs:
        forbidden = forbidden_channels(cfg, plan.grid).indices
        for u in alloc.users:
            c = alloc.index_of(u)
            for p in cfg.indices:
                if abs(c - p) <= plan.guard_band:
                    msg = (f"{cfg.label or cfg.indices}: pump C{p} within guard band "
                           f"of user {u} (C{c})")
                    guard_violations.append(msg)
                    violations.append(msg)
            if c in forbidden:
                msg = (f"{cfg.label or cfg.indices}: bright channel C{c} "
                       f"collides with user {u}")
                forbidden_collisions.append(msg)
                violations.append(msg)

    channels_used = len({c.index for c in alloc.channels})
    if channels_used != len(alloc.users):
        violations.append("allocation does not use exactly one channel per user")

    return VerificationReport(
        ok=not violations,
        missing_edges=missing,
        guard_violations=tuple(guard_violations),
        forbidden_collisions=tuple(forbidden_collisions),
        channels_used=channels_used,
        users_total=len(alloc.users),
        violations=tuple(violations),
    )
