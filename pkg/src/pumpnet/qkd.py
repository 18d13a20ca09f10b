"""Simplified symmetric time-bin QKD rate layer.

Converts link coincidence statistics into sifted and secure key rates and
aggregates them over a time-shared schedule. The security penalty is a model,
not a proof: a monotone, pluggable yield curve maps an error proxy derived
from the CAR to secret bits per coincidence, so the whole layer can be
swapped for a real high-dimensional security bound without touching callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Mapping

from .network import Schedule, induced_topology, user_pair
from .photon_stats import DetectorModel, LinkStats, SourceModel, link_stats_analytic
from .sfwm import correlation_graph

if TYPE_CHECKING:
    from .planner import Plan

DEFAULT_DIMENSIONS = (2, 4, 8, 16)
DEFAULT_PENALTY_SLOPE = 3.0

# yield_fn(error, dimension) -> secret bits per sifted coincidence
YieldFn = Callable[[float, int], float]


class QkdModelError(ValueError):
    """Invalid QKD parameters."""


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def linear_penalty_yield(error: float, dim: int,
                         slope: float = DEFAULT_PENALTY_SLOPE) -> float:
    """Default yield curve: log2(d) minus a linear error penalty.

    y(d) = log2(d) - 2 * [log2(d) * error * slope]. The slope is a calibration
    constant; any slope >= 1 drives the yield to zero or below at the maximum
    error proxy 0.5, which the model contract requires.
    """
    bits = math.log2(dim)
    return bits - 2.0 * bits * error * slope

def entropy_penalty_yield(error: float, dim: int) -> float:
    """Alternative curve with a dimension-dependent entropy penalty.

    A frame of d time bins collects accidentals over a d/2-fold larger span
    than the binary frame, so the effective symbol error grows with the
    dimension: e_d = min(0.5, e * d / 2). The yield is the d-ary Fano bound
    y(d) = log2(d) - 2 * [h2(e_d) + e_d * log2(d - 1)]. Unlike the linear
    default, the optimal dimension genuinely shrinks as the link gets
    noisier, mirroring per-link dimension optimization.
    """
    e_d = min(0.5, error * dim / 2.0)
    return math.log2(dim) - 2.0 * (binary_entropy(e_d) + e_d * math.log2(dim - 1))


@dataclass(frozen=True)
class QkdParams:
    """Receiver and post-processing parameters shared by all users."""

    basis_match_prob: float = 0.5
    key_fraction: float = 0.7
    dimensions: tuple[int, ...] = DEFAULT_DIMENSIONS
    penalty_slope: float = DEFAULT_PENALTY_SLOPE
    yield_fn: YieldFn | None = None

    def __post_init__(self):
        for name in ("basis_match_prob", "key_fraction"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise QkdModelError(f"{name} must lie in [0, 1]")
        dims = tuple(self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        if not dims:
            raise QkdModelError("at least one encoding dimension is required")
        for d in dims:
            if d < 2 or d & (d - 1):
                raise QkdModelError(f"dimension {d} must be a power of two >= 2")

    def yield_bits(self, error: float, dim: int) -> float:
        if self.yield_fn is not None:
            return self.yield_fn(error, dim)
        return linear_penalty_yield(error, dim, self.penalty_slope)

    def to_json_dict(self) -> dict:
        return {
            "basis_match_prob": self.basis_match_prob,
            "key_fraction": self.key_fraction,
            "dimensions": list(self.dimensions),
            "penalty_slope": self.penalty_slope,
        }


def sifted_rate(stats: LinkStats, params: QkdParams) -> float:
    """Coincidences surviving basis matching and the key-generation split."""
    return stats.coincidence_rate * params.basis_match_prob * params.key_fraction


def error_proxy(stats: LinkStats) -> float:
    """Noise fraction estimate from the CAR, clamped to [0, 0.5]."""
    if math.isinf(stats.car):
        return 0.0
    return min(0.5, max(0.0, 1.0 / (1.0 + stats.car)))


@dataclass(frozen=True)
class SkrEstimate:
    skr_bps: float
    dimension: int
    error: float
    yield_bits: float


def skr_estimate(stats: LinkStats, params: QkdParams) -> SkrEstimate:
    """Secure key rate with the encoding dimension optimized per link.

    SKR = sifted_rate x max(0, max_d y(d)); the reported dimension is the
    smallest maximizer, scanning dimensions in ascending order.
    """
    e = error_proxy(stats)
    best_dim = params.dimensions[0]
    best_yield = -math.inf
    for d in sorted(params.dimensions):
        y = params.yield_bits(e, d)
        if y > best_yield:
            best_yield, best_dim = y, d
    skr = sifted_rate(stats, params) * max(0.0, best_yield)
    return SkrEstimate(skr_bps=skr, dimension=best_dim, error=e,
                       yield_bits=best_yield)


@dataclass
class LinkSkr:
    """Per-link key rates: within each serving configuration and time-shared."""

    pair: tuple[str, str]
    temporary_bps: dict[str, float]
    dimension: dict[str, int]
    overall_bps: float
    served: bool

    def to_json_dict(self) -> dict:
        return {
            "users": list(self.pair),
            "temporary_bps": {k: round(v, 6) for k, v in sorted(self.temporary_bps.items())},
            "dimension": dict(sorted(self.dimension.items())),
            "overall_bps": round(self.overall_bps, 6),
            "served": self.served,
        }


@dataclass
class NetworkSkrReport:
    links: list[LinkSkr]
    summary: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"links": [l.to_json_dict() for l in self.links],
                "summary": self.summary}

    def to_csv(self, users: tuple[str, ...]) -> str:
        """Upper-triangle matrix of overall rates, one row/column per user."""
        overall = {l.pair: l.overall_bps for l in self.links}
        lines = ["user," + ",".join(users)]
        for i, u in enumerate(users):
            cells = []
            for j, v in enumerate(users):
                if j <= i:
                    cells.append("")
                else:
                    cells.append(f"{overall.get(user_pair(u, v), 0.0):.3f}")
            lines.append(u + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def network_skr(plan: "Plan",
                per_config_stats: Mapping[str, Mapping[tuple[str, str], LinkStats]],
                params: QkdParams) -> NetworkSkrReport:
    """Aggregate per-configuration link statistics into network key rates.

    Every user pair is reported. The temporary rate applies within a serving
    configuration; the overall rate weights it by that configuration's share
    of the cycle and sums over serving configurations (total keys over total
    time). Pairs served by no configuration are flagged with zero rate.
    """
    total = plan.schedule.total_duration
    users = plan.alloc.users
    links: list[LinkSkr] = []
    for i, u in enumerate(users):
        for v in users[i + 1:]:
            pair = user_pair(u, v)
            temporary: dict[str, float] = {}
            dimension: dict[str, int] = {}
            overall = 0.0
            for cfg, duration in plan.schedule.entries:
                stats = per_config_stats.get(cfg.label, {}).get(pair)
                if stats is None:
                    continue
                est = skr_estimate(stats, params)
                temporary[cfg.label] = est.skr_bps
                dimension[cfg.label] = est.dimension
                overall += est.skr_bps * duration / total
            links.append(LinkSkr(pair=pair, temporary_bps=temporary,
                                 dimension=dimension, overall_bps=overall,
                                 served=bool(temporary)))
    n = len(links)
    positive = sum(1 for l in links if l.overall_bps > 0)
    summary = {
        "links_total": n,
        "links_served": sum(1 for l in links if l.served),
        "links_positive": positive,
        "mean_overall_bps": round(sum(l.overall_bps for l in links) / n, 6) if n else 0.0,
        "min_overall_bps": round(min((l.overall_bps for l in links), default=0.0), 6),
    }
    return NetworkSkrReport(links=links, summary=summary)


def link_stats_for_plan(plan: "Plan", source: SourceModel, detector: DetectorModel,
                        loss_db_per_side: float = 0.0,
                        window_ps: float = 200.0,
                        integration_time: float = 1.0,
                        ) -> dict[str, dict[tuple[str, str], LinkStats]]:
    """Analytic LinkStats for every active link of every configuration."""
    out: dict[str, dict[tuple[str, str], LinkStats]] = {}
    for cfg, _ in plan.schedule.entries:
        graph = correlation_graph(cfg, plan.grid, exclude_forbidden=True)
        topo = induced_topology(plan.alloc, cfg, plan.grid, plan.guard_band)
        stats: dict[tuple[str, str], LinkStats] = {}
        for u, v in topo.sorted_edges():
            edge = graph.edge(plan.alloc.channel_of[u], plan.alloc.channel_of[v])
            stats[(u, v)] = link_stats_analytic(
                edge, graph, source, detector, detector,
                loss_db_per_side, loss_db_per_side, window_ps,
                integration_time=integration_time)
        out[cfg.label] = stats
    return out


def optimize_durations(plan: "Plan",
                       per_config_stats: Mapping[str, Mapping[tuple[str, str], LinkStats]],
                       params: QkdParams) -> Schedule:
    """Re-weight time slices to maximize the minimum overall link rate.

    Linear program: maximize t subject to sum_c w_c * skr(link, c) >= t for
    every served link, with the weights w a probability vector. Unserved links
    cannot be helped by timing and are ignored. The result keeps the plan's
    total cycle duration.
    """
    from scipy.optimize import linprog

    entries = plan.schedule.entries
    n = len(entries)
    temp: dict[tuple[str, str], list[float]] = {}
    for k, (cfg, _) in enumerate(entries):
        for pair, stats in per_config_stats.get(cfg.label, {}).items():
            temp.setdefault(pair, [0.0] * n)[k] = skr_estimate(stats, params).skr_bps
    served = [rates for rates in temp.values() if any(rates)]
    if not served:
        return plan.schedule
    # variables: w_1..w_n, t ; maximize t
    c = [0.0] * n + [-1.0]
    a_ub = [[-r for r in rates] + [1.0] for rates in served]
    b_ub = [0.0] * len(served)
    a_eq = [[1.0] * n + [0.0]]
    b_eq = [1.0]
    bounds = [(0.0, 1.0)] * n + [(None, None)]
    result = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                     method="highs")
    if not result.success:
        return plan.schedule
    total = plan.schedule.total_duration
    weights = result.x[:n]
    floor = 1e-9
    weights = [max(w, floor) for w in weights]
    norm = sum(weights)
    return Schedule(tuple(
        (cfg, total * w / norm) for (cfg, _), w in zip(entries, weights)))
