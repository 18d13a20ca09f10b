"""SFWM process enumeration, channel-pair correlation graph, bright channels.

With k pump lasers on the grid, photon pairs are generated by k degenerate
processes (both pump photons from one laser) and k(k-1)/2 non-degenerate
processes (one photon from each of two lasers). A process with pump indices
(a, b) populates every channel pair (s, i) with s + i = a + b. Classical
bright light additionally appears at the stimulated-FWM products 2a - b and,
for three or more pumps, at the Bragg-scattering products a + b - c; those
channels (and the pump channels themselves) are unusable for network users.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .grid import Channel, ChannelGrid, as_channel

DEFAULT_PUMP_POWER_MW = 2.0
REFERENCE_POWER_MW = 2.0
DEFAULT_MAX_PUMPS = 3

KIND_DEGENERATE = "degenerate"
KIND_NON_DEGENERATE = "non_degenerate"

REASON_PUMP = "pump"
REASON_STIMULATED_FWM = "stimulated_fwm"
REASON_BRAGG = "bragg_scattering"

# Non-degenerate pairing is four times as bright as degenerate at equal powers:
# two distinguishable orderings of the two pump photons, squared in the rate.
NON_DEGENERATE_BOOST = 4.0


class PumpConfigError(ValueError):
    """Invalid pump configuration."""


@dataclass(frozen=True)
class PumpConfig:
    """A set of pump lasers, each a (channel, power in mW) pair.

    Pumps are stored sorted by channel index. This is the unit of network
    reconfiguration: switching PumpConfigs re-wires the logical topology.
    """

    pumps: tuple[tuple[Channel, float], ...]
    label: str = ""

    def __post_init__(self):
        pumps = tuple(sorted(((as_channel(c), float(p)) for c, p in self.pumps),
                             key=lambda cp: cp[0].index))
        object.__setattr__(self, "pumps", pumps)
        if not pumps:
            raise PumpConfigError("at least one pump is required")
        indices = [c.index for c, _ in pumps]
        if len(set(indices)) != len(indices):
            raise PumpConfigError(f"pump channels must be distinct, got {indices}")
        if any(p <= 0 for _, p in pumps):
            raise PumpConfigError("pump powers must be positive")

    @classmethod
    def from_channels(cls, channels: Iterable, power_mw: float = DEFAULT_PUMP_POWER_MW,
                      label: str = "") -> "PumpConfig":
        return cls(tuple((as_channel(c), power_mw) for c in channels), label=label)

    @property
    def channels(self) -> tuple[Channel, ...]:
        return tuple(c for c, _ in self.pumps)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(c.index for c, _ in self.pumps)

    def power_of(self, channel) -> float:
        idx = as_channel(channel).index
        for c, p in self.pumps:
            if c.index == idx:
                return p
        raise PumpConfigError(f"C{idx} is not a pump of this configuration")

    def validate_size(self, max_pumps: int = DEFAULT_MAX_PUMPS) -> "PumpConfig":
        if len(self.pumps) > max_pumps:
            raise PumpConfigError(
                f"{len(self.pumps)} pumps exceeds the configured maximum {max_pumps}")
        return self

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "pumps": [str(c) for c in self.channels],
            "powers_mw": [p for _, p in self.pumps],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PumpConfig":
        channels = [as_channel(c) for c in data["pumps"]]
        powers = data.get("powers_mw") or [DEFAULT_PUMP_POWER_MW] * len(channels)
        return cls(tuple(zip(channels, (float(p) for p in powers))),
                   label=str(data.get("label", "")))


@dataclass(frozen=True, order=True)
class SfwmProcess:
    """One pair-generation process, identified by its (ordered) pump pair."""

    pump_a: Channel
    pump_b: Channel
    kind: str
    sum: int

    def __post_init__(self):
        if self.pump_a.index > self.pump_b.index:
            raise PumpConfigError("pump_a must not exceed pump_b")
        expected_kind = KIND_DEGENERATE if self.pump_a == self.pump_b else KIND_NON_DEGENERATE
        if self.kind != expected_kind:
            raise PumpConfigError(f"kind {self.kind!r} inconsistent with pumps")
        if self.sum != self.pump_a.index + self.pump_b.index:
            raise PumpConfigError("process sum inconsistent with pump indices")

    def __str__(self):
        if self.kind == KIND_DEGENERATE:
            return f"deg({self.pump_a})"
        return f"nondeg({self.pump_a},{self.pump_b})"


@dataclass(frozen=True)
class Contribution:
    process: SfwmProcess
    relative_strength: float


@dataclass(frozen=True)
class CorrelationEdge:
    """A correlated channel pair with all processes feeding it.

    Independent processes landing on the same pair add incoherently, so the
    usable pair rate is proportional to the summed relative strengths.
    """

    signal: Channel
    idler: Channel
    contributions: tuple[Contribution, ...]

    def __post_init__(self):
        if self.signal.index >= self.idler.index:
            raise PumpConfigError("edge requires signal.index < idler.index")
        if not self.contributions:
            raise PumpConfigError("edge requires at least one contribution")
        seen = set()
        for contrib in self.contributions:
            if self.signal.index + self.idler.index != contrib.process.sum:
                raise PumpConfigError("contribution violates energy conservation")
            if contrib.process in seen:
                raise PumpConfigError("duplicate process contribution")
            seen.add(contrib.process)

    @property
    def pair(self) -> tuple[int, int]:
        return (self.signal.index, self.idler.index)

    @property
    def strength(self) -> float:
        return sum(c.relative_strength for c in self.contributions)

    def to_json_dict(self) -> dict:
        return {
            "signal": str(self.signal),
            "idler": str(self.idler),
            "strength": self.strength,
            "processes": [
                {"pumps": [str(c.process.pump_a), str(c.process.pump_b)],
                 "kind": c.process.kind,
                 "sum": c.process.sum,
                 "relative_strength": c.relative_strength}
                for c in self.contributions
            ],
        }


@dataclass
class ForbiddenSet:
    """Channels carrying classical bright light, with the reasons per channel."""

    channels: frozenset[Channel]
    reasons: dict[Channel, tuple[str, ...]] = field(default_factory=dict)

    def __contains__(self, channel) -> bool:
        return as_channel(channel) in self.channels

    @property
    def indices(self) -> frozenset[int]:
        return frozenset(c.index for c in self.channels)

    def sorted_channels(self) -> list[Channel]:
        return sorted(self.channels, key=lambda c: c.index)

    def to_json_dict(self) -> dict:
        return {
            str(c): list(self.reasons.get(c, ()))
            for c in self.sorted_channels()
        }


@dataclass
class CorrelationGraph:
    """All correlated channel pairs on a grid for one pump configuration."""

    pumps: PumpConfig
    grid: ChannelGrid
    edges: tuple[CorrelationEdge, ...]

    def __post_init__(self):
        self._edge_map = {e.pair: e for e in self.edges}
        self._incident: dict[int, list[CorrelationEdge]] = {}
        for e in self.edges:
            self._incident.setdefault(e.signal.index, []).append(e)
            self._incident.setdefault(e.idler.index, []).append(e)

    def edge(self, a, b) -> CorrelationEdge | None:
        ia, ib = as_channel(a).index, as_channel(b).index
        if ia > ib:
            ia, ib = ib, ia
        return self._edge_map.get((ia, ib))

    def incident(self, channel) -> tuple[CorrelationEdge, ...]:
        return tuple(self._incident.get(as_channel(channel).index, ()))

    def incident_strength(self, channel) -> float:
        return sum(e.strength for e in self.incident(channel))

    def __len__(self):
        return len(self.edges)

    def to_json_dict(self) -> dict:
        return {
            "pumps": self.pumps.to_json_dict(),
            "grid": self.grid.to_json_dict(),
            "edges": [e.to_json_dict() for e in self.edges],
        }


def enumerate_processes(pumps: PumpConfig) -> list[SfwmProcess]:
    """All pair-generation processes: one degenerate per pump, one
    non-degenerate per unordered pump pair."""
    channels = pumps.channels
    procs = [SfwmProcess(c, c, KIND_DEGENERATE, 2 * c.index) for c in channels]
    for i in range(len(channels)):
        for j in range(i + 1, len(channels)):
            a, b = channels[i], channels[j]
            procs.append(SfwmProcess(a, b, KIND_NON_DEGENERATE, a.index + b.index))
    return procs


def distinct_sums(pumps: PumpConfig) -> list[int]:
    """Deduplicated, sorted index sums of all processes.

    Each sum is one anti-diagonal coincidence line in the joint spectrum:
    1 line for a single pump, 3 for two pumps, and 5 or 6 for three pumps
    depending on whether they are equispaced.
    """
    return sorted({p.sum for p in enumerate_processes(pumps)})


def forbidden_channels(pumps: PumpConfig, grid: ChannelGrid) -> ForbiddenSet:
    """Channels made classically bright by the pump set, clipped to the grid.

    Covers the pump channels themselves, the stimulated-FWM products
    2a - b for every ordered pump pair, and the Bragg-scattering products
    a + b - c for every pump triple. Products falling outside the grid are
    dropped; they cannot collide with any user.
    """
    indices = pumps.indices
    reasons: dict[int, set[str]] = {}

    def note(idx: int, reason: str):
        if grid.min_index <= idx <= grid.max_index:
            reasons.setdefault(idx, set()).add(reason)

    for p in indices:
        note(p, REASON_PUMP)
    for a in indices:
        for b in indices:
            if a != b:
                note(2 * a - b, REASON_STIMULATED_FWM)
    k = len(indices)
    for i in range(k):
        for j in range(i + 1, k):
            for m in range(k):
                if m != i and m != j:
                    note(indices[i] + indices[j] - indices[m], REASON_BRAGG)

    channels = frozenset(Channel(i) for i in reasons)
    ordered = {Channel(i): tuple(sorted(reasons[i])) for i in sorted(reasons)}
    return ForbiddenSet(channels=channels, reasons=ordered)


def process_strength(process: SfwmProcess, pumps: PumpConfig,
                     reference_power_mw: float = REFERENCE_POWER_MW) -> float:
    """Relative pair rate of one process, normalized so a degenerate process
    at the reference power has strength 1."""
    pa = pumps.power_of(process.pump_a) / reference_power_mw
    if process.kind == KIND_DEGENERATE:
        return pa * pa
    pb = pumps.power_of(process.pump_b) / reference_power_mw
    return NON_DEGENERATE_BOOST * pa * pb


def correlation_graph(pumps: PumpConfig, grid: ChannelGrid,
                      exclude_forbidden: bool = False,
                      reference_power_mw: float = REFERENCE_POWER_MW) -> CorrelationGraph:
    """Build the channel-pair correlation graph for a pump configuration.

    For every process with sum S, every in-grid pair (s, i) with s < i and
    s + i = S becomes (or extends) an edge. Self-pairs s = i are excluded: a
    single channel cannot form a two-user link. A pair lying on two process
    lines carries both contributions, added incoherently. With
    exclude_forbidden, edges touching any bright channel are dropped; the
    entangled flux there may exist but is unusable behind the classical light.
    """
    forbidden = forbidden_channels(pumps, grid).indices if exclude_forbidden else frozenset()
    pair_contribs: dict[tuple[int, int], list[Contribution]] = {}
    for proc in enumerate_processes(pumps):
        strength = process_strength(proc, pumps, reference_power_mw)
        s_min = max(grid.min_index, proc.sum - grid.max_index)
        s_max = min(grid.max_index, proc.sum - grid.min_index)
        for s in range(s_min, s_max + 1):
            i = proc.sum - s
            if s >= i:
                break
            if s in forbidden or i in forbidden:
                continue
            pair_contribs.setdefault((s, i), []).append(Contribution(proc, strength))

    edges = tuple(
        CorrelationEdge(Channel(s), Channel(i), tuple(contribs))
        for (s, i), contribs in sorted(pair_contribs.items())
    )
    return CorrelationGraph(pumps=pumps, grid=grid, edges=edges)
