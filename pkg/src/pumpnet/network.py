"""User allocation, per-configuration topology, and time-shared rates.

Each user owns exactly one frequency channel for the lifetime of the network;
only the pump configuration changes over time. A pump configuration induces a
temporary user topology (which channel pairs are correlated and usable), and
cycling through configurations accumulates those temporary topologies into
the target one. Rates average over the cycle: total events / total time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .grid import Channel, ChannelGrid, as_channel
from .sfwm import PumpConfig, correlation_graph, forbidden_channels

DEFAULT_GUARD_BAND = 1


class NetworkError(ValueError):
    """Invalid allocation, topology, or schedule."""


def user_pair(u: str, v: str) -> tuple[str, str]:
    """Canonical unordered user pair."""
    if u == v:
        raise NetworkError(f"self-pair {u!r}")
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class UserAllocation:
    """Injective map from users to channels; one channel per user, no sharing."""

    users: tuple[str, ...]
    channel_of: Mapping[str, Channel]

    def __post_init__(self):
        if len(set(self.users)) != len(self.users):
            raise NetworkError("duplicate user identifiers")
        if set(self.channel_of) != set(self.users):
            raise NetworkError("channel_of must cover exactly the user list")
        mapping = {u: as_channel(self.channel_of[u]) for u in self.users}
        object.__setattr__(self, "channel_of", mapping)
        indices = [c.index for c in mapping.values()]
        if len(set(indices)) != len(indices):
            raise NetworkError("users must not share channels")

    @property
    def channels(self) -> tuple[Channel, ...]:
        return tuple(self.channel_of[u] for u in self.users)

    def index_of(self, user: str) -> int:
        return self.channel_of[user].index

    def to_json_dict(self) -> dict:
        return {u: str(self.channel_of[u]) for u in self.users}

    @classmethod
    def from_json_dict(cls, data: Mapping[str, object],
                       users: Sequence[str] | None = None) -> "UserAllocation":
        order = tuple(users) if users is not None else tuple(data)
        return cls(users=order, channel_of={u: as_channel(data[u]) for u in order})


@dataclass(frozen=True)
class Topology:
    """User-level adjacency: an unordered edge set over a fixed user list."""

    users: tuple[str, ...]
    edges: frozenset[tuple[str, str]]

    def __post_init__(self):
        object.__setattr__(self, "edges",
                           frozenset(user_pair(u, v) for u, v in self.edges))
        known = set(self.users)
        for u, v in self.edges:
            if u not in known or v not in known:
                raise NetworkError(f"edge ({u}, {v}) references unknown user")

    @classmethod
    def complete(cls, users: Sequence[str]) -> "Topology":
        users = tuple(users)
        edges = frozenset(user_pair(u, v)
                          for i, u in enumerate(users) for v in users[i + 1:])
        return cls(users=users, edges=edges)

    def degree(self, user: str) -> int:
        return sum(1 for e in self.edges if user in e)

    def has_edge(self, u: str, v: str) -> bool:
        return user_pair(u, v) in self.edges

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edges)

    def to_json_dict(self) -> dict:
        return {"users": list(self.users),
                "edges": [list(e) for e in self.sorted_edges()]}

    def to_dot(self, name: str = "topology",
               alloc: UserAllocation | None = None) -> str:
        lines = [f'graph "{name}" {{']
        for u in self.users:
            label = u if alloc is None else f"{u}\\n{alloc.channel_of[u]}"
            lines.append(f'  "{u}" [label="{label}"];')
        for u, v in self.sorted_edges():
            lines.append(f'  "{u}" -- "{v}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Schedule:
    """Timed sequence of pump configurations."""

    entries: tuple[tuple[PumpConfig, float], ...]

    def __post_init__(self):
        if not self.entries:
            raise NetworkError("schedule needs at least one entry")
        if any(duration <= 0 for _, duration in self.entries):
            raise NetworkError("durations must be positive")

    @property
    def total_duration(self) -> float:
        return sum(d for _, d in self.entries)

    @property
    def configs(self) -> tuple[PumpConfig, ...]:
        return tuple(c for c, _ in self.entries)


def induced_topology(alloc: UserAllocation, pumps: PumpConfig, grid: ChannelGrid,
                     guard_band: int = DEFAULT_GUARD_BAND) -> Topology:
    """Temporary topology established by one pump configuration.

    Users u, v are linked iff their channel pair is a usable correlation edge
    and neither channel collides with a bright channel or sits within
    guard_band of any pump. A user whose channel equals a pump channel (guard
    distance 0) keeps no edges at all under this configuration.
    """
    for ch in alloc.channels:
        grid.validate(ch)
    graph = correlation_graph(pumps, grid, exclude_forbidden=True)
    forbidden = forbidden_channels(pumps, grid).indices
    pump_idx = pumps.indices

    def usable(user: str) -> bool:
        c = alloc.index_of(user)
        if c in forbidden:
            return False
        return all(abs(c - p) > guard_band for p in pump_idx)

    active = [u for u in alloc.users if usable(u)]
    edges = set()
    for i, u in enumerate(active):
        for v in active[i + 1:]:
            if graph.edge(alloc.channel_of[u], alloc.channel_of[v]) is not None:
                edges.add(user_pair(u, v))
    return Topology(users=alloc.users, edges=frozenset(edges))


def accumulate(topologies: Iterable[Topology]) -> Topology:
    """Edge union of temporary topologies over one time-sharing cycle."""
    topologies = list(topologies)
    if not topologies:
        raise NetworkError("nothing to accumulate")
    users = topologies[0].users
    if any(set(t.users) != set(users) for t in topologies):
        raise NetworkError("topologies must share an identical user set")
    edges = frozenset().union(*(t.edges for t in topologies))
    return Topology(users=users, edges=edges)


def timeshare_rates(schedule: Schedule,
                    per_entry_rates: Sequence[Mapping[tuple[str, str], float]]
                    ) -> dict[tuple[str, str], float]:
    """Overall per-link rates for a schedule: total events over total time.

    per_entry_rates holds, for each schedule entry in order, the link rates
    active during that entry (absent links count as zero).
    """
    if len(per_entry_rates) != len(schedule.entries):
        raise NetworkError("one rate mapping per schedule entry is required")
    total = schedule.total_duration
    overall: dict[tuple[str, str], float] = {}
    for (_, duration), rates in zip(schedule.entries, per_entry_rates):
        for pair, rate in rates.items():
            if rate < 0:
                raise NetworkError(f"negative rate for link {pair}")
            key = user_pair(*pair)
            overall[key] = overall.get(key, 0.0) + rate * duration
    return {pair: value / total for pair, value in sorted(overall.items())}
