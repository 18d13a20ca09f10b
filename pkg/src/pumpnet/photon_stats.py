"""Coincidence statistics: analytic rate model and Monte Carlo time tags.

The analytic layer predicts singles, coincidence, and accidental rates for
any correlated channel pair from a flat-spectrum source model (pair rate
proportional to edge strength, one global brightness scale) plus a detector
model. The Monte Carlo layer draws photon arrival times at picosecond
resolution and recovers the same statistics through the coincidence counter,
which is the oracle-equivalence contract tested in the suite.

All stochastic entry points require an explicit seed and are bit-reproducible
for a given seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .grid import Channel, ChannelGrid, as_channel
from .sfwm import CorrelationGraph, PumpConfig, correlation_graph, distinct_sums, forbidden_channels

PS_PER_S = 1_000_000_000_000
DEFAULT_WINDOW_PS = 200.0
DEFAULT_ACCIDENTAL_OFFSET_PS = 10_000.0
DEFAULT_ACCIDENTAL_WINDOWS = 10


class SimulationError(ValueError):
    """Invalid simulator input."""


@dataclass(frozen=True)
class SourceModel:
    """Pair source plus channel-dependent background.

    brightness          pair rate (pairs/s) per unit edge strength
    residual_pump_noise singles rate one channel away from a pump (counts/s)
    noise_decay         per-channel multiplicative decay of that residual
    broadband_noise     flat photon background entering the fiber (counts/s)
    """

    brightness: float
    residual_pump_noise: float = 0.0
    noise_decay: float = 0.5
    broadband_noise: float = 0.0

    def __post_init__(self):
        if min(self.brightness, self.residual_pump_noise, self.broadband_noise) < 0:
            raise SimulationError("source rates must be non-negative")
        if not 0 < self.noise_decay <= 1:
            raise SimulationError("noise_decay must lie in (0, 1]")

    def residual_rate(self, channel, pumps: PumpConfig) -> float:
        """Residual pump-photon singles at a channel, summed over pumps.

        Defined for channel distance d >= 1; the pump channel itself is
        classically bright and handled as a forbidden channel, not as noise.
        """
        idx = as_channel(channel).index
        total = 0.0
        for p in pumps.indices:
            d = abs(idx - p)
            if d >= 1:
                total += self.residual_pump_noise * self.noise_decay ** (d - 1)
        return total

    def to_json_dict(self) -> dict:
        return {
            "brightness": self.brightness,
            "residual_pump_noise": self.residual_pump_noise,
            "noise_decay": self.noise_decay,
            "broadband_noise": self.broadband_noise,
        }


@dataclass(frozen=True)
class DetectorModel:
    """Single-photon detector: efficiency, darks, Gaussian jitter, dead time."""

    efficiency: float = 0.85
    dark_rate: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ns: float = 0.0

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise SimulationError("efficiency must lie in [0, 1]")
        if min(self.dark_rate, self.jitter_sigma_ps, self.dead_time_ns) < 0:
            raise SimulationError("detector rates/times must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "efficiency": self.efficiency,
            "dark_rate": self.dark_rate,
            "jitter_sigma_ps": self.jitter_sigma_ps,
            "dead_time_ns": self.dead_time_ns,
        }


@dataclass(frozen=True)
class LinkStats:
    """Per-link figures: coincidences, singles, accidentals, CAR."""

    coincidence_rate: float
    singles_a: float
    singles_b: float
    accidental_rate: float
    car: float
    integration_time: float = 1.0

    def __post_init__(self):
        if min(self.coincidence_rate, self.singles_a, self.singles_b,
               self.accidental_rate, self.integration_time) < 0:
            raise SimulationError("rates must be non-negative")
        if self.accidental_rate > 0 and math.isfinite(self.car):
            expected = self.coincidence_rate / self.accidental_rate
            if not math.isclose(self.car, expected, rel_tol=1e-9, abs_tol=1e-12):
                raise SimulationError("car must equal coincidence_rate / accidental_rate")


def db_to_transmission(loss_db: float) -> float:
    return 10.0 ** (-loss_db / 10.0)


def channel_singles_rate(channel, graph: CorrelationGraph, source: SourceModel,
                         detector: DetectorModel, loss_db: float = 0.0) -> float:
    """Detected singles rate on one channel.

    Sum of pair photons from every incident edge (through transmission and
    detector efficiency), residual pump photons decaying with channel
    distance, the broadband background (also through the channel), and darks.
    """
    ch = graph.grid.validate(channel)
    transmission = db_to_transmission(loss_db) * detector.efficiency
    pair_rate = source.brightness * graph.incident_strength(ch) * transmission
    return (pair_rate
            + source.residual_rate(ch, graph.pumps)
            + source.broadband_noise * transmission
            + detector.dark_rate)


def jitter_capture_fraction(window_ps: float, det_a: DetectorModel,
                            det_b: DetectorModel) -> float:
    """Probability that a jittered pair lands inside a centred window.

    The arrival-time difference of a pair is Gaussian with variance equal to
    the summed per-detector jitter variances; this integrates that Gaussian
    over +-window/2. Equals 1 for jitter-free detectors, so the windowless
    coincidence-rate formula is recovered in that limit.
    """
    sigma = math.hypot(det_a.jitter_sigma_ps, det_b.jitter_sigma_ps)
    if sigma == 0:
        return 1.0
    return math.erf((window_ps / 2.0) / (sigma * math.sqrt(2.0)))


def link_stats_analytic(edge, graph: CorrelationGraph, source: SourceModel,
                        det_a: DetectorModel, det_b: DetectorModel,
                        loss_a_db: float = 0.0, loss_b_db: float = 0.0,
                        window_ps: float = DEFAULT_WINDOW_PS,
                        integration_time: float = 1.0,
                        singles_a: float | None = None,
                        singles_b: float | None = None) -> LinkStats:
    """Deterministic coincidence statistics for one correlation edge.

    coincidence_rate = brightness x strength x (t_a eta_a) x (t_b eta_b),
    times the jitter capture fraction of the window; accidental_rate =
    singles_a x singles_b x window. Singles are computed from the full graph
    unless explicit overrides are given. Zero accidentals reports CAR as the
    +infinity sentinel.
    """
    if window_ps <= 0:
        raise SimulationError("window must be positive")
    eta_a = db_to_transmission(loss_a_db) * det_a.efficiency
    eta_b = db_to_transmission(loss_b_db) * det_b.efficiency
    capture = jitter_capture_fraction(window_ps, det_a, det_b)
    cc = source.brightness * edge.strength * eta_a * eta_b * capture
    if singles_a is None:
        singles_a = channel_singles_rate(edge.signal, graph, source, det_a, loss_a_db)
    if singles_b is None:
        singles_b = channel_singles_rate(edge.idler, graph, source, det_b, loss_b_db)
    ac = singles_a * singles_b * (window_ps / PS_PER_S)
    car = cc / ac if ac > 0 else math.inf
    return LinkStats(coincidence_rate=cc, singles_a=singles_a, singles_b=singles_b,
                     accidental_rate=ac, car=car, integration_time=integration_time)


@njit(cache=True)
def _greedy_match_count(tags_a, tags_b, half_window_ps, offset_ps):
    i = 0
    j = 0
    count = 0
    na = tags_a.shape[0]
    nb = tags_b.shape[0]
    while i < na and j < nb:
        delta = tags_a[i] - tags_b[j] - offset_ps
        if delta < -half_window_ps:
            i += 1
        elif delta > half_window_ps:
            j += 1
        else:
            count += 1
            i += 1
            j += 1
    return count


@njit(cache=True)
def _dead_time_filter(times, dead_ps):
    out = np.empty_like(times)
    k = 0
    last = -np.int64(2 ** 62)
    for idx in range(times.shape[0]):
        t = times[idx]
        if t - last >= dead_ps:
            out[k] = t
            k += 1
            last = t
    return out[:k]


def _as_sorted_int_tags(tags, name: str) -> np.ndarray:
    arr = np.asarray(tags, dtype=np.int64)
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        raise SimulationError(f"{name} time tags must be sorted")
    return arr


def coincidence_count(tags_a, tags_b, window_ps: float = DEFAULT_WINDOW_PS,
                      offset_ps: float = 0.0) -> int:
    """Count pairs with |t_a - t_b - offset| <= window/2, each tag used once.

    Greedy in time order: deterministic and O(n). With offset 0 this is the
    true coincidence count; with an offset much larger than the window it
    estimates accidentals per window.
    """
    a = _as_sorted_int_tags(tags_a, "tags_a")
    b = _as_sorted_int_tags(tags_b, "tags_b")
    if a.size == 0 or b.size == 0:
        return 0
    return int(_greedy_match_count(a, b, float(window_ps) / 2.0, float(offset_ps)))


def estimate_accidentals(tags_a, tags_b, window_ps: float = DEFAULT_WINDOW_PS,
                         offset_ps: float = DEFAULT_ACCIDENTAL_OFFSET_PS,
                         n_offsets: int = DEFAULT_ACCIDENTAL_WINDOWS) -> float:
    """Mean accidental count per window, averaged over shifted offset windows."""
    if n_offsets < 1:
        raise SimulationError("n_offsets must be at least 1")
    total = 0
    for k in range(1, n_offsets + 1):
        total += coincidence_count(tags_a, tags_b, window_ps, offset_ps * k)
    return total / n_offsets


def _poisson_uniform_times(rng: np.random.Generator, rate: float,
                           duration_s: float) -> np.ndarray:
    n = rng.poisson(rate * duration_s) if rate > 0 else 0
    return rng.uniform(0.0, duration_s * PS_PER_S, n)


def simulate_timetags(pair, graph: CorrelationGraph, source: SourceModel,
                      det_a: DetectorModel, det_b: DetectorModel,
                      loss_a_db: float = 0.0, loss_b_db: float = 0.0,
                      duration_s: float = 1.0, seed: int | None = None,
                      include_background: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the two detector streams watching a channel pair.

    Parameters
    ----------
    pair : (channel, channel)
        The two observed channels; a correlation edge between them is not
        required (uncorrelated streams are then produced).
    graph : CorrelationGraph
        Supplies the edge strength for the observed pair plus all other
        incident edges, whose partners are unobserved and therefore appear
        as extra uncorrelated singles.
    duration_s, seed
        Length of the run and the mandatory RNG seed.
    include_background : bool
        When False, only correlated pair events are generated (no extra
        singles, residual light, broadband noise, or darks).

    Pairs are drawn as a Poisson process at the true pair rate, each photon
    independently surviving its arm's transmission x efficiency, each kept
    timestamp jittered by the detector Gaussian. Streams are sorted, rounded
    to integer picoseconds, and pruned by the detector dead time.
    """
    if duration_s <= 0:
        raise SimulationError("duration must be positive")
    if seed is None:
        raise SimulationError("an explicit seed is required for simulation")
    ch_a, ch_b = (graph.grid.validate(c) for c in pair)
    rng = np.random.default_rng(seed)

    eta_a = db_to_transmission(loss_a_db) * det_a.efficiency
    eta_b = db_to_transmission(loss_b_db) * det_b.efficiency
    edge = graph.edge(ch_a, ch_b)
    pair_strength = edge.strength if edge is not None else 0.0
    pair_rate = source.brightness * pair_strength

    n_pairs = rng.poisson(pair_rate * duration_s) if pair_rate > 0 else 0
    emitted = rng.uniform(0.0, duration_s * PS_PER_S, n_pairs)
    kept_a = emitted[rng.random(n_pairs) < eta_a]
    kept_b = emitted[rng.random(n_pairs) < eta_b]

    streams = []
    for ch, det, eta, kept in ((ch_a, det_a, eta_a, kept_a), (ch_b, det_b, eta_b, kept_b)):
        if det.jitter_sigma_ps > 0 and kept.size:
            kept = kept + rng.normal(0.0, det.jitter_sigma_ps, kept.size)
        parts = [kept]
        if include_background:
            extra_strength = graph.incident_strength(ch) - pair_strength
            extra_rate = source.brightness * extra_strength * eta
            noise_rate = (source.residual_rate(ch, graph.pumps)
                          + source.broadband_noise * eta + det.dark_rate)
            parts.append(_poisson_uniform_times(rng, extra_rate, duration_s))
            parts.append(_poisson_uniform_times(rng, noise_rate, duration_s))
        tags = np.rint(np.concatenate(parts)).astype(np.int64)
        tags.sort()
        if det.dead_time_ns > 0 and tags.size:
            tags = _dead_time_filter(tags, np.int64(round(det.dead_time_ns * 1000)))
        streams.append(tags)
    return streams[0], streams[1]


def link_stats_montecarlo(pair, graph: CorrelationGraph, source: SourceModel,
                          det_a: DetectorModel, det_b: DetectorModel,
                          loss_a_db: float = 0.0, loss_b_db: float = 0.0,
                          window_ps: float = DEFAULT_WINDOW_PS,
                          duration_s: float = 1.0, seed: int | None = None,
                          offset_ps: float = DEFAULT_ACCIDENTAL_OFFSET_PS,
                          n_offsets: int = DEFAULT_ACCIDENTAL_WINDOWS) -> LinkStats:
    """LinkStats measured from a simulated run of one channel pair.

    CAR uses the offset-window accidental estimator, mirroring lab practice;
    the raw coincidence count therefore includes the accidental floor.
    """
    tags_a, tags_b = simulate_timetags(pair, graph, source, det_a, det_b,
                                       loss_a_db, loss_b_db, duration_s, seed)
    cc = coincidence_count(tags_a, tags_b, window_ps)
    ac = estimate_accidentals(tags_a, tags_b, window_ps, offset_ps, n_offsets)
    car = cc / ac if ac > 0 else math.inf
    return LinkStats(coincidence_rate=cc / duration_s,
                     singles_a=tags_a.size / duration_s,
                     singles_b=tags_b.size / duration_s,
                     accidental_rate=ac / duration_s,
                     car=car, integration_time=duration_s)


@dataclass
class JsiMatrix:
    """Joint spectral intensity: coincidence counts per channel pair.

    counts is square and symmetric over the channel list; cells on forbidden
    channels are zeroed, matching their exclusion from measurement.
    accidentals holds the per-pair accidental estimate in counts.
    """

    channels: tuple[Channel, ...]
    counts: np.ndarray
    accidentals: np.ndarray
    window_ps: float
    integration_s: float
    sums: tuple[int, ...] = ()
    forbidden: tuple[Channel, ...] = ()

    def __post_init__(self):
        n = len(self.channels)
        if self.counts.shape != (n, n) or self.accidentals.shape != (n, n):
            raise SimulationError("matrix shape must match the channel list")
        if np.any(self.counts < 0) or not np.array_equal(self.counts, self.counts.T):
            raise SimulationError("counts must be symmetric and non-negative")

    def cell(self, a, b) -> int:
        idx = {c.index: k for k, c in enumerate(self.channels)}
        return int(self.counts[idx[as_channel(a).index], idx[as_channel(b).index]])

    def to_csv(self) -> str:
        header = "channel," + ",".join(str(c) for c in self.channels)
        lines = [header]
        for k, ch in enumerate(self.channels):
            row = ",".join(str(int(v)) for v in self.counts[k])
            lines.append(f"{ch},{row}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "channels": [str(c) for c in self.channels],
            "counts": self.counts.astype(int).tolist(),
            "accidentals": [[round(float(v), 6) for v in row] for row in self.accidentals],
            "window_ps": self.window_ps,
            "integration_s": self.integration_s,
            "coincidence_line_sums": list(self.sums),
            "forbidden": [str(c) for c in self.forbidden],
        }


def measure_jsi(pumps: PumpConfig, channels: Sequence, grid: ChannelGrid,
                source: SourceModel, detector: DetectorModel,
                loss_db: float = 0.0, window_ps: float = DEFAULT_WINDOW_PS,
                integration_s: float = 1.0, mode: str = "analytic",
                seed: int | None = None,
                accidental_windows: int = DEFAULT_ACCIDENTAL_WINDOWS) -> JsiMatrix:
    """Measure the JSI over a channel list, analytically or by simulation.

    Analytic mode fills each correlated pair with its expected windowed
    coincidence count (rounded), leaving every off-line cell at zero, so the
    matrix support is exactly the anti-diagonal lines of the distinct process
    sums minus forbidden rows. Monte Carlo mode runs an independent seeded
    simulation per channel pair, so off-line cells carry the accidental floor.
    Forbidden channels stay zeroed in both modes.
    """
    chans = tuple(grid.validate(c) for c in channels)
    if mode not in ("analytic", "montecarlo"):
        raise SimulationError(f"unknown JSI mode {mode!r}")
    if mode == "montecarlo" and seed is None:
        raise SimulationError("montecarlo mode requires an explicit seed")

    graph = correlation_graph(pumps, grid)
    forb = forbidden_channels(pumps, grid)
    forbidden_idx = forb.indices
    n = len(chans)
    counts = np.zeros((n, n), dtype=np.int64)
    accidentals = np.zeros((n, n), dtype=float)

    measurable = [
        (i, j) for i in range(n) for j in range(i + 1, n)
        if chans[i].index not in forbidden_idx and chans[j].index not in forbidden_idx
    ]

    if mode == "analytic":
        for i, j in measurable:
            edge = graph.edge(chans[i], chans[j])
            if edge is not None:
                stats = link_stats_analytic(edge, graph, source, detector, detector,
                                            loss_db, loss_db, window_ps)
                counts[i, j] = counts[j, i] = int(round(stats.coincidence_rate * integration_s))
            sa = channel_singles_rate(chans[i], graph, source, detector, loss_db)
            sb = channel_singles_rate(chans[j], graph, source, detector, loss_db)
            ac = sa * sb * (window_ps / PS_PER_S) * integration_s
            accidentals[i, j] = accidentals[j, i] = ac
    else:
        seeds = np.random.SeedSequence(seed).spawn(len(measurable))
        for (i, j), seq in zip(measurable, seeds):
            tags_a, tags_b = simulate_timetags(
                (chans[i], chans[j]), graph, source, detector, detector,
                loss_db, loss_db, integration_s,
                seed=int(seq.generate_state(1, np.uint64)[0]))
            cc = coincidence_count(tags_a, tags_b, window_ps)
            ac = estimate_accidentals(tags_a, tags_b, window_ps,
                                      n_offsets=accidental_windows)
            counts[i, j] = counts[j, i] = cc
            accidentals[i, j] = accidentals[j, i] = ac

    return JsiMatrix(channels=chans, counts=counts, accidentals=accidentals,
                     window_ps=window_ps, integration_s=integration_s,
                     sums=tuple(distinct_sums(pumps)),
                     forbidden=tuple(forb.sorted_channels()))


def write_timetags(path, tags) -> None:
    """Dump a tag stream as newline-delimited integer picoseconds."""
    arr = np.asarray(tags, dtype=np.int64)
    with open(path, "w") as fh:
        for t in arr:
            fh.write(f"{int(t)}\n")


def read_timetags(path) -> np.ndarray:
    with open(path) as fh:
        values = [int(line) for line in fh if line.strip()]
    return np.asarray(values, dtype=np.int64)
