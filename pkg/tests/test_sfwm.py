import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pumpnet.grid import Channel, ChannelGrid
from pumpnet.sfwm import (KIND_DEGENERATE, KIND_NON_DEGENERATE, PumpConfig,
                          PumpConfigError, correlation_graph, distinct_sums,
                          enumerate_processes, forbidden_channels)

GRID = ChannelGrid()


def brute_force_forbidden(pump_indices, grid):
    """Independent oracle: scan all 2a-b and a+b-c integer combinations."""
    out = set(pump_indices)
    for a in pump_indices:
        for b in pump_indices:
            if a != b:
                out.add(2 * a - b)
    for a in pump_indices:
        for b in pump_indices:
            for c in pump_indices:
                if len({a, b, c}) == 3 and a < b:
                    out.add(a + b - c)
    return {i for i in out if grid.min_index <= i <= grid.max_index}


def test_pump_config_validation():
    with pytest.raises(PumpConfigError):
        PumpConfig.from_channels([])
    with pytest.raises(PumpConfigError):
        PumpConfig.from_channels([40, 40])
    with pytest.raises(PumpConfigError):
        PumpConfig(((Channel(40), 0.0),))
    with pytest.raises(PumpConfigError):
        PumpConfig.from_channels([38, 40, 42, 44]).validate_size(max_pumps=3)
    cfg = PumpConfig.from_channels([42, 38, 40])
    assert cfg.indices == (38, 40, 42)


def test_enumerate_processes_counts():
    single = enumerate_processes(PumpConfig.from_channels([40]))
    assert len(single) == 1
    assert single[0].kind == KIND_DEGENERATE and single[0].sum == 80

    dual = enumerate_processes(PumpConfig.from_channels([39, 41]))
    assert sorted(p.sum for p in dual) == [78, 80, 82]
    assert sum(p.kind == KIND_NON_DEGENERATE for p in dual) == 1

    triple = enumerate_processes(PumpConfig.from_channels([38, 40, 42]))
    assert len(triple) == 6
    assert sorted(p.sum for p in triple) == [76, 78, 80, 80, 82, 84]


@given(st.sets(st.integers(20, 60), min_size=1, max_size=3))
def test_enumerate_process_count_formula(channels):
    k = len(channels)
    procs = enumerate_processes(PumpConfig.from_channels(sorted(channels)))
    assert len(procs) == k + k * (k - 1) // 2


def test_distinct_sums_examples():
    assert distinct_sums(PumpConfig.from_channels([40])) == [80]
    assert distinct_sums(PumpConfig.from_channels([38, 40, 42])) == [76, 78, 80, 82, 84]
    assert distinct_sums(PumpConfig.from_channels([38, 40, 43])) == [76, 78, 80, 81, 83, 86]


@given(st.sets(st.integers(20, 60), min_size=3, max_size=3))
def test_three_pump_line_count(channels):
    p1, p2, p3 = sorted(channels)
    sums = distinct_sums(PumpConfig.from_channels([p1, p2, p3]))
    expected = 5 if p3 - p2 == p2 - p1 else 6
    assert len(sums) == expected


def test_forbidden_examples():
    dual = forbidden_channels(PumpConfig.from_channels([39, 41]), GRID)
    assert dual.indices == {37, 39, 41, 43}
    triple = forbidden_channels(PumpConfig.from_channels([38, 40, 42]), GRID)
    assert triple.indices == {34, 36, 38, 40, 42, 44, 46}
    single = forbidden_channels(PumpConfig.from_channels([40]), GRID)
    assert single.indices == {40}
    assert single.reasons[Channel(40)] == ("pump",)


def test_forbidden_reasons_annotated():
    forb = forbidden_channels(PumpConfig.from_channels([38, 40, 42]), GRID)
    assert "pump" in forb.reasons[Channel(40)]
    # 36 = 2*38 - 40 and also 38 + 40 - 42
    assert set(forb.reasons[Channel(36)]) == {"stimulated_fwm", "bragg_scattering"}


@settings(max_examples=60)
@given(st.sets(st.integers(5, 68), min_size=1, max_size=3))
def test_forbidden_matches_brute_force(channels):
    pumps = PumpConfig.from_channels(sorted(channels))
    assert forbidden_channels(pumps, GRID).indices == brute_force_forbidden(
        pumps.indices, GRID)


def test_forbidden_clipped_to_grid():
    grid = ChannelGrid(min_index=38, max_index=42)
    forb = forbidden_channels(PumpConfig.from_channels([39, 41]), grid)
    assert forb.indices == {39, 41}


def test_single_pump_graph():
    grid = ChannelGrid(min_index=30, max_index=50)
    graph = correlation_graph(PumpConfig.from_channels([40]), grid)
    pairs = [e.pair for e in graph.edges]
    assert pairs == [(30 + k, 50 - k) for k in range(10)]
    assert (40, 40) not in pairs
    assert all(e.strength == 1.0 for e in graph.edges)


def test_dual_pump_nondegenerate_strength():
    grid = ChannelGrid(min_index=35, max_index=45)
    graph = correlation_graph(PumpConfig.from_channels([39, 41]), grid,
                              exclude_forbidden=True)
    edge = graph.edge(38, 42)
    assert edge is not None
    assert len(edge.contributions) == 1
    assert edge.contributions[0].process.kind == KIND_NON_DEGENERATE
    assert edge.strength == 4.0
    # all edges touching the bright channels 37/39/41/43 are gone
    for e in graph.edges:
        assert not {e.signal.index, e.idler.index} & {37, 39, 41, 43}


def test_shared_edge_adds_contributions():
    graph = correlation_graph(PumpConfig.from_channels([38, 40, 42]), GRID)
    edge = graph.edge(39, 41)
    assert len(edge.contributions) == 2
    assert edge.strength == 5.0  # degenerate 1 + non-degenerate 4


def test_strength_scales_with_power():
    pumps = PumpConfig(((Channel(39), 1.0), (Channel(41), 4.0)))
    graph = correlation_graph(pumps, GRID)
    # degenerate about C39 at half the reference power: (1/2)^2
    assert graph.edge(38, 40).strength == pytest.approx(0.25)
    # degenerate about C41 at twice the reference power: 2^2
    assert graph.edge(40, 42).strength == pytest.approx(4.0)
    # non-degenerate: 4 * (1/2) * 2
    assert graph.edge(37, 43).strength == pytest.approx(4.0)


@given(st.sets(st.integers(25, 55), min_size=1, max_size=3))
def test_energy_conservation_every_edge(channels):
    graph = correlation_graph(PumpConfig.from_channels(sorted(channels)), GRID)
    for edge in graph.edges:
        for contrib in edge.contributions:
            assert edge.signal.index + edge.idler.index == contrib.process.sum


def test_single_pump_reflection_symmetry():
    grid = ChannelGrid(min_index=30, max_index=50)
    graph = correlation_graph(PumpConfig.from_channels([40]), grid)
    pairs = {e.pair for e in graph.edges}
    reflected = {tuple(sorted((80 - s, 80 - i))) for s, i in pairs}
    assert pairs == reflected


@settings(max_examples=40)
@given(st.sets(st.integers(25, 55), min_size=2, max_size=3),
       st.booleans())
def test_adding_pump_is_monotone(channels, exclude):
    channels = sorted(channels)
    base = PumpConfig.from_channels(channels[:-1])
    extended = PumpConfig.from_channels(channels)
    base_pairs = {e.pair for e in correlation_graph(base, GRID, exclude).edges}
    ext = correlation_graph(extended, GRID, exclude_forbidden=exclude)
    ext_pairs = {e.pair for e in ext.edges}
    if not exclude:
        assert base_pairs <= ext_pairs
    else:
        # edges may vanish only by touching the newly bright channels
        newly_forbidden = forbidden_channels(extended, GRID).indices
        for s, i in base_pairs - ext_pairs:
            assert {s, i} & newly_forbidden


def test_graph_json_serialization():
    grid = ChannelGrid(min_index=35, max_index=45)
    graph = correlation_graph(PumpConfig.from_channels([39, 41], label="dual"), grid)
    payload = json.loads(json.dumps(graph.to_json_dict()))
    assert payload["pumps"]["pumps"] == ["C39", "C41"]
    edge = next(e for e in payload["edges"]
                if e["signal"] == "C38" and e["idler"] == "C42")
    assert edge["strength"] == 4.0
    forb = forbidden_channels(PumpConfig.from_channels([39, 41]), grid)
    assert json.loads(json.dumps(forb.to_json_dict())) == {
        "C37": ["stimulated_fwm"], "C39": ["pump"],
        "C41": ["pump"], "C43": ["stimulated_fwm"]}


def test_empty_graph_is_valid():
    grid = ChannelGrid(min_index=39, max_index=41)
    graph = correlation_graph(PumpConfig.from_channels([40]), grid,
                              exclude_forbidden=True)
    assert len(graph.edges) == 1  # (39, 41) survives: 39/41 are not bright
    tight = correlation_graph(PumpConfig.from_channels([39, 41]), grid,
                              exclude_forbidden=True)
    assert len(tight.edges) == 0
