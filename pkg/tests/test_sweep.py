import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen import random_scenario
from stclear import cases
from stclear.model import NetworkModel, SpaceTimeIndex, VirtualLink
from stclear.sweep import (capacity_sweep, histogram_csv, is_enlargement, lmp_stats, parse_grid,
                           surplus_chain, surplus_monotonicity)
from stclear.verify import FAIL, PASS


def seven_bus_link(cap):
    sc = cases.builtin_seven_bus(3)
    links = tuple(replace(v, capacity=float(cap)) if v.id == "7-1" else v
                  for v in sc.virtual_links)
    return replace(sc, virtual_links=links)


def test_link_sweep_from_scenario_two():
    report = capacity_sweep(cases.builtin_seven_bus(2), "7-1", [0, 5, 10])
    assert [p.capacity for p in report.points] == [5, 10, 15]
    assert report.points[-1].gap == pytest.approx(0.3, abs=1e-6)
    assert report.points[1].gap == pytest.approx(0.3, abs=1e-6)
    assert report.passed


def test_far_grid_point_matches_capacity_ten():
    report = capacity_sweep(seven_bus_link(0), "7-1", [10, 1000])
    a, b = report.points
    assert a.gap == pytest.approx(b.gap, abs=1e-9)
    assert a.surplus == pytest.approx(b.surplus, abs=1e-9)
    assert b.flow == pytest.approx(10.0)


def test_full_sweep_is_non_increasing():
    report = capacity_sweep(seven_bus_link(0), "7-1", list(range(21)) + [1000])
    profits = [p.unit_profit for p in report.points]
    assert all(b <= a + 1e-6 for a, b in zip(profits, profits[1:]))
    assert profits[0] == pytest.approx(11.7, abs=1e-9)
    assert report.points[-1].gap == pytest.approx(0.3, abs=1e-6)
    assert {r.name: r.status for r in report.relations}["unit_profit_monotone"] == PASS


def test_unused_link_gives_constant_series():
    sc = cases.builtin_temporal(5)     # link 1-3 is offered but carries nothing
    report = capacity_sweep(sc, "1-3", [0, 1, 5, 50])
    assert all(p.flow == pytest.approx(0.0, abs=1e-9) for p in report.points)
    rel = {r.name: r for r in report.relations}["uncongested_constant"]
    assert rel.status == PASS
    assert len({round(p.unit_profit, 6) for p in report.points}) == 1


def test_transport_line_sweep():
    sc = replace(cases.builtin_seven_bus(1), network_model=NetworkModel.TRANSPORT)
    line = sc.lines[0].id
    report = capacity_sweep(sc, line, [0, 10, 100])
    assert report.kind == "line"
    assert [p.capacity for p in report.points] == [sc.lines[0].flow_cap + e for e in (0, 10, 100)]
    surpluses = [p.surplus for p in report.points]
    assert all(b >= a - 1e-7 for a, b in zip(surpluses, surpluses[1:]))


def test_line_sweep_needs_transport_mode():
    sc = cases.builtin_seven_bus(1)
    with pytest.raises(ValueError):
        capacity_sweep(sc, sc.lines[0].id, [0, 1])


def test_sweep_errors():
    sc = cases.builtin_seven_bus(3)
    with pytest.raises(KeyError):
        capacity_sweep(sc, "nope", [0])
    for grid in ([], [0, 0], [3, 1], [-1, 2]):
        with pytest.raises(ValueError):
            capacity_sweep(sc, "7-1", grid)


def test_parse_grid():
    assert parse_grid("0:20:1") == [float(k) for k in range(21)]
    assert parse_grid("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0;5;1000") == [0, 5, 1000]
    for bad in ("", "5:1:1", "0:1:0", "1:2"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_sweep_csv_and_json():
    report = capacity_sweep(cases.builtin_seven_bus(2), "7-1", [0, 5])
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0][:6] == ["epsilon", "capacity", "surplus", "unit_profit", "gap", "flow"]
    assert len(rows[0]) == 6 + 7 and len(rows) == 3
    doc = json.loads(report.to_json())
    assert doc["entity_id"] == "7-1" and len(doc["points"]) == 2


def test_parallel_points_match_serial():
    grid = [0, 2, 4, 6, 8, 10, 1000]
    a = capacity_sweep(seven_bus_link(0), "7-1", grid)
    b = capacity_sweep(seven_bus_link(0), "7-1", grid, workers=3)
    assert a.to_csv() == b.to_csv()


# ---------------------------------------------------------------------------
# surplus along nested chains

def test_temporal_chain():
    rec = surplus_monotonicity([cases.builtin_temporal(k) for k in (1, 2, 3, 4)])
    assert rec.status == PASS
    report = surplus_chain([cases.builtin_temporal(k) for k in (1, 2, 3, 4)])
    assert report.surpluses == pytest.approx([4400, 4856, 4970, 5040], abs=1e-6)


def test_added_unused_link_keeps_surplus():
    report = surplus_chain([cases.builtin_temporal(4), cases.builtin_temporal(5)])
    assert report.nested == [True]
    assert report.surpluses[0] == pytest.approx(report.surpluses[1], abs=1e-9) == 5040


def test_duplicate_chain():
    sc = cases.builtin_seven_bus(4)
    report = surplus_chain([sc, sc])
    assert report.record.status == PASS
    assert report.surpluses[0] == report.surpluses[1]


def test_non_nested_chain_raises():
    with pytest.raises(ValueError):
        surplus_monotonicity([cases.builtin_temporal(4), cases.builtin_temporal(3)])
    with pytest.raises(ValueError):
        surplus_monotonicity([cases.builtin_seven_bus(1), cases.builtin_temporal(1)])
    report = surplus_chain([cases.builtin_temporal(4), cases.builtin_temporal(3)])
    assert report.nested == [False] and report.record.status == PASS


def test_enlargement_rules():
    a, b = cases.builtin_temporal(2), cases.builtin_temporal(3)
    assert is_enlargement(a, b) and not is_enlargement(b, a)
    assert is_enlargement(a, a)
    cheaper = replace(b, virtual_links=tuple(replace(v, price=1.0) for v in b.virtual_links))
    assert not is_enlargement(a, cheaper)


def nested_chain(seed):
    rng = np.random.default_rng(seed)
    base = random_scenario(rng, max_nodes=5, max_T=3, max_players=10, computing_caps=False)
    hub = base.demands[0].node if base.demands else base.nodes[0]
    owner = base.demands[0].id if base.demands else "owner"
    pool = [VirtualLink(f"x{k}", SpaceTimeIndex(hub, 1),
                        SpaceTimeIndex(base.nodes[int(rng.integers(len(base.nodes)))],
                                       int(rng.integers(1, base.T + 1))),
                        float(rng.uniform(0, 5)), 0.0, owner)
            for k in range(3)]
    pool = [v for v in pool if v.rec != v.snd]
    chain, links = [base], list(base.virtual_links)
    for step in range(4):
        if pool and rng.random() < 0.5:
            links.append(pool.pop())
        links = [replace(v, capacity=v.capacity + float(rng.uniform(0, 10))) for v in links]
        chain.append(replace(base, virtual_links=tuple(links)))
    return chain


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_random_nested_chains(seed):
    chain = nested_chain(seed)
    assert surplus_monotonicity(chain).status == PASS


def test_falling_surplus_is_reported(monkeypatch):
    import stclear.sweep as sweep
    chain = [cases.builtin_temporal(1), cases.builtin_temporal(2)]
    values = iter([-100.0, -50.0])
    real = sweep.solve

    def fake(lp, backend="auto"):
        sol = real(lp, backend)
        return replace(sol, objective=next(values))
    monkeypatch.setattr(sweep, "solve", fake)
    assert surplus_chain(chain).record.status == FAIL


# ---------------------------------------------------------------------------
# price statistics

def test_lmp_stats_constant():
    s = lmp_stats([5, 5, 5])
    assert (s.mean, s.median, s.max, s.min, s.std_dev, s.avg_dev) == (5, 5, 5, 5, 0, 0)


def test_lmp_stats_two_points():
    s = lmp_stats([0, 10])
    assert (s.mean, s.median, s.std_dev, s.avg_dev) == (5, 5, 5, 5)


def test_lmp_stats_mixed():
    s = lmp_stats([[1, 2], [3, 10]])
    assert s.median == 2.5 and s.mean == 4.0
    assert s.avg_dev == pytest.approx((3 + 2 + 1 + 6) / 4)
    assert s.std_dev == pytest.approx(np.sqrt((9 + 4 + 1 + 36) / 4))
    with pytest.raises(ValueError):
        lmp_stats([])


def test_histogram_csv():
    rows = list(csv.reader(io.StringIO(histogram_csv([0, 1, 1, 9, 10], bins=2,
                                                     value_range=(0, 10)))))
    assert rows == [["bin_lo", "bin_hi", "count"], ["0.000000", "5.000000", "3"],
                    ["5.000000", "10.000000", "2"]]
    with pytest.raises(ValueError):
        histogram_csv([])
