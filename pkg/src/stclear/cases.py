"""Built-in case studies: one-bus temporal shifting, 7-bus spatial, IEEE 30-bus."""
from __future__ import annotations

import math

import numpy as np

from .model import (Demand, Scenario, SpaceTimeIndex, Supplier, TransmissionLine,
                    VirtualLink)

# ---------------------------------------------------------------------------
# one-bus temporal study

TEMPORAL_LINK_PAIRS = ((1, 2), (1, 3), (1, 4), (3, 4))
TEMPORAL_LINK_CAPS = {
    1: (0, 0, 0, 0),
    2: (8, 0, 0, 0),
    3: (10, 0, 0, 0),
    4: (21, 0, 0, 0),
    5: (21, 20, 0, 0),
    6: (11, 0, 11, 0),
    7: (11, 0, 11, 10),
    8: (11, 0, 11, 20),
    9: (21, 0, 11, 20),
}


def builtin_temporal(scenario_id: int) -> Scenario:
    """Single node, four hours, one ramp-limited supplier and one shiftable load."""
    if scenario_id not in TEMPORAL_LINK_CAPS:
        raise ValueError(f"temporal scenario id must be in 1..9, got {scenario_id}")
    node = 1
    supplier = Supplier("G", node, price=(10.0, 20.0, 10.0, 15.0),
                        capacity=(50.0,) * 4, ramp_limit=15.0)
    load = Demand("DC", node, price=(30.0, 60.0, 40.0, 50.0),
                  capacity=(70.0, 25.0, 70.0, 40.0))
    links = tuple(
        VirtualLink(f"{a}-{b}", SpaceTimeIndex(node, a), SpaceTimeIndex(node, b),
                    price=3.0, capacity=float(cap), owner=load.id)
        for (a, b), cap in zip(TEMPORAL_LINK_PAIRS, TEMPORAL_LINK_CAPS[scenario_id])
    )
    return Scenario(T=4, nodes=(node,), suppliers=(supplier,), demands=(load,),
                    virtual_links=links, name=f"temporal:{scenario_id}")


# ---------------------------------------------------------------------------
# 7-bus spatial study

SEVEN_BUS_DACE_NODES = (1, 3, 6, 7)
SEVEN_BUS_DACE_PRICE = {1: 10.0, 3: 10.0, 6: 15.0, 7: 15.0}
SEVEN_BUS_DACE_CAP = {1: 13.0, 3: 17.0, 6: 17.0, 7: 13.0}
# line list recovered by exhaustive search against the base-case prices
SEVEN_BUS_LINES = ((1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 6), (5, 7), (6, 7))


def _seven_bus_links(scenario_id: int) -> list[tuple[int, int, float, float]]:
    if scenario_id == 1:
        return []
    cap = 5.0 if scenario_id in (2, 4) else 10.0
    price = 0.0 if scenario_id == 7 else 0.3
    links = [(1, 7, price, cap), (7, 1, price, cap)]
    if scenario_id >= 4:
        links += [(1, 3, price, cap), (3, 1, price, cap)]
    return links


def builtin_seven_bus(scenario_id: int) -> Scenario:
    """Two three-node clusters joined by a bridge; four data centers."""
    if not 1 <= scenario_id <= 7:
        raise ValueError(f"7-bus scenario id must be in 1..7, got {scenario_id}")
    nodes = tuple(range(1, 8))
    lines = tuple(TransmissionLine(f"{a}-{b}", a, b, susceptance=1.0, flow_cap=10.0,
                                   angle_cap=1000.0, price=0.1)
                  for a, b in SEVEN_BUS_LINES)
    suppliers = [Supplier(f"G{n}", n, (1.0,), (20.0,)) for n in (2, 4)]
    suppliers += [Supplier(f"g{n}", n, (3.0,), (5.0,)) for n in SEVEN_BUS_DACE_NODES]
    demands = tuple(Demand(f"D{n}", n, (SEVEN_BUS_DACE_PRICE[n],), (SEVEN_BUS_DACE_CAP[n],))
                    for n in SEVEN_BUS_DACE_NODES)
    comp = 25.0 if scenario_id >= 6 else 20.0
    links = tuple(VirtualLink(f"{a}-{b}", SpaceTimeIndex(a, 1), SpaceTimeIndex(b, 1),
                              price=price, capacity=cap, owner=f"D{a}")
                  for a, b, price, cap in _seven_bus_links(scenario_id))
    return Scenario(T=1, nodes=nodes, lines=lines, suppliers=tuple(suppliers),
                    demands=demands, virtual_links=links,
                    computing_cap={SpaceTimeIndex(n, 1): comp for n in SEVEN_BUS_DACE_NODES},
                    name=f"sevenbus:{scenario_id}")


# ---------------------------------------------------------------------------
# IEEE 30-bus study

# (from, to, reactance p.u., rating MW) of the standard 30-bus network
IEEE30_BRANCHES = (
    (1, 2, 0.0575, 130), (1, 3, 0.1652, 130), (2, 4, 0.1737, 65), (3, 4, 0.0379, 130),
    (2, 5, 0.1983, 130), (2, 6, 0.1763, 65), (4, 6, 0.0414, 90), (5, 7, 0.1160, 70),
    (6, 7, 0.0820, 130), (6, 8, 0.0420, 32), (6, 9, 0.2080, 65), (6, 10, 0.5560, 32),
    (9, 11, 0.2080, 65), (9, 10, 0.1100, 65), (4, 12, 0.2560, 65), (12, 13, 0.1400, 65),
    (12, 14, 0.2559, 32), (12, 15, 0.1304, 32), (12, 16, 0.1987, 32), (14, 15, 0.1997, 16),
    (16, 17, 0.1923, 16), (15, 18, 0.2185, 16), (18, 19, 0.1292, 16), (19, 20, 0.0680, 32),
    (10, 20, 0.2090, 32), (10, 17, 0.0845, 32), (10, 21, 0.0749, 32), (10, 22, 0.1499, 32),
    (21, 22, 0.0236, 32), (15, 23, 0.2020, 16), (22, 24, 0.1790, 16), (23, 24, 0.2700, 16),
    (24, 25, 0.3292, 16), (25, 26, 0.3800, 16), (25, 27, 0.2087, 16), (28, 27, 0.3960, 65),
    (27, 29, 0.4153, 16), (27, 30, 0.6027, 16), (29, 30, 0.4533, 16), (8, 28, 0.2000, 32),
    (6, 28, 0.0599, 32),
)
IEEE30_BASE_MVA = 100.0
IEEE30_RATING_SCALE = 1.0
# nominal real-power load per bus (MW)
IEEE30_LOADS = {
    2: 21.7, 3: 2.4, 4: 7.6, 5: 94.2, 7: 22.8, 8: 30.0, 10: 5.8, 12: 11.2, 14: 6.2,
    15: 8.2, 16: 3.5, 17: 9.0, 18: 3.2, 19: 9.5, 20: 2.2, 21: 17.5, 23: 3.2, 24: 8.7,
    26: 3.5, 29: 2.4, 30: 10.6,
}
IEEE30_DACE_NODES = (7, 8, 15, 21, 24, 30)
IEEE30_LOAD_BID = 200.0
IEEE30_SUPPLIERS = (("S1", 1, 40.0, 300.0), ("S2", 13, 50.0, 150.0))
IEEE30_DACE_COMPUTING_CAP = 80.0
IEEE30_LINK_PRICE = 0.0
IEEE30_LINK_CAP = 20.0


def ieee30_profile(seed: int = 0, T: int = 24, dace_load: float = 10.0,
                   load_scale: float = 0.5) -> dict:
    """Seeded hourly demand capacities (MW) for every IEEE 30-bus load node.

    Inflexible loads follow a daily curve peaking in the evening; data-center
    loads get their own, more erratic, hour-by-hour requests.
    """
    rng = np.random.default_rng(seed)
    hours = np.arange(T)
    daily = 1.0 + 0.35 * np.sin(2 * np.pi * (hours - 12) / 24) \
        + 0.15 * np.sin(4 * np.pi * hours / 24)
    profile = {}
    for node, base in sorted(IEEE30_LOADS.items()):
        noise = rng.lognormal(0.0, 0.08, T)
        series = load_scale * base * daily * noise
        if node in IEEE30_DACE_NODES:
            series = series + dace_load * rng.uniform(0.2, 1.8, T)
        profile[node] = tuple(float(round(x, 3)) for x in series)
    return profile


def _check_profile(profile: dict, T: int) -> None:
    for node in IEEE30_LOADS:
        series = profile.get(node)
        if series is None:
            raise ValueError(f"profile lacks load node {node}")
        if len(series) != T or any(not (x >= 0) or not math.isfinite(x) for x in series):
            raise ValueError(f"profile for node {node} must hold {T} finite values >= 0")


def builtin_ieee30(with_virtual_links: bool = True, demand_profile: dict | None = None,
                   T: int = 24) -> Scenario:
    """Modified IEEE 30-bus case with six data-center loads and two suppliers."""
    profile = ieee30_profile() if demand_profile is None else \
        {int(k): tuple(v) for k, v in demand_profile.items()}
    _check_profile(profile, T)
    nodes = tuple(range(1, 31))
    lines = tuple(TransmissionLine(f"{a}-{b}", a, b, susceptance=IEEE30_BASE_MVA / x,
                                   flow_cap=float(rate) * IEEE30_RATING_SCALE)
                  for a, b, x, rate in IEEE30_BRANCHES)
    suppliers = tuple(Supplier(sid, node, (price,) * T, (cap,) * T)
                      for sid, node, price, cap in IEEE30_SUPPLIERS)
    demands = tuple(Demand(f"{'DC' if n in IEEE30_DACE_NODES else 'L'}{n}", n,
                           (IEEE30_LOAD_BID,) * T, profile[n])
                    for n in sorted(IEEE30_LOADS))
    links = []
    if with_virtual_links:
        ends = [SpaceTimeIndex(n, t) for t in range(1, T + 1) for n in IEEE30_DACE_NODES]
        for a in ends:
            for b in ends:
                if b.time >= a.time and a != b:
                    links.append(VirtualLink(f"{a.node}@{a.time}>{b.node}@{b.time}", a, b,
                                             IEEE30_LINK_PRICE, IEEE30_LINK_CAP,
                                             owner=f"DC{a.node}"))
    caps = {SpaceTimeIndex(n, t): IEEE30_DACE_COMPUTING_CAP
            for n in IEEE30_DACE_NODES for t in range(1, T + 1)}
    return Scenario(T=T, nodes=nodes, lines=lines, suppliers=suppliers, demands=demands,
                    virtual_links=tuple(links), computing_cap=caps,
                    name="ieee30" if with_virtual_links else "ieee30:novl")
