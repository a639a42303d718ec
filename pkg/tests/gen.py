"""Random small markets for property tests."""
from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from stclear.model import (Demand, NetworkModel, Scenario, SpaceTimeIndex, Supplier,
                           TransmissionLine, VirtualLink, validate)


def _prices(rng, T, lo, hi):
    # integer-heavy prices provoke the ties that make duals degenerate
    if rng.random() < 0.6:
        return tuple(float(x) for x in rng.integers(lo, hi + 1, T))
    return tuple(float(round(x, 2)) for x in rng.uniform(lo, hi, T))


def random_scenario(rng, max_nodes=6, max_T=3, max_players=12, ramping=None,
                    network_model=None, computing_caps=True) -> Scenario:
    N = int(rng.integers(1, max_nodes + 1))
    T = int(rng.integers(1, max_T + 1))
    nodes = tuple(range(1, N + 1))
    model = network_model or (NetworkModel.DC if rng.random() < 0.6 else NetworkModel.TRANSPORT)

    budget = int(rng.integers(2, max_players + 1))
    pairs = [(int(rng.integers(1, n)), n) for n in range(2, N + 1)]   # spanning tree
    extra = [(a, b) for a in nodes for b in nodes if a < b and (a, b) not in pairs]
    rng.shuffle(extra)
    pairs += extra[:int(rng.integers(0, 3))]
    pairs = pairs[:max(0, min(budget - 2, budget // 3))]
    lines = []
    for a, b in pairs:
        lines.append(TransmissionLine(
            f"L{a}-{b}", a, b, susceptance=float(rng.choice([1.0, 2.0, 5.0])),
            flow_cap=float(rng.integers(1, 21)),
            angle_cap=float(rng.choice([math.inf, 2.0, 10.0])),
            price=float(rng.choice([0.0, 0.1, 0.5]))))
    budget -= len(lines)

    n_sup = int(rng.integers(1, max(2, budget // 2 + 1)))
    suppliers = []
    for i in range(n_sup):
        ramp = None
        if T > 1 and (ramping if ramping is not None else rng.random() < 0.25):
            ramp = float(rng.integers(1, 15))
        suppliers.append(Supplier(f"S{i}", int(rng.choice(nodes)), _prices(rng, T, 1, 30),
                                  tuple(float(x) for x in rng.integers(0, 25, T)), ramp))
    budget -= n_sup

    n_dem = int(rng.integers(1, max(2, budget // 2 + 1)))
    demands = [Demand(f"D{j}", int(rng.choice(nodes)), _prices(rng, T, 5, 60),
                      tuple(float(x) for x in rng.integers(0, 25, T)))
               for j in range(n_dem)]
    budget -= n_dem

    links = []
    for k in range(budget):
        owner = demands[int(rng.integers(0, n_dem))]
        t0 = int(rng.integers(1, T + 1))
        t1 = int(rng.integers(t0, T + 1))
        rec = SpaceTimeIndex(int(rng.choice(nodes)), t1)
        snd = SpaceTimeIndex(owner.node, t0)
        if rec == snd:
            continue
        links.append(VirtualLink(f"V{k}", snd, rec, price=float(rng.choice([0.0, 0.3, 1.0, 2.0])),
                                 capacity=float(rng.integers(0, 15)), owner=owner.id))

    caps = {}
    if computing_caps:
        for n in nodes:
            for t in range(1, T + 1):
                if rng.random() < 0.3:
                    caps[SpaceTimeIndex(n, t)] = float(rng.integers(5, 40))
    sc = Scenario(T=T, nodes=nodes, lines=tuple(lines), suppliers=tuple(suppliers),
                  demands=tuple(demands), virtual_links=tuple(links), computing_cap=caps,
                  network_model=model, name="random")
    problems = validate(sc)
    assert not problems, problems
    return sc


def random_disaggregation(rng) -> Scenario:
    """One flexible consumer at a hub offering links to alternate nodes, T = 1."""
    N = int(rng.integers(2, 6))
    nodes = tuple(range(1, N + 1))
    model = NetworkModel.DC if rng.random() < 0.5 else NetworkModel.TRANSPORT
    pairs = [(int(rng.integers(1, n)), n) for n in range(2, N + 1)]
    if N > 2 and (1, N) not in pairs and rng.random() < 0.5:
        pairs.append((1, N))
    lines = tuple(TransmissionLine(f"L{a}-{b}", a, b, susceptance=float(rng.choice([1.0, 4.0])),
                                   flow_cap=float(rng.integers(2, 20)),
                                   price=float(rng.choice([0.0, 0.2])))
                  for a, b in pairs)
    suppliers = tuple(Supplier(f"S{i}", int(rng.choice(nodes)), (float(rng.integers(1, 30)),),
                               (float(rng.integers(1, 30)),))
                      for i in range(int(rng.integers(1, 4))))
    hub = int(rng.choice(nodes))
    demand = Demand("DC", hub, (float(rng.integers(20, 60)),), (float(rng.integers(0, 40)),))
    others = [n for n in nodes if n != hub]
    chosen = rng.choice(others, size=int(rng.integers(0, len(others) + 1)), replace=False)
    links = tuple(VirtualLink(f"{hub}>{int(n)}", SpaceTimeIndex(hub, 1),
                              SpaceTimeIndex(int(n), 1),
                              price=float(rng.choice([0.0, 0.3, 1.0])),
                              capacity=float(rng.integers(0, 25)), owner="DC")
                  for n in sorted(int(x) for x in chosen))
    caps = {SpaceTimeIndex(hub, 1): float(rng.integers(5, 60))}
    return Scenario(T=1, nodes=nodes, lines=lines, suppliers=suppliers, demands=(demand,),
                    virtual_links=links, computing_cap=caps, network_model=model,
                    name="random-disaggregation")


@st.composite
def scenarios(draw, **kwargs):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_scenario(np.random.default_rng(seed), **kwargs)


@st.composite
def disaggregation_scenarios(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_disaggregation(np.random.default_rng(seed))
