"""Capacity sweeps, surplus monotonicity along enlargement chains, LMP statistics."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .builder import build
from .model import NetworkModel, Scenario
from .settlement import extract_allocation, extract_prices, fmt6
from .solver import dual_range, solve
from .verify import FAIL, INCONCLUSIVE, PASS, CheckRecord, _link_gap_weights

SLACK = 1e-6
CLEARED = 1e-6


@dataclass
class SweepPoint:
    epsilon: float
    capacity: float
    surplus: float
    unit_profit: float   # adjusted gap minus the shifting price
    gap: float
    flow: float
    pi_hat: np.ndarray   # (|N|, T)
    # optimal-dual range of unit_profit, filled in only when a relation is examined
    profit_range: tuple[float, float] | None = None


@dataclass
class SweepReport:
    entity_id: str
    kind: str            # "virtual_link" or "line"
    base_capacity: float
    price: float
    points: list[SweepPoint]
    relations: list[CheckRecord] = field(default_factory=list)
    nodes: tuple = ()

    @property
    def grid(self) -> list[float]:
        return [p.epsilon for p in self.points]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.relations)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        T = self.points[0].pi_hat.shape[1] if self.points else 0
        price_cols = [f"pi_hat[{n},{t}]" for t in range(1, T + 1) for n in self.nodes]
        w.writerow(["epsilon", "capacity", "surplus", "unit_profit", "gap", "flow", *price_cols])
        for p in self.points:
            prices = [fmt6(p.pi_hat[i, t]) for t in range(T) for i in range(len(self.nodes))]
            w.writerow([fmt6(p.epsilon), fmt6(p.capacity), fmt6(p.surplus),
                        fmt6(p.unit_profit), fmt6(p.gap), fmt6(p.flow), *prices])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "entity_id": self.entity_id, "kind": self.kind,
            "base_capacity": self.base_capacity, "price": self.price,
            "points": [{"epsilon": p.epsilon, "capacity": p.capacity, "surplus": p.surplus,
                        "unit_profit": p.unit_profit, "gap": p.gap, "flow": p.flow,
                        "pi_hat": p.pi_hat.tolist(),
                        "profit_range": None if p.profit_range is None else list(p.profit_range)}
                       for p in self.points],
            "relations": [{"name": r.name, "status": r.status, "max_residual": r.max_residual,
                           "details": r.details} for r in self.relations],
        }
        return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# capacity sweeps

def _entity(scenario: Scenario, entity_id: str):
    for k, v in enumerate(scenario.virtual_links):
        if v.id == entity_id:
            return "virtual_link", k, v
    for l, line in enumerate(scenario.lines):
        if line.id == entity_id:
            if scenario.network_model is not NetworkModel.TRANSPORT:
                raise ValueError(f"line sweeps need the transport network model; "
                                 f"{entity_id!r} sits in a dc network")
            return "line", l, line
    raise KeyError(f"unknown virtual link or line {entity_id!r}")


def _with_capacity(scenario: Scenario, kind: str, entity_id: str, cap: float) -> Scenario:
    if kind == "virtual_link":
        return scenario.with_link_capacity(entity_id, cap)
    return scenario.with_line_capacity(entity_id, cap)


def _profit_weights(lp, scenario, kind, pos, t):
    if kind == "virtual_link":
        return _link_gap_weights(lp, scenario, pos)
    line = scenario.lines[pos]
    ix = lp.index
    w_eq, w_ub = np.zeros(lp.n_eq), np.zeros(lp.n_ub)
    w_eq[ix.balance[ix.node_pos[line.rec], t]] += 1.0
    w_eq[ix.balance[ix.node_pos[line.snd], t]] -= 1.0
    return w_eq, w_ub


def _solve_point(args):
    scenario, kind, entity_id, pos, eps, base, backend, want_range = args
    cap = base + eps
    sc = _with_capacity(scenario, kind, entity_id, cap)
    lp = build(sc)
    sol = solve(lp, backend)
    if not sol.optimal:
        raise RuntimeError(f"solve at epsilon={eps} ended {sol.status.value}")
    alloc = extract_allocation(lp, sol)
    pi, omega_l, omega_u = extract_prices(lp, sol)
    pi_hat = pi + omega_u - omega_l
    npos = {n: i for i, n in enumerate(sc.nodes)}
    if kind == "virtual_link":
        v = sc.virtual_links[pos]
        gap = (pi_hat[npos[v.snd.node], v.snd.time - 1]
               - pi_hat[npos[v.rec.node], v.rec.time - 1])
        flow, price, t_star = float(alloc.delta[pos]), v.price, 0
    else:
        line = sc.lines[pos]
        gaps = np.abs(pi[npos[line.rec]] - pi[npos[line.snd]])
        t_star = int(np.argmax(gaps))
        gap = float(gaps[t_star])
        flow = float(np.max(np.abs(alloc.f[2 * pos] - alloc.f[2 * pos + 1])))
        price = line.price
    point = SweepPoint(eps, cap, -sol.objective, float(gap) - price, float(gap), flow, pi_hat)
    if want_range:
        w_eq, w_ub = _profit_weights(lp, sc, kind, pos, t_star)
        lo, hi = dual_range(lp, sol, w_eq, w_ub)
        point.profit_range = (lo - price, hi - price)
    return point


def _check_grid(eps_grid) -> list[float]:
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise ValueError("empty capacity grid")
    if any(not math.isfinite(e) or e < 0 for e in grid):
        raise ValueError("grid entries must be finite and nonnegative")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    return grid


def _run(tasks, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_solve_point, tasks))
    return [_solve_point(t) for t in tasks]


def capacity_sweep(scenario: Scenario, entity_id: str, eps_grid, backend: str = "auto",
                   workers: int = 0, degeneracy_check: bool = True) -> SweepReport:
    """Re-solve with the capacity of one link raised by each ``eps`` in the grid.

    ``entity_id`` names a virtual link, or a transmission line when the network
    is in transport mode. The report carries three relations on the returned
    duals: uncongested links keep a constant unit profit, unit profit never
    rises with capacity, and once the link stops saturating its adjusted gap is
    at most its price. A violated relation is re-examined over the optimal dual
    face and reported as degenerate-inconclusive when other optimal duals
    satisfy it.
    """
    grid = _check_grid(eps_grid)
    kind, pos, entity = _entity(scenario, entity_id)
    base = entity.capacity if kind == "virtual_link" else entity.flow_cap
    tasks = [(scenario, kind, entity_id, pos, e, base, backend, False) for e in grid]
    points = _run(tasks, workers)
    base_point = points[0] if grid[0] == 0.0 else _solve_point(
        (scenario, kind, entity_id, pos, 0.0, base, backend, False))
    report = SweepReport(entity_id, kind, base, entity.price, points, nodes=tuple(scenario.nodes))

    def ranges(indices):
        for i in indices:
            if points[i].profit_range is None:
                points[i].profit_range = _solve_point(
                    (scenario, kind, entity_id, pos, grid[i], base, backend, True)).profit_range
        return [points[i].profit_range for i in indices]

    report.relations = [
        _relation_uncongested(points, base_point, base, ranges if degeneracy_check else None),
        _relation_monotone(points, ranges if degeneracy_check else None),
        _relation_bounded(points, ranges if degeneracy_check else None),
    ]
    return report


def _finish(name, failures, witnesses, worst, details=()):
    if failures:
        return CheckRecord(name, FAIL, worst, list(details) + failures + witnesses)
    if witnesses:
        return CheckRecord(name, INCONCLUSIVE, worst, list(details) + witnesses)
    return CheckRecord(name, PASS, worst, list(details))


def _relation_uncongested(points, base_point, base_cap, ranges) -> CheckRecord:
    name = "uncongested_constant"
    if not base_point.flow < base_cap - CLEARED:
        return CheckRecord(name, "skipped", 0.0, ["base link is saturated"])
    values = [p.unit_profit for p in points]
    worst = max(values) - min(values)
    if worst <= SLACK:
        return CheckRecord(name, PASS, worst, [])
    witnesses, failures = [], []
    if ranges is not None:
        rs = ranges(range(len(points)))
        lo, hi = max(r[0] for r in rs), min(r[1] for r in rs)
        if lo <= hi + SLACK:
            witnesses.append(f"a common optimal unit profit exists in [{hi:.6g}, {lo:.6g}]")
    if not witnesses:
        failures.append(f"unit profit varies by {worst:.6g} on an uncongested link")
    return _finish(name, failures, witnesses, worst)


def _relation_monotone(points, ranges) -> CheckRecord:
    name = "unit_profit_monotone"
    failures, witnesses, worst = [], [], 0.0
    for i in range(1, len(points)):
        rise = points[i].unit_profit - points[i - 1].unit_profit
        worst = max(worst, rise)
        if rise <= SLACK:
            continue
        msg = (f"unit profit rises {points[i - 1].unit_profit:.6g} -> "
               f"{points[i].unit_profit:.6g} at epsilon={points[i].epsilon:g}")
        if ranges is not None:
            prev, cur = ranges([i - 1, i])
            if prev[1] >= cur[0] - SLACK:
                witnesses.append(f"{msg}; optimal ranges {prev} and {cur} overlap")
                continue
        failures.append(msg)
    return _finish(name, failures, witnesses, worst)


def _relation_bounded(points, ranges) -> CheckRecord:
    name = "gap_bounded_by_price"
    first = next((i for i, p in enumerate(points) if p.flow < p.capacity - CLEARED), None)
    if first is None:
        return CheckRecord(name, "skipped", 0.0, ["link saturated across the whole grid"])
    failures, witnesses, worst = [], [], 0.0
    for i in range(first, len(points)):
        excess = points[i].unit_profit
        worst = max(worst, excess)
        if excess <= SLACK:
            continue
        msg = f"gap exceeds price by {excess:.6g} at epsilon={points[i].epsilon:g}"
        if ranges is not None and ranges([i])[0][0] <= SLACK:
            witnesses.append(f"{msg}; an optimal dual attains {ranges([i])[0][0]:.6g}")
            continue
        failures.append(msg)
    return _finish(name, failures, witnesses, max(worst, 0.0),
                   [f"unsaturated from epsilon={points[first].epsilon:g}"])


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` inclusive range, or a comma-free list joined by ``;``."""
    text = text.strip()
    if not text:
        raise ValueError("empty capacity grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must look like a:b:step, got {text!r}")
        a, b, step = (float(x) for x in parts)
        if step <= 0 or b < a:
            raise ValueError(f"grid {text!r} is empty or has a nonpositive step")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(count)]
    return [float(x) for x in text.split(";") if x.strip()]


# ---------------------------------------------------------------------------
# surplus along enlargement chains

def is_enlargement(small: Scenario, large: Scenario) -> bool:
    """True when ``large`` only adds virtual links or raises their capacities."""
    if replace(small, virtual_links=(), name="") != replace(large, virtual_links=(), name=""):
        return False
    bigger = {v.id: v for v in large.virtual_links}
    for v in small.virtual_links:
        w = bigger.get(v.id)
        if w is None or replace(w, capacity=v.capacity) != v or w.capacity < v.capacity:
            return False
    return True


@dataclass
class ChainReport:
    names: list[str]
    surpluses: list[float]
    nested: list[bool]           # per consecutive step
    record: CheckRecord

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "scenario", "surplus", "nested_with_previous"])
        for i, (name, phi) in enumerate(zip(self.names, self.surpluses)):
            flag = "" if i == 0 else str(self.nested[i - 1]).lower()
            w.writerow([i, name, fmt6(phi), flag])
        return buf.getvalue()


def surplus_chain(chain, backend: str = "auto", tol: float = 1e-7) -> ChainReport:
    """Solve every scenario of ``chain``; check monotonicity on nested steps only."""
    chain = list(chain)
    if not chain:
        raise ValueError("empty scenario chain")
    values = []
    for sc in chain:
        sol = solve(build(sc), backend)
        if not sol.optimal:
            raise RuntimeError(f"{sc.name or 'scenario'} ended {sol.status.value}")
        values.append(-sol.objective)
    nested = [is_enlargement(a, b) for a, b in zip(chain, chain[1:])]
    failures, details, worst = [], [], 0.0
    for i, ok in enumerate(nested):
        if not ok:
            details.append(f"step {i}->{i + 1} is not an enlargement; not compared")
            continue
        drop = values[i] - values[i + 1]
        worst = max(worst, drop)
        if drop > tol * max(1.0, abs(values[i])):
            failures.append(f"surplus falls {values[i]:.9g} -> {values[i + 1]:.9g} "
                            f"at step {i}->{i + 1}")
    status = FAIL if failures else PASS
    record = CheckRecord("surplus_monotonicity", status, worst, details + failures)
    return ChainReport([sc.name for sc in chain], values, nested, record)


def surplus_monotonicity(chain, backend: str = "auto", tol: float = 1e-7) -> CheckRecord:
    """Surplus must not fall along a chain of virtual-link enlargements."""
    chain = list(chain)
    for i, (a, b) in enumerate(zip(chain, chain[1:])):
        if not is_enlargement(a, b):
            raise ValueError(f"chain is not nested at step {i}->{i + 1}")
    return surplus_chain(chain, backend, tol).record


# ---------------------------------------------------------------------------
# LMP statistics

@dataclass(frozen=True)
class LMPStats:
    mean: float
    median: float
    max: float
    min: float
    std_dev: float   # population
    avg_dev: float   # mean absolute deviation about the mean

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("mean", "median", "max", "min", "std_dev", "avg_dev")}


def lmp_stats(prices) -> LMPStats:
    x = np.asarray(prices, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("lmp_stats needs at least one price")
    mean = float(x.mean())
    return LMPStats(mean, float(np.median(x)), float(x.max()), float(x.min()),
                    float(x.std()), float(np.abs(x - mean).mean()))


def histogram_csv(prices, bins=20, value_range=None) -> str:
    x = np.asarray(prices, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("histogram needs at least one price")
    counts, edges = np.histogram(x, bins=bins, range=value_range)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lo", "bin_hi", "count"])
    for lo, hi, c in zip(edges, edges[1:], counts):
        w.writerow([fmt6(lo), fmt6(hi), int(c)])
    return buf.getvalue()
