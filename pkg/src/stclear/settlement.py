"""Payments, revenues, profits and adjusted prices from a cleared market."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .builder import NONE, LPInstance, build
from .model import Scenario
from .solver import PrimalDualSolution, dual_range


def fmt6(value: float) -> str:
    """Fixed six-decimal rendering without negative zero."""
    text = f"{float(value):.6f}"
    return "0.000000" if text == "-0.000000" else text


@dataclass
class Allocation:
    d: np.ndarray      # (|D|, T)
    p: np.ndarray      # (|S|, T)
    f: np.ndarray      # (2|L|, T), rows l+, l-
    delta: np.ndarray  # (|V|,)

    @classmethod
    def zeros(cls, scenario: Scenario) -> "Allocation":
        T = scenario.T
        return cls(np.zeros((len(scenario.demands), T)), np.zeros((len(scenario.suppliers), T)),
                   np.zeros((2 * len(scenario.lines), T)), np.zeros(len(scenario.virtual_links)))


def _gather(x: np.ndarray, positions: np.ndarray) -> np.ndarray:
    out = np.zeros(positions.shape)
    mask = positions != NONE
    out[mask] = x[positions[mask]]
    return out


def extract_allocation(lp: LPInstance, sol: PrimalDualSolution) -> Allocation:
    ix = lp.index
    return Allocation(_gather(sol.x, ix.d), _gather(sol.x, ix.p),
                      _gather(sol.x, ix.f), _gather(sol.x, ix.delta))


def extract_prices(lp: LPInstance, sol: PrimalDualSolution):
    """Return ``(pi, omega_l, omega_u)`` arrays shaped (|N|, T)."""
    ix = lp.index
    pi = _gather(sol.y_eq, ix.balance)
    omega_u = _snap(-_gather(sol.y_ub, ix.cap_upper))
    omega_l = _snap(-_gather(sol.y_ub, ix.cap_lower))
    return pi, omega_l, omega_u


def _snap(omega: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    # interior-point style round-off can leave capacity duals a hair below zero
    out = omega.copy()
    out[(out < 0) & (out > -tol)] = 0.0
    return out


def surplus(scenario: Scenario, alloc: Allocation) -> float:
    """Served demand value minus supply, transmission and shifting costs."""
    T = scenario.T
    shapes = {"d": (len(scenario.demands), T), "p": (len(scenario.suppliers), T),
              "f": (2 * len(scenario.lines), T), "delta": (len(scenario.virtual_links),)}
    for name, shape in shapes.items():
        if np.shape(getattr(alloc, name)) != shape:
            raise ValueError(f"allocation field {name} has shape "
                             f"{np.shape(getattr(alloc, name))}, expected {shape}")
    value = 0.0
    for j, dem in enumerate(scenario.demands):
        value += float(np.dot(dem.price, alloc.d[j]))
    for i, sup in enumerate(scenario.suppliers):
        value -= float(np.dot(sup.price, alloc.p[i]))
    for l, line in enumerate(scenario.lines):
        value -= line.price * float(alloc.f[2 * l].sum() + alloc.f[2 * l + 1].sum())
    for k, v in enumerate(scenario.virtual_links):
        value -= v.price * float(alloc.delta[k])
    return value


@dataclass
class Settlement:
    pi: np.ndarray
    omega_l: np.ndarray
    omega_u: np.ndarray
    load_payment: np.ndarray         # (|D|, T)
    supplier_revenue: np.ndarray     # (|S|, T)
    edge_revenue: np.ndarray         # (2|L|, T)
    vlink_revenue: np.ndarray        # (|V|,)
    demand_profit: np.ndarray        # (|D|, T)
    supplier_profit: np.ndarray      # (|S|, T)
    edge_profit: np.ndarray          # (2|L|, T)
    vlink_profit: np.ndarray         # (|V|,)
    line_revenue: np.ndarray         # (|L|, T), |price gap| * |net flow|
    surplus: float
    ids: dict

    @property
    def omega(self) -> np.ndarray:
        return self.omega_u - self.omega_l

    @property
    def pi_hat(self) -> np.ndarray:
        return self.pi + self.omega

    @property
    def total_load_payment(self) -> float:
        return float(self.load_payment.sum())

    @property
    def total_supplier_revenue(self) -> float:
        return float(self.supplier_revenue.sum())

    @property
    def total_transmission_revenue(self) -> float:
        return float(self.edge_revenue.sum())

    @property
    def total_vlink_revenue(self) -> float:
        return float(self.vlink_revenue.sum())

    @property
    def total_provider_revenue(self) -> float:
        return (self.total_supplier_revenue + self.total_transmission_revenue
                + self.total_vlink_revenue)

    def aggregates(self) -> dict:
        return {
            "surplus": self.surplus,
            "load_payment": self.total_load_payment,
            "supplier_revenue": self.total_supplier_revenue,
            "transmission_revenue": self.total_transmission_revenue,
            "vlink_revenue": self.total_vlink_revenue,
            "total_revenue": self.total_provider_revenue,
            "demand_profit": float(self.demand_profit.sum()),
            "supplier_profit": float(self.supplier_profit.sum()),
            "transmission_profit": float(self.edge_profit.sum()),
            "vlink_profit": float(self.vlink_profit.sum()),
        }

    def player_rows(self) -> list[tuple[str, str, float, float, float]]:
        """``(kind, id, payment, revenue, profit)`` per player, horizon totals."""
        rows = []
        for j, pid in enumerate(self.ids["demands"]):
            rows.append(("demand", pid, float(self.load_payment[j].sum()), 0.0,
                         float(self.demand_profit[j].sum())))
        for i, pid in enumerate(self.ids["suppliers"]):
            rows.append(("supplier", pid, 0.0, float(self.supplier_revenue[i].sum()),
                         float(self.supplier_profit[i].sum())))
        for l, pid in enumerate(self.ids["lines"]):
            rev = float(self.edge_revenue[2 * l:2 * l + 2].sum())
            prof = float(self.edge_profit[2 * l:2 * l + 2].sum())
            rows.append(("line", pid, 0.0, rev, prof))
        for k, pid in enumerate(self.ids["virtual_links"]):
            rows.append(("virtual_link", pid, 0.0, float(self.vlink_revenue[k]),
                         float(self.vlink_profit[k])))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "id", "payment", "revenue", "profit"])
        for kind, pid, pay, rev, prof in self.player_rows():
            w.writerow([kind, pid, fmt6(pay), fmt6(rev), fmt6(prof)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"aggregates": self.aggregates(),
               "players": [dict(zip(("kind", "id", "payment", "revenue", "profit"), r))
                           for r in self.player_rows()]}
        return json.dumps(doc, indent=2, sort_keys=True)


def settle_at(scenario: Scenario, alloc: Allocation, pi: np.ndarray,
              omega_l: np.ndarray, omega_u: np.ndarray) -> Settlement:
    """Settle a given allocation at given prices (cash at ``pi``, profits at ``pi_hat``)."""
    npos = {n: i for i, n in enumerate(scenario.nodes)}
    pi_hat = pi + omega_u - omega_l
    T = scenario.T

    def at(table, node, t):
        return table[npos[node], t - 1]

    load_payment = np.array([[at(pi, d.node, t) * alloc.d[j, t - 1] for t in scenario.times]
                             for j, d in enumerate(scenario.demands)]).reshape(-1, T)
    demand_profit = np.array([[(d.price[t - 1] - at(pi_hat, d.node, t)) * alloc.d[j, t - 1]
                               for t in scenario.times]
                              for j, d in enumerate(scenario.demands)]).reshape(-1, T)
    supplier_revenue = np.array([[at(pi, s.node, t) * alloc.p[i, t - 1] for t in scenario.times]
                                 for i, s in enumerate(scenario.suppliers)]).reshape(-1, T)
    supplier_profit = np.array([[(at(pi, s.node, t) - s.price[t - 1]) * alloc.p[i, t - 1]
                                 for t in scenario.times]
                                for i, s in enumerate(scenario.suppliers)]).reshape(-1, T)
    edge_revenue = np.zeros((2 * len(scenario.lines), T))
    edge_profit = np.zeros_like(edge_revenue)
    line_revenue = np.zeros((len(scenario.lines), T))
    for l, line in enumerate(scenario.lines):
        for t in scenario.times:
            gap = at(pi, line.rec, t) - at(pi, line.snd, t)
            fp, fm = alloc.f[2 * l, t - 1], alloc.f[2 * l + 1, t - 1]
            edge_revenue[2 * l, t - 1] = gap * fp
            edge_revenue[2 * l + 1, t - 1] = -gap * fm
            edge_profit[2 * l, t - 1] = (gap - line.price) * fp
            edge_profit[2 * l + 1, t - 1] = (-gap - line.price) * fm
            line_revenue[l, t - 1] = abs(gap) * abs(fp - fm)
    vlink_revenue = np.zeros(len(scenario.virtual_links))
    vlink_profit = np.zeros_like(vlink_revenue)
    for k, v in enumerate(scenario.virtual_links):
        gap = at(pi, v.snd.node, v.snd.time) - at(pi, v.rec.node, v.rec.time)
        gap_hat = at(pi_hat, v.snd.node, v.snd.time) - at(pi_hat, v.rec.node, v.rec.time)
        vlink_revenue[k] = gap * alloc.delta[k]
        vlink_profit[k] = (gap_hat - v.price) * alloc.delta[k]
    ids = {"nodes": list(scenario.nodes),
           "demands": [d.id for d in scenario.demands],
           "suppliers": [s.id for s in scenario.suppliers],
           "lines": [l.id for l in scenario.lines],
           "virtual_links": [v.id for v in scenario.virtual_links]}
    return Settlement(pi, omega_l, omega_u, load_payment, supplier_revenue, edge_revenue,
                      vlink_revenue, demand_profit, supplier_profit, edge_profit,
                      vlink_profit, line_revenue, surplus(scenario, alloc), ids)


def settle(scenario: Scenario, solution: PrimalDualSolution,
           lp: LPInstance | None = None) -> Settlement:
    if not solution.optimal:
        raise ValueError(f"cannot settle a {solution.status.value} solution")
    lp = lp if lp is not None else build(scenario)
    alloc = extract_allocation(lp, solution)
    return settle_at(scenario, alloc, *extract_prices(lp, solution))


def prices_csv(scenario: Scenario, st: Settlement) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "time", "pi", "omega_l", "omega_u", "pi_hat"])
    for t in scenario.times:
        for i, n in enumerate(scenario.nodes):
            vals = (st.pi[i, t - 1], st.omega_l[i, t - 1], st.omega_u[i, t - 1],
                    st.pi_hat[i, t - 1])
            w.writerow([n, t, *(fmt6(v) for v in vals)])
    return buf.getvalue()


def price_ranges(lp: LPInstance, sol: PrimalDualSolution, tol: float = 1e-7):
    """Range of each nodal price over all optimal duals, as ``(lo, hi)`` arrays.

    A price whose range is wider than ``tol`` is not pinned down by the
    optimum: any value in the range is an equally valid market price.
    Costs two LP solves per space-time node.
    """
    ix = lp.index
    lo, hi = np.full(ix.balance.shape, np.nan), np.full(ix.balance.shape, np.nan)
    for pos in np.ndindex(*ix.balance.shape):
        w = np.zeros(lp.n_eq)
        w[ix.balance[pos]] = 1.0
        lo[pos], hi[pos] = dual_range(lp, sol, w, tol=tol)
    return lo, hi
