"""Mechanical checks of the equilibrium, pricing and duality properties."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .builder import LPInstance, build, build_disaggregation, disaggregation_layout
from .model import NetworkModel, Scenario, SpaceTimeIndex, Supplier
from .settlement import Settlement, extract_allocation, settle
from .solver import (PrimalDualSolution, dual_range, primal_range, residuals, solve,
                     solve_subproblem_flows)

PASS, FAIL, SKIPPED, INCONCLUSIVE = "pass", "fail", "skipped", "degenerate-inconclusive"

DEFAULT_TOLERANCES = {
    "value": 1e-6,        # profit / price comparisons
    "cleared": 1e-6,      # MWh threshold for cleared players and interior flows
    "objective": 1e-7,    # formulation equivalence
    "tie": 1e-9,          # subgradient case split
    "fd_step": 1e-5,      # finite-difference step for the flow term
}

ALL_CHECKS = ("optimality", "competitive_equilibrium", "revenue_adequacy", "cost_recovery",
              "price_bounds", "vlink_congestion", "dual_function", "subgradient")


@dataclass
class CheckRecord:
    name: str
    status: str
    max_residual: float = 0.0
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status != FAIL


@dataclass
class VerificationReport:
    records: list[CheckRecord]
    tolerances: dict

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.records)

    def record(self, name: str) -> CheckRecord:
        return next(r for r in self.records if r.name == name)

    def to_json(self) -> str:
        doc = {"passed": self.passed, "tolerances": self.tolerances,
               "checks": [asdict(r) for r in self.records]}
        return json.dumps(doc, indent=2, sort_keys=True, default=float)

    def to_text(self) -> str:
        width = max([len(r.name) for r in self.records] + [5])
        lines = [f"{'check':<{width}}  {'status':<23}  max_residual"]
        for r in self.records:
            lines.append(f"{r.name:<{width}}  {r.status:<23}  {r.max_residual:.3e}")
            lines += [f"    {d}" for d in r.details[:10]]
        return "\n".join(lines) + "\n"


def _tol(scale: float, base: float) -> float:
    return base * max(1.0, abs(scale))


class _Collector:
    """Accumulates residuals and failure messages for one check."""

    def __init__(self, name: str):
        self.name = name
        self.max_residual = 0.0
        self.failures: list[str] = []
        self.notes: list[str] = []
        self.count = 0

    def compare(self, label: str, got: float, want: float, tol: float) -> None:
        self.count += 1
        err = abs(got - want)
        self.max_residual = max(self.max_residual, err)
        if err > _tol(max(abs(got), abs(want)), tol):
            self.failures.append(f"{label}: got {got:.9g}, expected {want:.9g}")

    def at_least(self, label: str, value: float, bound: float, tol: float) -> None:
        self.count += 1
        short = bound - value
        self.max_residual = max(self.max_residual, max(short, 0.0))
        if short > _tol(bound, tol):
            self.failures.append(f"{label}: {value:.9g} < {bound:.9g}")

    def record(self) -> CheckRecord:
        if self.failures:
            status = FAIL
        elif self.count == 0:
            status = SKIPPED
        else:
            status = PASS
        return CheckRecord(self.name, status, self.max_residual, self.failures + self.notes)


# ---------------------------------------------------------------------------
# player subproblems

def supplier_optimal_profit(sup: Supplier, prices: np.ndarray, backend: str = "auto") -> float:
    """Best horizon profit of one supplier at fixed prices, honoring its ramp limit."""
    margin = np.asarray(prices, dtype=float) - np.asarray(sup.price, dtype=float)
    caps = np.asarray(sup.capacity, dtype=float)
    if sup.ramp_limit is None or len(margin) == 1:
        return float(np.sum(np.maximum(margin, 0.0) * caps))
    T = len(margin)
    rows = []
    for t in range(T - 1):
        up = np.zeros(T)
        up[t + 1], up[t] = 1.0, -1.0
        rows += [up, -up]
    A = sp.csr_matrix(np.array(rows))
    lp = LPInstance(c=-margin, lb=np.zeros(T), ub=caps, A_eq=sp.csr_matrix((0, T)),
                    b_eq=np.zeros(0), A_ub=A, b_ub=np.full(len(rows), sup.ramp_limit),
                    var_names=[f"p{t}" for t in range(T)], eq_names=[],
                    ub_names=[f"r{k}" for k in range(len(rows))])
    return -solve(lp, backend).objective


def _node_series(table: np.ndarray, scenario: Scenario, node) -> np.ndarray:
    return table[scenario.nodes.index(node)]


# ---------------------------------------------------------------------------
# checks

def check_optimality(lp: LPInstance, sol: PrimalDualSolution) -> CheckRecord:
    if not sol.optimal:
        return CheckRecord("optimality", FAIL, math.inf, [f"status {sol.status.value}"])
    res = residuals(lp, sol)
    worst = max(res.primal, res.dual, res.complementarity, res.gap)
    status = PASS if res.ok() else FAIL
    return CheckRecord("optimality", status, worst, [] if res.ok() else [str(res)])


def check_competitive_equilibrium(scenario: Scenario, solution: PrimalDualSolution,
                                  settlement: Settlement, lp: LPInstance | None = None,
                                  tol: float = 1e-6) -> CheckRecord:
    """Each player's allocated profit must equal its best response at the prices."""
    lp = lp if lp is not None else build(scenario)
    col = _Collector("competitive_equilibrium")
    st = settlement
    for i, sup in enumerate(scenario.suppliers):
        prices = _node_series(st.pi, scenario, sup.node)
        if sup.ramp_limit is None:
            for t in scenario.times:
                best = max((prices[t - 1] - sup.price[t - 1]) * sup.capacity[t - 1], 0.0)
                col.compare(f"supplier {sup.id} t{t}", st.supplier_profit[i, t - 1], best, tol)
        else:
            best = supplier_optimal_profit(sup, prices)
            col.compare(f"supplier {sup.id} horizon", st.supplier_profit[i].sum(), best, tol)
    for j, dem in enumerate(scenario.demands):
        prices = _node_series(st.pi_hat, scenario, dem.node)
        for t in scenario.times:
            best = max((dem.price[t - 1] - prices[t - 1]) * dem.capacity[t - 1], 0.0)
            col.compare(f"demand {dem.id} t{t}", st.demand_profit[j, t - 1], best, tol)
    npos = {n: i for i, n in enumerate(scenario.nodes)}
    for k, v in enumerate(scenario.virtual_links):
        unit = (st.pi_hat[npos[v.snd.node], v.snd.time - 1]
                - st.pi_hat[npos[v.rec.node], v.rec.time - 1] - v.price)
        col.compare(f"virtual link {v.id}", st.vlink_profit[k], max(unit * v.capacity, 0.0), tol)
    if scenario.lines:
        for t in scenario.times:
            best, _ = solve_subproblem_flows(scenario, t, st.pi[:, t - 1])
            col.compare(f"transmission t{t}", st.edge_profit[:, t - 1].sum(), best, tol)
    if lp.n_eq:
        balance = np.abs(lp.A_eq @ solution.x - lp.b_eq)
        col.count += 1
        col.max_residual = max(col.max_residual, float(balance.max()))
        if balance.max() > tol:
            col.failures.append(f"balance residual {balance.max():.3e}")
    return col.record()


def check_revenue_adequacy(settlement: Settlement, tol: float = 1e-6) -> CheckRecord:
    col = _Collector("revenue_adequacy")
    col.compare("payments - revenues", settlement.total_load_payment,
                settlement.total_provider_revenue, tol)
    return col.record()


def check_cost_recovery(scenario: Scenario, settlement: Settlement, mode: str = "auto",
                        tol: float = 1e-6) -> CheckRecord:
    """Nonnegative profits, per (player, time) term or per player over the horizon.

    ``auto`` picks per-term checking unless a ramp limit couples times; an
    explicit per-term request on a ramping scenario is downgraded likewise.
    """
    if mode not in ("auto", "per_node_time", "per_player_horizon"):
        raise ValueError(f"unknown cost recovery mode {mode!r}")
    col = _Collector("cost_recovery")
    if mode != "per_player_horizon" and scenario.has_ramping:
        if mode == "per_node_time":
            col.notes.append("ramp limits couple times; checked per player over the horizon")
        mode = "per_player_horizon"
    elif mode == "auto":
        mode = "per_node_time"
    st = settlement
    groups = [("demand", st.ids["demands"], st.demand_profit),
              ("supplier", st.ids["suppliers"], st.supplier_profit)]
    for kind, ids, table in groups:
        for row, pid in zip(table, ids):
            if mode == "per_node_time":
                for t, value in enumerate(row, start=1):
                    col.at_least(f"{kind} {pid} t{t}", value, 0.0, tol)
            else:
                col.at_least(f"{kind} {pid}", row.sum(), 0.0, tol)
    if scenario.network_model is NetworkModel.DC:
        # loop flows can make single edges lose money; the network operator as a
        # whole is the player whose profit is guaranteed
        if len(st.ids["lines"]):
            per_time = st.edge_profit.sum(axis=0)
            if mode == "per_node_time":
                for t, value in enumerate(per_time, start=1):
                    col.at_least(f"transmission t{t}", value, 0.0, tol)
            else:
                col.at_least("transmission", per_time.sum(), 0.0, tol)
    else:
        for l, pid in enumerate(st.ids["lines"]):
            for k, sign in ((2 * l, "+"), (2 * l + 1, "-")):
                if mode == "per_node_time":
                    for t, value in enumerate(st.edge_profit[k], start=1):
                        col.at_least(f"edge {pid}{sign} t{t}", value, 0.0, tol)
                else:
                    col.at_least(f"edge {pid}{sign}", st.edge_profit[k].sum(), 0.0, tol)
    for k, pid in enumerate(st.ids["virtual_links"]):
        col.at_least(f"virtual link {pid}", st.vlink_profit[k], 0.0, tol)
    col.notes.append(f"mode {mode}")
    return col.record()


def check_price_bounds(scenario: Scenario, solution: PrimalDualSolution, settlement: Settlement,
                       lp: LPInstance | None = None, tol: float = 1e-6,
                       cleared: float = 1e-6) -> CheckRecord:
    """Cleared supply bids lie below the price, cleared demand bids above it.

    Ramp-limited suppliers are left out of the lower bound: an intertemporal
    constraint can hold them above zero at a price below their bid.
    """
    lp = lp if lp is not None else build(scenario)
    alloc = extract_allocation(lp, solution)
    st = settlement
    col = _Collector("price_bounds")
    skipped_ramp = 0
    for t in scenario.times:
        for n_i, n in enumerate(scenario.nodes):
            sup = [(i, s) for i, s in enumerate(scenario.suppliers)
                   if s.node == n and alloc.p[i, t - 1] > cleared]
            dem = [(j, d) for j, d in enumerate(scenario.demands)
                   if d.node == n and alloc.d[j, t - 1] > cleared]
            if not sup or not dem:
                continue
            price = st.pi[n_i, t - 1]
            upper = min(d.price[t - 1] - st.omega[n_i, t - 1] for _, d in dem)
            col.at_least(f"upper ({n},{t})", upper, price, tol)
            plain = [s for _, s in sup if s.ramp_limit is None]
            skipped_ramp += len(sup) - len(plain)
            if plain:
                lower = max(s.price[t - 1] for s in plain)
                col.at_least(f"lower ({n},{t})", price, lower, tol)
    if skipped_ramp:
        col.notes.append(f"{skipped_ramp} ramp-limited supplier bounds skipped")
    return col.record()


def _link_gap_weights(lp: LPInstance, scenario: Scenario, k: int):
    """Weights expressing the adjusted price gap of link ``k`` in terms of the duals."""
    ix = lp.index
    v = scenario.virtual_links[k]
    w_eq, w_ub = np.zeros(lp.n_eq), np.zeros(lp.n_ub)
    for end, sign in ((v.snd, 1.0), (v.rec, -1.0)):
        n, t = ix.node_pos[end.node], end.time - 1
        w_eq[ix.balance[n, t]] += sign
        if ix.cap_upper[n, t] >= 0:
            # omega_u = -y_u, omega_l = -y_l, pi_hat = pi + omega_u - omega_l
            w_ub[ix.cap_upper[n, t]] -= sign
            w_ub[ix.cap_lower[n, t]] += sign
    return w_eq, w_ub


def check_vlink_congestion(scenario: Scenario, solution: PrimalDualSolution,
                           settlement: Settlement, lp: LPInstance | None = None,
                           tol: float = 1e-6, cleared: float = 1e-6) -> CheckRecord:
    """Used links have a gap of at least their price; interior ones exactly their price.

    A violated relation is re-examined over the whole optimal dual face; when a
    different optimal dual satisfies it the record is degenerate-inconclusive.
    """
    lp = lp if lp is not None else build(scenario)
    alloc = extract_allocation(lp, solution)
    npos = {n: i for i, n in enumerate(scenario.nodes)}
    col = _Collector("vlink_congestion")
    witnesses = []
    for k, v in enumerate(scenario.virtual_links):
        flow = alloc.delta[k]
        if flow <= cleared:
            continue
        gap = (settlement.pi_hat[npos[v.snd.node], v.snd.time - 1]
               - settlement.pi_hat[npos[v.rec.node], v.rec.time - 1])
        interior = flow < v.capacity - cleared
        before = len(col.failures)
        if interior:
            col.compare(f"interior link {v.id} gap", gap, v.price, tol)
        else:
            col.at_least(f"saturated link {v.id} gap", gap, v.price, tol)
        if len(col.failures) > before:
            lo, hi = dual_range(lp, solution, *_link_gap_weights(lp, scenario, k))
            ok = (lo <= v.price + tol <= hi + 2 * tol) if interior else hi >= v.price - tol
            if ok:
                col.failures.pop()
                witnesses.append(f"link {v.id}: optimal gap range [{lo:.6g}, {hi:.6g}]")
    rec = col.record()
    if witnesses and rec.status != FAIL:
        rec.status = INCONCLUSIVE
        rec.details += witnesses
    return rec


def check_disaggregation_equivalence(scenario: Scenario, tol: float = 1e-7,
                                     backend: str = "auto") -> CheckRecord:
    """The link encoding and the per-node disaggregation reach the same optimum."""
    layout = disaggregation_layout(scenario)
    lp_v, lp_d = build(scenario), build_disaggregation(scenario)
    sol_v, sol_d = solve(lp_v, backend), solve(lp_d, backend)
    col = _Collector("disaggregation_equivalence")
    if not (sol_v.optimal and sol_d.optimal):
        return CheckRecord(col.name, FAIL, math.inf,
                           [f"statuses {sol_v.status.value} / {sol_d.status.value}"])
    col.compare("objective", sol_v.objective, sol_d.objective, tol)
    cols = lp_d.index.extra_vars.get("disagg", [])
    unique = True
    for c in cols:
        w = np.zeros(lp_d.n_vars)
        w[c] = 1.0
        lo, hi = primal_range(lp_d, sol_d, w)
        unique &= hi - lo <= 1e-7
    if unique and scenario.virtual_links:
        j, t = layout.demand, layout.time
        owner = scenario.demands[j].id
        ks = [k for k, v in enumerate(scenario.virtual_links) if v.owner == owner]
        d_total = sol_v.x[lp_v.index.d[j, t - 1]]
        shifts = [sol_v.x[lp_v.index.delta[k]] for k in ks]
        rebuilt = [d_total - sum(shifts), *shifts]
        for n, value, c in zip(layout.nodes, rebuilt, cols):
            col.compare(f"served load at {n}", value, sol_d.x[c], 1e-6)
    elif not unique:
        col.notes.append("disaggregated optimum not unique; objective compared only")
    return col.record()


# ---------------------------------------------------------------------------
# dual function and subgradients

def _omega_arrays(scenario: Scenario, omega_l, omega_u):
    shape = (len(scenario.nodes), scenario.T)
    omega_l = np.zeros(shape) if omega_l is None else np.asarray(omega_l, dtype=float)
    omega_u = np.zeros(shape) if omega_u is None else np.asarray(omega_u, dtype=float)
    if omega_l.shape != shape or omega_u.shape != shape:
        raise ValueError(f"omega arrays must have shape {shape}")
    for n_i, n in enumerate(scenario.nodes):
        for t in scenario.times:
            if not math.isfinite(scenario.cap_at(n, t)) and (
                    omega_l[n_i, t - 1] != 0 or omega_u[n_i, t - 1] != 0):
                raise ValueError(f"omega given at ({n},{t}) where computing capacity is infinite")
    if (omega_l < 0).any() or (omega_u < 0).any():
        raise ValueError("omega components must be nonnegative")
    return omega_l, omega_u


def eval_dual_function(scenario: Scenario, pi, omega_l=None, omega_u=None) -> float:
    """Lagrangian dual value for prices ``pi`` and capacity multipliers, shape (|N|, T).

    Every player's best profit at the given prices is subtracted, together with
    the value of the computing capacity at ``omega_u``. Ramp-limited suppliers
    contribute their own multi-period optimum.
    """
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (len(scenario.nodes), scenario.T):
        raise ValueError(f"pi must have shape {(len(scenario.nodes), scenario.T)}")
    omega_l, omega_u = _omega_arrays(scenario, omega_l, omega_u)
    pi_hat = pi + omega_u - omega_l
    npos = {n: i for i, n in enumerate(scenario.nodes)}
    total = 0.0
    for dem in scenario.demands:
        margin = np.asarray(dem.price) - pi_hat[npos[dem.node]]
        total += float(np.sum(np.maximum(margin, 0.0) * np.asarray(dem.capacity)))
    for sup in scenario.suppliers:
        total += supplier_optimal_profit(sup, pi[npos[sup.node]])
    if scenario.lines:
        for t in scenario.times:
            total += solve_subproblem_flows(scenario, t, pi[:, t - 1])[0]
    for v in scenario.virtual_links:
        unit = (pi_hat[npos[v.snd.node], v.snd.time - 1]
                - pi_hat[npos[v.rec.node], v.rec.time - 1] - v.price)
        total += max(unit, 0.0) * v.capacity
    for n_i, n in enumerate(scenario.nodes):
        for t in scenario.times:
            if omega_u[n_i, t - 1]:
                total += omega_u[n_i, t - 1] * scenario.cap_at(n, t)
    return -total


def _flat_links(scenario: Scenario):
    npos = {n: i for i, n in enumerate(scenario.nodes)}
    T = scenario.T
    snd = np.array([npos[v.snd.node] * T + v.snd.time - 1 for v in scenario.virtual_links],
                   dtype=int)
    rec = np.array([npos[v.rec.node] * T + v.rec.time - 1 for v in scenario.virtual_links],
                   dtype=int)
    price = np.array([v.price for v in scenario.virtual_links], dtype=float)
    cap = np.array([v.capacity for v in scenario.virtual_links], dtype=float)
    return snd, rec, price, cap


def _bracket(fn, x: float, step: float) -> tuple[float, float]:
    """Left and right difference quotients of a convex scalar function."""
    base = fn(x)
    return (base - fn(x - step)) / step, (fn(x + step) - base) / step


def _unique_flow_gradient(scenario: Scenario, t: int, prices, npos, tol: float = 1e-7):
    """Gradient of the transmission profit in the prices at ``t``, or None.

    Complementary slackness pins every column with a nonzero reduced cost to
    its bound and every row with a nonzero dual to equality. When the columns
    left over determine the net inflow at each node, the profit is
    differentiable and that inflow is its gradient. Otherwise the caller falls
    back to difference quotients.
    """
    from .builder import build_flow_subproblem

    lp = build_flow_subproblem(scenario, t, prices)
    sol = solve(lp)
    if not sol.optimal:
        return None
    cols = lp.__dict__["flow_columns"]
    G = np.zeros((len(scenario.nodes), lp.n_vars))    # net inflow as a map of the columns
    for l, line in enumerate(scenario.lines):
        for j, sign in ((cols[2 * l], 1.0), (cols[2 * l + 1], -1.0)):
            G[npos[line.rec], j] += sign
            G[npos[line.snd], j] -= sign
    r = lp.c - lp.A_eq.T @ sol.y_eq - lp.A_ub.T @ sol.y_ub
    loose = (np.abs(r) <= tol) & (lp.lb < lp.ub)
    if loose.any():
        rows = [lp.A_eq.toarray()]
        if lp.n_ub:
            rows.append(lp.A_ub.toarray()[np.abs(sol.y_ub) > tol])
        M = np.vstack(rows)[:, loose]
        # the inflow is constant on the face when its rows lie in the row space of M
        rank_m = np.linalg.matrix_rank(M) if M.shape[0] else 0
        if np.linalg.matrix_rank(np.vstack([M, G[:, loose]])) > rank_m:
            return None
    return G @ sol.x


def subgradient_intervals(scenario: Scenario, pi, omega_l=None, omega_u=None,
                          tie: float = 1e-9, step: float = 1e-5,
                          only: tuple[int, int] | None = None):
    """Subdifferential of the negated dual function in every nodal price.

    Returns ``(lo, hi)`` arrays shaped (|N|, T). Demand, supplier and link
    pieces are exact intervals split at ties; the transmission term and
    ramp-limited suppliers are bracketed by one-sided difference quotients.
    ``only=(node_position, time)`` restricts the numerical work to one entry.
    """
    pi = np.asarray(pi, dtype=float)
    omega_l, omega_u = _omega_arrays(scenario, omega_l, omega_u)
    pi_hat = pi + omega_u - omega_l
    N, T = pi.shape
    lo, hi = np.zeros((N, T)), np.zeros((N, T))
    npos = {n: i for i, n in enumerate(scenario.nodes)}

    def wanted(n_i, t):
        return only is None or only == (n_i, t)

    for dem in scenario.demands:
        n_i = npos[dem.node]
        margin = np.asarray(dem.price) - pi_hat[n_i]
        cap = np.asarray(dem.capacity)
        lo[n_i] -= np.where(margin >= -tie, cap, 0.0)
        hi[n_i] -= np.where(margin > tie, cap, 0.0)
    for sup in scenario.suppliers:
        n_i = npos[sup.node]
        if sup.ramp_limit is None or T == 1:
            margin = pi[n_i] - np.asarray(sup.price)
            cap = np.asarray(sup.capacity)
            lo[n_i] += np.where(margin > tie, cap, 0.0)
            hi[n_i] += np.where(margin >= -tie, cap, 0.0)
            continue
        for t in range(T):
            if not wanted(n_i, t):
                continue

            def profit(x, t=t):
                series = pi[n_i].copy()
                series[t] = x
                return supplier_optimal_profit(sup, series)
            a, b = _bracket(profit, pi[n_i, t], step)
            lo[n_i, t] += a
            hi[n_i, t] += b
    if scenario.virtual_links:
        snd, rec, price, cap = _flat_links(scenario)
        flat = pi_hat.ravel()
        unit = flat[snd] - flat[rec] - price
        a = np.where(unit > tie, cap, 0.0)
        b = np.where(unit >= -tie, cap, 0.0)
        flo, fhi = lo.reshape(-1), hi.reshape(-1)
        np.add.at(flo, snd, a)
        np.add.at(fhi, snd, b)
        np.add.at(flo, rec, -b)
        np.add.at(fhi, rec, -a)
    if scenario.lines:
        for t in range(T):
            grad = _unique_flow_gradient(scenario, t + 1, pi[:, t], npos)
            if grad is not None:
                lo[:, t] += grad
                hi[:, t] += grad
                continue
            for n_i in range(N):
                if not wanted(n_i, t):
                    continue

                def value(x, t=t, n_i=n_i):
                    prices = pi[:, t].copy()
                    prices[n_i] = x
                    return solve_subproblem_flows(scenario, t + 1, prices)[0]
                a, b = _bracket(value, pi[n_i, t], step)
                lo[n_i, t] += a
                hi[n_i, t] += b
    return np.minimum(lo, hi), np.maximum(lo, hi)


def subgradient_interval(scenario: Scenario, pi, omega_l=None, omega_u=None,
                         at: SpaceTimeIndex | None = None, tie: float = 1e-9,
                         step: float = 1e-5) -> tuple[float, float]:
    """Subdifferential interval of the negated dual function in the price at ``at``."""
    n_i, t = scenario.nodes.index(at.node), at.time - 1
    lo, hi = subgradient_intervals(scenario, pi, omega_l, omega_u, tie, step, only=(n_i, t))
    return float(lo[n_i, t]), float(hi[n_i, t])


def check_dual_function(scenario: Scenario, solution: PrimalDualSolution,
                        settlement: Settlement, tol: float = 1e-6) -> CheckRecord:
    col = _Collector("dual_function")
    value = eval_dual_function(scenario, settlement.pi, settlement.omega_l, settlement.omega_u)
    col.compare("D(pi*, omega*) vs optimum", value, solution.objective, tol)
    return col.record()


def check_subgradient(scenario: Scenario, settlement: Settlement, slack: float = 1e-6,
                      tie: float = 1e-9, step: float = 1e-5) -> CheckRecord:
    col = _Collector("subgradient")
    lo, hi = subgradient_intervals(scenario, settlement.pi, settlement.omega_l,
                                   settlement.omega_u, tie, step)
    for t in scenario.times:
        for n_i, n in enumerate(scenario.nodes):
            col.count += 1
            miss = max(lo[n_i, t - 1], -hi[n_i, t - 1], 0.0)
            col.max_residual = max(col.max_residual, miss)
            if miss > slack:
                col.failures.append(
                    f"0 not in [{lo[n_i, t - 1]:.9g}, {hi[n_i, t - 1]:.9g}] at ({n},{t})")
    return col.record()


# ---------------------------------------------------------------------------

def verify_all(scenario: Scenario, solution: PrimalDualSolution | None = None,
               lp: LPInstance | None = None, checks=ALL_CHECKS,
               tolerances: dict | None = None, backend: str = "auto") -> VerificationReport:
    """Run the enabled checks and collect one record per check."""
    tols = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    unknown = set(checks) - set(ALL_CHECKS) - {"disaggregation_equivalence"}
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    lp = lp if lp is not None else build(scenario)
    solution = solution if solution is not None else solve(lp, backend)
    if not solution.optimal:
        return VerificationReport(
            [CheckRecord(name, FAIL, math.inf, [f"status {solution.status.value}"])
             for name in checks], tols)
    st = settle(scenario, solution, lp)
    value, cleared = tols["value"], tols["cleared"]
    runners = {
        "optimality": lambda: check_optimality(lp, solution),
        "competitive_equilibrium": lambda: check_competitive_equilibrium(
            scenario, solution, st, lp, value),
        "revenue_adequacy": lambda: check_revenue_adequacy(st, value),
        "cost_recovery": lambda: check_cost_recovery(scenario, st, "auto", value),
        "price_bounds": lambda: check_price_bounds(scenario, solution, st, lp, value, cleared),
        "vlink_congestion": lambda: check_vlink_congestion(scenario, solution, st, lp, value,
                                                           cleared),
        "dual_function": lambda: check_dual_function(scenario, solution, st, value),
        "subgradient": lambda: check_subgradient(scenario, st, value, tols["tie"],
                                                 tols["fd_step"]),
        "disaggregation_equivalence": lambda: check_disaggregation_equivalence(
            scenario, tols["objective"], backend),
    }
    return VerificationReport([runners[name]() for name in checks], tols)
