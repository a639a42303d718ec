"""Assemble the space-time clearing LP from a scenario.

The LP is held in a generic form::

    min  c'x + const
    s.t. A_eq x  = b_eq
         A_ub x <= b_ub
         lb <= x <= ub

Two-sided constraints (computing capacity, ramping, angle differences) are
stored as pairs of one-sided rows so each side carries its own dual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import Demand, NetworkModel, Scenario, require_valid

NONE = -1


@dataclass
class IndexMap:
    """Positions of every semantic variable and row; ``NONE`` marks absence.

    Directed edge ``k = 2*l`` is ``l+`` (snd -> rec) and ``k = 2*l + 1`` is
    ``l-``.
    """

    node_pos: dict
    d: np.ndarray            # (|D|, T)
    p: np.ndarray            # (|S|, T)
    f: np.ndarray            # (2|L|, T)
    theta: np.ndarray        # (|N|, T)
    delta: np.ndarray        # (|V|,)
    balance: np.ndarray      # (|N|, T) eq rows
    dc: np.ndarray           # (|L|, T) eq rows
    cap_upper: np.ndarray    # (|N|, T) ub rows
    cap_lower: np.ndarray    # (|N|, T) ub rows
    ramp_up: np.ndarray      # (|S|, T-1) ub rows, p[t+1] - p[t] <= r
    ramp_down: np.ndarray    # (|S|, T-1) ub rows, p[t] - p[t+1] <= r
    angle_upper: np.ndarray  # (|L|, T) ub rows
    angle_lower: np.ndarray  # (|L|, T) ub rows
    extra_vars: dict = field(default_factory=dict)
    extra_rows: dict = field(default_factory=dict)


@dataclass
class LPInstance:
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    var_names: list[str]
    eq_names: list[str]
    ub_names: list[str]
    index: IndexMap | None = None
    const: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_eq(self) -> int:
        return len(self.b_eq)

    @property
    def n_ub(self) -> int:
        return len(self.b_ub)

    def var_index(self, name: str) -> int:
        return self._lookup("_var_lookup", self.var_names)[name]

    def row_index(self, name: str) -> tuple[str, int]:
        """Return ``("eq"|"ub", position)`` for a row name."""
        eq = self._lookup("_eq_lookup", self.eq_names)
        if name in eq:
            return "eq", eq[name]
        return "ub", self._lookup("_ub_lookup", self.ub_names)[name]

    def _lookup(self, attr, names):
        table = self.__dict__.get(attr)
        if table is None:
            table = {n: i for i, n in enumerate(names)}
            self.__dict__[attr] = table
        return table

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.const

    def copy_with(self, **changes) -> "LPInstance":
        fields = dict(self.__dict__)
        for key in ("_var_lookup", "_eq_lookup", "_ub_lookup"):
            fields.pop(key, None)
        fields.update(changes)
        return LPInstance(**fields)

    def to_lp_text(self) -> str:
        return export_lp_text(self)


class _Assembler:
    def __init__(self):
        self.c: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.names: list[str] = []
        self.eq: list[tuple[dict, float]] = []
        self.eq_names: list[str] = []
        self.ineq: list[tuple[dict, float]] = []
        self.ub_names: list[str] = []

    def var(self, name, lb=0.0, ub=math.inf, cost=0.0) -> int:
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.c.append(cost)
        return len(self.names) - 1

    def add_eq(self, name, terms: dict, rhs=0.0) -> int:
        self.eq.append((terms, rhs))
        self.eq_names.append(name)
        return len(self.eq) - 1

    def add_ub(self, name, terms: dict, rhs) -> int:
        self.ineq.append((terms, rhs))
        self.ub_names.append(name)
        return len(self.ineq) - 1

    def _matrix(self, rows):
        data, ri, ci = [], [], []
        for r, (terms, _) in enumerate(rows):
            for col, val in terms.items():
                if val != 0.0:
                    ri.append(r)
                    ci.append(col)
                    data.append(val)
        shape = (len(rows), len(self.names))
        return sp.csr_matrix((data, (ri, ci)), shape=shape, dtype=float)

    def finish(self, index) -> LPInstance:
        return LPInstance(
            c=np.array(self.c, dtype=float),
            lb=np.array(self.lb, dtype=float),
            ub=np.array(self.ub, dtype=float),
            A_eq=self._matrix(self.eq),
            b_eq=np.array([r for _, r in self.eq], dtype=float),
            A_ub=self._matrix(self.ineq),
            b_ub=np.array([r for _, r in self.ineq], dtype=float),
            var_names=self.names,
            eq_names=self.eq_names,
            ub_names=self.ub_names,
            index=index,
        )


def _add(terms: dict, col: int, val: float) -> None:
    terms[col] = terms.get(col, 0.0) + val


def _node_sort_key(node):
    return (0, node, "") if isinstance(node, (int, float)) else (1, 0, str(node))


def reference_nodes(scenario: Scenario) -> set:
    """One angle reference per connected component of the line graph."""
    adj = {n: set() for n in scenario.nodes}
    for l in scenario.lines:
        adj[l.snd].add(l.rec)
        adj[l.rec].add(l.snd)
    seen, refs = set(), set()
    for start in sorted(scenario.nodes, key=_node_sort_key):
        if start in seen:
            continue
        comp, stack = set(), [start]
        while stack:
            n = stack.pop()
            if n in comp:
                continue
            comp.add(n)
            stack.extend(adj[n] - comp)
        seen |= comp
        if scenario.reference_node is not None and scenario.reference_node in comp:
            refs.add(scenario.reference_node)
        else:
            refs.add(min(comp, key=_node_sort_key))
    return refs


def _check_unique_ids(scenario: Scenario) -> None:
    for kind, items in (("supplier", scenario.suppliers), ("demand", scenario.demands),
                        ("line", scenario.lines), ("virtual link", scenario.virtual_links)):
        ids = [x.id for x in items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicated {kind} ids")


@dataclass(frozen=True)
class _Disaggregation:
    demand: int              # position of the flexible demand
    time: int
    nodes: tuple             # N_d with hub first
    shift_price: tuple       # per node (0 for hub)
    shift_cap: tuple         # per node (inf for hub)


def _assemble(scenario: Scenario, disagg: _Disaggregation | None = None) -> LPInstance:
    require_valid(scenario)
    _check_unique_ids(scenario)
    T = scenario.T
    nodes = scenario.nodes
    node_pos = {n: i for i, n in enumerate(nodes)}
    nN, nS, nD, nL, nV = len(nodes), len(scenario.suppliers), len(scenario.demands), \
        len(scenario.lines), len(scenario.virtual_links)
    dc_mode = scenario.network_model is NetworkModel.DC
    asm = _Assembler()

    idx = IndexMap(
        node_pos=node_pos,
        d=np.full((nD, T), NONE), p=np.full((nS, T), NONE),
        f=np.full((2 * nL, T), NONE), theta=np.full((nN, T), NONE),
        delta=np.full(nV, NONE),
        balance=np.full((nN, T), NONE), dc=np.full((nL, T), NONE),
        cap_upper=np.full((nN, T), NONE), cap_lower=np.full((nN, T), NONE),
        ramp_up=np.full((nS, max(T - 1, 0)), NONE), ramp_down=np.full((nS, max(T - 1, 0)), NONE),
        angle_upper=np.full((nL, T), NONE), angle_lower=np.full((nL, T), NONE),
    )

    # variables, in a fixed order: d, p, f, theta, delta
    for j, dem in enumerate(scenario.demands):
        for t in scenario.times:
            if disagg is not None and j == disagg.demand and t == disagg.time:
                cols = []
                for n, price, cap in zip(disagg.nodes, disagg.shift_price, disagg.shift_cap):
                    cols.append(asm.var(f"dn[{dem.id},{n},{t}]", 0.0, cap,
                                        price - dem.price[t - 1]))
                idx.extra_vars["disagg"] = cols
                continue
            idx.d[j, t - 1] = asm.var(f"d[{dem.id},{t}]", 0.0, dem.capacity[t - 1],
                                      -dem.price[t - 1])
    for i, sup in enumerate(scenario.suppliers):
        for t in scenario.times:
            idx.p[i, t - 1] = asm.var(f"p[{sup.id},{t}]", 0.0, sup.capacity[t - 1],
                                      sup.price[t - 1])
    for l, line in enumerate(scenario.lines):
        cap = math.inf if dc_mode else line.flow_cap
        for t in scenario.times:
            idx.f[2 * l, t - 1] = asm.var(f"f[{line.id}+,{t}]", 0.0, cap, line.price)
            idx.f[2 * l + 1, t - 1] = asm.var(f"f[{line.id}-,{t}]", 0.0, cap, line.price)
    if dc_mode and nL:
        refs = reference_nodes(scenario)
        incident = {l.snd for l in scenario.lines} | {l.rec for l in scenario.lines}
        for n in nodes:
            if n not in incident:
                continue
            pinned = n in refs
            for t in scenario.times:
                idx.theta[node_pos[n], t - 1] = asm.var(
                    f"theta[{n},{t}]", 0.0 if pinned else -math.inf, 0.0 if pinned else math.inf)
    skipped_links = set()
    if disagg is not None:
        skipped_links = {k for k, v in enumerate(scenario.virtual_links)
                         if v.owner == scenario.demands[disagg.demand].id}
    for k, v in enumerate(scenario.virtual_links):
        if k in skipped_links:
            continue
        idx.delta[k] = asm.var(f"delta[{v.id}]", 0.0, v.capacity, v.price)

    # net DaCe load g(n,t) = sum d + receipts - sends, reused by balance and caps
    load_terms = {(n, t): {} for n in nodes for t in scenario.times}
    for j, dem in enumerate(scenario.demands):
        for t in scenario.times:
            if idx.d[j, t - 1] != NONE:
                _add(load_terms[dem.node, t], idx.d[j, t - 1], 1.0)
    if disagg is not None:
        for n, col in zip(disagg.nodes, idx.extra_vars["disagg"]):
            _add(load_terms[n, disagg.time], col, 1.0)
    for k, v in enumerate(scenario.virtual_links):
        if idx.delta[k] == NONE:
            continue
        _add(load_terms[v.rec.node, v.rec.time], idx.delta[k], 1.0)
        _add(load_terms[v.snd.node, v.snd.time], idx.delta[k], -1.0)

    # balance: inflow + supply + sends - outflow - demand - receipts = 0
    for t in scenario.times:
        for n in nodes:
            terms = {col: -val for col, val in load_terms[n, t].items()}
            for i, sup in enumerate(scenario.suppliers):
                if sup.node == n:
                    _add(terms, idx.p[i, t - 1], 1.0)
            for l, line in enumerate(scenario.lines):
                plus, minus = idx.f[2 * l, t - 1], idx.f[2 * l + 1, t - 1]
                if line.rec == n:
                    _add(terms, plus, 1.0)
                    _add(terms, minus, -1.0)
                if line.snd == n:
                    _add(terms, plus, -1.0)
                    _add(terms, minus, 1.0)
            idx.balance[node_pos[n], t - 1] = asm.add_eq(f"balance[{n},{t}]", terms)

    if dc_mode:
        for t in scenario.times:
            for l, line in enumerate(scenario.lines):
                ts = idx.theta[node_pos[line.snd], t - 1]
                tr = idx.theta[node_pos[line.rec], t - 1]
                terms = {idx.f[2 * l, t - 1]: 1.0, idx.f[2 * l + 1, t - 1]: -1.0}
                _add(terms, ts, -line.susceptance)
                _add(terms, tr, line.susceptance)
                idx.dc[l, t - 1] = asm.add_eq(f"dc[{line.id},{t}]", terms)

    for t in scenario.times:
        for n in nodes:
            cap = scenario.cap_at(n, t)
            if not math.isfinite(cap):
                continue
            terms = load_terms[n, t]
            idx.cap_upper[node_pos[n], t - 1] = asm.add_ub(f"capU[{n},{t}]", dict(terms), cap)
            idx.cap_lower[node_pos[n], t - 1] = asm.add_ub(
                f"capL[{n},{t}]", {c: -v for c, v in terms.items()}, 0.0)

    for i, sup in enumerate(scenario.suppliers):
        if sup.ramp_limit is None:
            continue
        for t in range(1, T):
            a, b = idx.p[i, t - 1], idx.p[i, t]
            idx.ramp_up[i, t - 1] = asm.add_ub(f"rampU[{sup.id},{t}]", {b: 1.0, a: -1.0},
                                               sup.ramp_limit)
            idx.ramp_down[i, t - 1] = asm.add_ub(f"rampD[{sup.id},{t}]", {a: 1.0, b: -1.0},
                                                 sup.ramp_limit)

    if dc_mode:
        for t in scenario.times:
            for l, line in enumerate(scenario.lines):
                ts = idx.theta[node_pos[line.snd], t - 1]
                tr = idx.theta[node_pos[line.rec], t - 1]
                cap = line.effective_angle_cap
                idx.angle_upper[l, t - 1] = asm.add_ub(f"angU[{line.id},{t}]",
                                                       {ts: 1.0, tr: -1.0}, cap)
                idx.angle_lower[l, t - 1] = asm.add_ub(f"angL[{line.id},{t}]",
                                                       {ts: -1.0, tr: 1.0}, cap)

    if disagg is not None:
        dem = scenario.demands[disagg.demand]
        idx.extra_rows["disagg_total"] = asm.add_ub(
            f"total[{dem.id},{disagg.time}]",
            {col: 1.0 for col in idx.extra_vars["disagg"]},
            dem.capacity[disagg.time - 1])
    return asm.finish(idx)


def build(scenario: Scenario) -> LPInstance:
    """Build the clearing LP (minimization of negative social surplus)."""
    return _assemble(scenario)


def disaggregation_layout(scenario: Scenario) -> _Disaggregation:
    """Check the single-flexible-consumer preconditions and describe the layout.

    Raises ``ValueError`` when the scenario has more than one demand owning
    links, links spanning several times, links not leaving the hub, repeated
    receiving nodes, or a hub whose net load is not kept nonnegative by a
    finite computing capacity with the consumer alone at the hub.
    """
    require_valid(scenario)
    owners = {v.owner for v in scenario.virtual_links}
    if len(owners) > 1:
        raise ValueError("disaggregation needs exactly one demand with virtual links")
    if not owners:
        if len(scenario.demands) != 1:
            raise ValueError("without virtual links the scenario must have a single demand")
        return _Disaggregation(0, 1, (scenario.demands[0].node,), (0.0,), (math.inf,))
    owner = owners.pop()
    j = next(k for k, d in enumerate(scenario.demands) if d.id == owner)
    dem: Demand = scenario.demands[j]
    links = [v for v in scenario.virtual_links if v.owner == owner]
    times = {v.snd.time for v in links} | {v.rec.time for v in links}
    if len(times) != 1:
        raise ValueError("all virtual links must lie in one time slice")
    t = times.pop()
    rec_nodes = [v.rec.node for v in links]
    if any(v.snd.node != dem.node for v in links) or dem.node in rec_nodes:
        raise ValueError("virtual links must go from the hub node to alternate nodes")
    if len(set(rec_nodes)) != len(rec_nodes):
        raise ValueError("each alternate node may be served by one link only")
    others = [d for d in scenario.demands if d.node == dem.node and d.id != dem.id]
    if not math.isfinite(scenario.cap_at(dem.node, t)) or others:
        raise ValueError("hub needs a finite computing capacity and no other demand")
    return _Disaggregation(
        demand=j, time=t,
        nodes=(dem.node, *rec_nodes),
        shift_price=(0.0, *(v.price for v in links)),
        shift_cap=(math.inf, *(v.capacity for v in links)),
    )


def build_disaggregation(scenario: Scenario) -> LPInstance:
    """Build the load-disaggregation form of a single flexible consumer.

    The consumer's hub load and its virtual-link shifts are replaced by served
    loads ``d_n`` at every offered node with ``sum d_n <= requested load``.
    Link prices and capacities carry over as per-node serving costs and caps.
    """
    return _assemble(scenario, disaggregation_layout(scenario))


_LP_ALLOWED = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789!\"#$%&()/,.;?@_`'{}|~")


def _lp_name(name: str) -> str:
    name = name.replace("[", "(").replace("]", ")")
    return "".join(ch if ch in _LP_ALLOWED else "_" for ch in name)


def _fmt(x: float) -> str:
    return repr(float(x))


def _lp_expr(row: sp.csr_matrix, names: list[str]) -> str:
    parts = []
    for col, val in sorted(zip(row.indices, row.data)):
        sign = "-" if val < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(val))} {names[col]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    return " ".join(parts)


def export_lp_text(lp: LPInstance) -> str:
    """Serialize in CPLEX LP text format (deterministic for identical input)."""
    names = [_lp_name(n) for n in lp.var_names]
    out = ["\\ space-time clearing LP", "Minimize"]
    obj_row = sp.csr_matrix(lp.c.reshape(1, -1))
    obj = _lp_expr(obj_row, names) if obj_row.nnz else "0 " + names[0]
    out.append(f" obj: {obj}")
    if lp.const:
        out.append(f"\\ objective constant {_fmt(lp.const)}")
    out.append("Subject To")
    for r, name in enumerate(lp.eq_names):
        out.append(f" {_lp_name(name)}: {_lp_expr(lp.A_eq[r], names)} = {_fmt(lp.b_eq[r])}")
    for r, name in enumerate(lp.ub_names):
        out.append(f" {_lp_name(name)}: {_lp_expr(lp.A_ub[r], names)} <= {_fmt(lp.b_ub[r])}")
    out.append("Bounds")
    for j, name in enumerate(names):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {name} free")
        elif lo == hi:
            out.append(f" {name} = {_fmt(lo)}")
        else:
            left = "-inf" if lo == -math.inf else _fmt(lo)
            right = "+inf" if hi == math.inf else _fmt(hi)
            out.append(f" {left} <= {name} <= {right}")
    out.append("End")
    return "\n".join(out) + "\n"


def build_flow_subproblem(scenario: Scenario, t: int, prices) -> LPInstance:
    """LP of the transmission operator at time ``t`` facing nodal ``prices``.

    Minimizes the negated profit ``sum_k (price_rec - price_snd - alpha_k) f_k``
    over the network-feasible flows of that time slice. ``prices`` maps node
    ids to prices (or is a sequence aligned with ``scenario.nodes``).
    """
    if not isinstance(prices, dict):
        prices = dict(zip(scenario.nodes, prices))
    dc_mode = scenario.network_model is NetworkModel.DC
    asm = _Assembler()
    nL = len(scenario.lines)
    flows = np.full(2 * nL, NONE)
    for l, line in enumerate(scenario.lines):
        cap = math.inf if dc_mode else line.flow_cap
        gain = prices[line.rec] - prices[line.snd]
        flows[2 * l] = asm.var(f"f[{line.id}+,{t}]", 0.0, cap, line.price - gain)
        flows[2 * l + 1] = asm.var(f"f[{line.id}-,{t}]", 0.0, cap, line.price + gain)
    if dc_mode and nL:
        refs = reference_nodes(scenario)
        theta = {}
        for n in scenario.nodes:
            if any(n in (line.snd, line.rec) for line in scenario.lines):
                pinned = n in refs
                theta[n] = asm.var(f"theta[{n},{t}]", 0.0 if pinned else -math.inf,
                                   0.0 if pinned else math.inf)
        for l, line in enumerate(scenario.lines):
            terms = {int(flows[2 * l]): 1.0, int(flows[2 * l + 1]): -1.0}
            _add(terms, theta[line.snd], -line.susceptance)
            _add(terms, theta[line.rec], line.susceptance)
            asm.add_eq(f"dc[{line.id},{t}]", terms)
        for line in scenario.lines:
            cap = line.effective_angle_cap
            ts, tr = theta[line.snd], theta[line.rec]
            asm.add_ub(f"angU[{line.id},{t}]", {ts: 1.0, tr: -1.0}, cap)
            asm.add_ub(f"angL[{line.id},{t}]", {ts: -1.0, tr: 1.0}, cap)
    lp = asm.finish(None)
    lp.index = None
    lp.__dict__["flow_columns"] = flows
    return lp
