"""LP solving with primal and dual recovery.

Two backends share one contract:

* ``"simplex"``: a dense two-phase primal simplex written here; deterministic
  (Dantzig pricing with lowest-index ties, Bland's rule after a stall).
* ``"highs"``: the HiGHS dual simplex shipped with scipy, used for instances
  too large for dense tableaus.

Dual sign convention: with reduced costs ``r = c - A_eq' y_eq - A_ub' y_ub``
the balance-row duals ``y_eq`` are the nodal prices, and ``y_ub <= 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .builder import LPInstance

EPS_FEAS = 1e-8
EPS_COMP = 1e-7
EPS_GAP = 1e-7

_PIVOT_TOL = 1e-9
_COST_TOL = 1e-9
_STALL_LIMIT = 50
# dense tableaus above this many cells are routed to HiGHS under "auto"
AUTO_DENSE_LIMIT = 2_000_000


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    pass


@dataclass
class PrimalDualSolution:
    status: Status
    objective: float = math.nan
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    backend: str = ""
    iterations: int = 0
    basis: list[str] | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL

    def to_dict(self, lp: LPInstance | None = None) -> dict:
        out = {"status": self.status.value, "objective": self.objective,
               "backend": self.backend, "iterations": self.iterations}
        if lp is not None and self.optimal:
            out["primal"] = dict(zip(lp.var_names, map(float, self.x)))
            out["dual"] = {**dict(zip(lp.eq_names, map(float, self.y_eq))),
                           **dict(zip(lp.ub_names, map(float, self.y_ub)))}
        else:
            out["primal"] = [float(v) for v in self.x]
            out["dual_eq"] = [float(v) for v in self.y_eq]
            out["dual_ub"] = [float(v) for v in self.y_ub]
        if self.basis is not None:
            out["basis"] = list(self.basis)
        return out


# ---------------------------------------------------------------------------
# standard form

@dataclass
class _StandardForm:
    A: np.ndarray          # m x n_total, rows already sign-normalized
    b: np.ndarray
    c: np.ndarray          # phase-2 cost per column (artificials 0)
    n_struct: int
    art_start: int
    init_cols: np.ndarray  # identity column per row
    row_sign: np.ndarray   # +1 or -1 flip applied to each row
    col_names: list[str]
    var_map: list          # per generic var: (offset, [(col, coef), ...])
    const: float
    m_eq: int
    m_ub: int


def _standard_form(lp: LPInstance) -> _StandardForm:
    n = lp.n_vars
    A_eq = lp.A_eq.toarray() if lp.n_eq else np.zeros((0, n))
    A_ub = lp.A_ub.toarray() if lp.n_ub else np.zeros((0, n))
    var_map, col_names, M_cols = [], [], []
    bound_rows = []  # (struct col, rhs)
    offset = np.zeros(n)
    for j in range(n):
        lo, hi, name = lp.lb[j], lp.ub[j], lp.var_names[j]
        if lo > hi:
            raise SolverError(f"variable {name} has empty bounds")
        if math.isfinite(lo) and lo == hi:
            offset[j] = lo
            var_map.append((lo, []))
        elif math.isfinite(lo):
            col = len(col_names)
            col_names.append(name)
            M_cols.append((j, 1.0))
            offset[j] = lo
            var_map.append((lo, [(col, 1.0)]))
            if math.isfinite(hi):
                bound_rows.append((col, hi - lo))
        elif math.isfinite(hi):
            col = len(col_names)
            col_names.append(f"-{name}")
            M_cols.append((j, -1.0))
            offset[j] = hi
            var_map.append((hi, [(col, -1.0)]))
        else:
            col = len(col_names)
            col_names += [f"{name}+", f"{name}-"]
            M_cols += [(j, 1.0), (j, -1.0)]
            var_map.append((0.0, [(col, 1.0), (col + 1, -1.0)]))
    ns = len(col_names)
    M = np.zeros((n, ns))
    for col, (j, coef) in enumerate(M_cols):
        M[j, col] = coef

    m_eq, m_ub, m_b = lp.n_eq, lp.n_ub, len(bound_rows)
    m = m_eq + m_ub + m_b
    n_slack = m_ub + m_b
    A = np.zeros((m, ns + n_slack))
    b = np.zeros(m)
    A[:m_eq, :ns] = A_eq @ M
    b[:m_eq] = lp.b_eq - A_eq @ offset
    A[m_eq:m_eq + m_ub, :ns] = A_ub @ M
    b[m_eq:m_eq + m_ub] = lp.b_ub - A_ub @ offset
    for r, (col, rhs) in enumerate(bound_rows):
        A[m_eq + m_ub + r, col] = 1.0
        b[m_eq + m_ub + r] = rhs
    for r in range(n_slack):
        A[m_eq + r, ns + r] = 1.0
    slack_names = [f"slack[{nm}]" for nm in lp.ub_names] + \
                  [f"slack[ub {col_names[c]}]" for c, _ in bound_rows]

    row_sign = np.where(b < 0, -1.0, 1.0)
    A *= row_sign[:, None]
    b *= row_sign

    init_cols = np.full(m, -1)
    art_rows = []
    for i in range(m):
        if i >= m_eq and row_sign[i] > 0:
            init_cols[i] = ns + (i - m_eq)
        else:
            art_rows.append(i)
    art_start = ns + n_slack
    if art_rows:
        art = np.zeros((m, len(art_rows)))
        for k, i in enumerate(art_rows):
            art[i, k] = 1.0
            init_cols[i] = art_start + k
        A = np.hstack([A, art])
    c_struct = M.T @ lp.c
    c = np.concatenate([c_struct, np.zeros(A.shape[1] - ns)])
    names = col_names + slack_names + [f"art[{i}]" for i in art_rows]
    return _StandardForm(A, b, c, ns, art_start, init_cols, row_sign, names, var_map,
                         float(lp.c @ offset) + lp.const, m_eq, m_ub)


# ---------------------------------------------------------------------------
# dense tableau simplex

class _Tableau:
    def __init__(self, A, b, basis):
        self.T = np.hstack([A, b[:, None]]).astype(float)
        self.basis = np.array(basis, dtype=int)
        self.iterations = 0

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, c] = 0.0
        T[r, c] = 1.0
        self.basis[r] = c
        self.iterations += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int, phase: str) -> str:
        """Minimize ``cost`` over columns in ``allowed``; return status."""
        T = self.T
        bland = False
        best = math.inf
        stall = 0
        start = self.iterations
        while True:
            cb = cost[self.basis]
            red = cost - cb @ T[:, :-1]
            red[~allowed] = 0.0
            scale = max(1.0, float(np.max(np.abs(cost))))
            candidates = np.flatnonzero(red < -_COST_TOL * scale)
            if candidates.size == 0:
                return "optimal"
            if self.iterations - start >= max_iter:
                rule = "Bland" if bland else "Dantzig"
                raise SolverError(
                    f"{phase}: iteration cap {max_iter} reached under {rule} pivoting "
                    f"(stalled {stall} iterations, basis size {len(self.basis)})")
            if bland:
                c = int(candidates[0])
            else:
                vals = red[candidates]
                c = int(candidates[np.flatnonzero(vals == vals.min())[0]])
            column = T[:, c]
            pos = np.flatnonzero(column > _PIVOT_TOL)
            if pos.size == 0:
                return "unbounded"
            ratios = T[pos, -1] / column[pos]
            rmin = ratios.min()
            ties = pos[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
            r = int(ties[np.argmin(self.basis[ties])])
            self.pivot(r, c)
            obj = float(cost[self.basis] @ T[:, -1])
            if obj < best - 1e-12 * max(1.0, abs(best) if math.isfinite(best) else 1.0):
                best = obj
                stall = 0
            else:
                stall += 1
                if stall >= _STALL_LIMIT:
                    bland = True


def _solve_simplex(lp: LPInstance, max_iter: int | None = None) -> PrimalDualSolution:
    sf = _standard_form(lp)
    m, ntot = sf.A.shape
    max_iter = max_iter or 50 * (m + ntot) + 1000
    tab = _Tableau(sf.A, sf.b, sf.init_cols)
    is_art = np.zeros(ntot, dtype=bool)
    is_art[sf.art_start:] = True

    if is_art.any():
        phase1_cost = is_art.astype(float)
        tab.run(phase1_cost, np.ones(ntot, dtype=bool), max_iter, "phase 1")
        infeas = float(phase1_cost[tab.basis] @ tab.T[:, -1])
        if infeas > 1e-9 * max(1.0, float(np.max(np.abs(sf.b)))):
            return PrimalDualSolution(Status.INFEASIBLE, backend="simplex",
                                      iterations=tab.iterations)
        # drive zero-level artificials out of the basis where possible
        for r in range(m):
            if is_art[tab.basis[r]]:
                row = tab.T[r, :sf.art_start]
                nz = np.flatnonzero(np.abs(row) > _PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
    status = tab.run(sf.c, ~is_art, max_iter, "phase 2")
    if status == "unbounded":
        return PrimalDualSolution(Status.UNBOUNDED, backend="simplex",
                                  iterations=tab.iterations)
    return _recover(lp, sf, tab.basis, tab.iterations)


def _recover(lp: LPInstance, sf: _StandardForm, basis: np.ndarray, iterations: int):
    # re-solve with the final basis on the original data for accuracy
    B = sf.A[:, basis]
    xB = np.linalg.solve(B, sf.b)
    y_s = np.linalg.solve(B.T, sf.c[basis])
    xs = np.zeros(sf.A.shape[1])
    xs[basis] = xB
    xs[(xs < 0) & (xs > -1e-9)] = 0.0
    x = np.array([off + sum(coef * xs[col] for col, coef in cols) for off, cols in sf.var_map])
    y_s = y_s * sf.row_sign
    y_eq = y_s[:sf.m_eq].copy()
    y_ub = y_s[sf.m_eq:sf.m_eq + sf.m_ub].copy()
    y_ub[(y_ub > 0) & (y_ub < 1e-10)] = 0.0
    # clamp to bounds against round-off
    x = np.minimum(np.maximum(x, lp.lb), lp.ub)
    sol = PrimalDualSolution(Status.OPTIMAL, lp.objective(x), x, y_eq, y_ub,
                             reduced_costs(lp, y_eq, y_ub), "simplex", iterations,
                             [sf.col_names[c] for c in basis])
    return sol


# ---------------------------------------------------------------------------
# HiGHS backend

def _solve_highs(lp: LPInstance) -> PrimalDualSolution:
    from scipy.optimize import linprog

    bounds = np.column_stack([lp.lb, lp.ub])
    bounds = [(None if not math.isfinite(lo) else lo, None if not math.isfinite(hi) else hi)
              for lo, hi in bounds]
    res = linprog(
        lp.c,
        A_ub=lp.A_ub if lp.n_ub else None, b_ub=lp.b_ub if lp.n_ub else None,
        A_eq=lp.A_eq if lp.n_eq else None, b_eq=lp.b_eq if lp.n_eq else None,
        bounds=bounds, method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-10, "presolve": True},
    )
    if res.status == 2:
        return PrimalDualSolution(Status.INFEASIBLE, backend="highs")
    if res.status == 3:
        return PrimalDualSolution(Status.UNBOUNDED, backend="highs")
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.minimum(np.maximum(res.x, lp.lb), lp.ub)
    y_eq = np.asarray(res.eqlin.marginals) if lp.n_eq else np.zeros(0)
    y_ub = np.asarray(res.ineqlin.marginals) if lp.n_ub else np.zeros(0)
    sol = PrimalDualSolution(Status.OPTIMAL, lp.objective(x), x, y_eq, y_ub,
                             reduced_costs(lp, y_eq, y_ub), "highs", int(res.nit))
    return _polish_duals(lp, sol)


def _polish_duals(lp: LPInstance, sol: PrimalDualSolution,
                  tol: float = 1e-9) -> PrimalDualSolution:
    """Refine floating-point duals against the active set of ``sol.x``.

    Reduced costs of variables strictly inside their bounds, and of those tied
    at zero up to round-off, are driven to zero by a minimum-norm correction
    restricted to equality and binding rows. The result is kept only if it
    improves the optimality residuals.
    """
    from scipy.sparse.linalg import lsqr

    x = sol.x
    slack = lp.b_ub - lp.A_ub @ x if lp.n_ub else np.zeros(0)
    active = slack <= tol * np.maximum(1.0, np.abs(lp.b_ub))
    y_ub0 = np.where(active, sol.y_ub, 0.0)
    r_all = reduced_costs(lp, sol.y_eq, y_ub0)
    inner = ((x - lp.lb > tol) & (lp.ub - x > tol)) | (np.abs(r_all) <= tol)
    blocks = [lp.A_eq[:, inner].T] if lp.n_eq else []
    if lp.n_ub:
        blocks.append(lp.A_ub[active][:, inner].T)
    if not inner.any() or not blocks:
        return sol
    M = sp.hstack(blocks).tocsr()
    y0 = np.concatenate([sol.y_eq, y_ub0[active]])
    r0 = r_all[inner]
    step = lsqr(M, r0, atol=1e-15, btol=1e-15, iter_lim=20 * M.shape[1])[0]
    y = y0 + step
    y_eq = y[:lp.n_eq]
    y_ub = np.zeros(lp.n_ub)
    y_ub[active] = np.minimum(y[lp.n_eq:], 0.0)
    cand = PrimalDualSolution(Status.OPTIMAL, sol.objective, x, y_eq, y_ub,
                              reduced_costs(lp, y_eq, y_ub), sol.backend, sol.iterations)
    before, after = residuals(lp, sol), residuals(lp, cand)
    worst = lambda r: max(r.dual, r.complementarity, r.gap)  # noqa: E731
    return cand if worst(after) < worst(before) else sol


def _dense_cells(lp: LPInstance) -> int:
    finite_ub = int(np.sum(np.isfinite(lp.ub) & (lp.ub != lp.lb)))
    m = lp.n_eq + lp.n_ub + finite_ub
    return m * (lp.n_vars + m)


def solve(lp: LPInstance, backend: str = "auto") -> PrimalDualSolution:
    """Solve ``lp``; ``backend`` is ``"simplex"``, ``"highs"`` or ``"auto"``."""
    if backend == "auto":
        backend = "simplex" if _dense_cells(lp) <= AUTO_DENSE_LIMIT else "highs"
    if backend == "simplex":
        return _solve_simplex(lp)
    if backend == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# optimality residuals

def reduced_costs(lp: LPInstance, y_eq: np.ndarray, y_ub: np.ndarray) -> np.ndarray:
    r = lp.c.copy()
    if lp.n_eq:
        r -= lp.A_eq.T @ y_eq
    if lp.n_ub:
        r -= lp.A_ub.T @ y_ub
    return r


def dual_objective(lp: LPInstance, y_eq, y_ub) -> float:
    r = reduced_costs(lp, y_eq, y_ub)
    val = float(lp.b_eq @ y_eq) + float(lp.b_ub @ y_ub) + lp.const
    # a reduced cost pushing against an infinite bound is a dual infeasibility,
    # measured separately by ``residuals``; it adds nothing here
    for rj, lo, hi in zip(r, lp.lb, lp.ub):
        if rj > 0 and math.isfinite(lo):
            val += rj * lo
        elif rj < 0 and math.isfinite(hi):
            val += rj * hi
    return val


@dataclass
class Residuals:
    primal: float
    dual: float
    complementarity: float
    gap: float

    def ok(self, feas=EPS_FEAS, comp=EPS_COMP, gap=EPS_GAP) -> bool:
        return self.primal <= feas and self.dual <= feas and \
            self.complementarity <= comp and self.gap <= gap


def residuals(lp: LPInstance, sol: PrimalDualSolution) -> Residuals:
    x, y_eq, y_ub = sol.x, sol.y_eq, sol.y_ub
    primal = 0.0
    if lp.n_eq:
        primal = max(primal, float(np.max(np.abs(lp.A_eq @ x - lp.b_eq))))
    slack = lp.b_ub - lp.A_ub @ x if lp.n_ub else np.zeros(0)
    if lp.n_ub:
        primal = max(primal, float(np.max(np.maximum(-slack, 0.0))))
    primal = max(primal, float(np.max(np.maximum(lp.lb - x, 0.0), initial=0.0)),
                 float(np.max(np.maximum(x - lp.ub, 0.0), initial=0.0)))

    r = reduced_costs(lp, y_eq, y_ub)
    dual = float(np.max(np.maximum(y_ub, 0.0), initial=0.0))
    no_lb = ~np.isfinite(lp.lb)
    no_ub = ~np.isfinite(lp.ub)
    dual = max(dual, float(np.max(np.where(no_lb, np.maximum(r, 0.0), 0.0), initial=0.0)),
               float(np.max(np.where(no_ub, np.maximum(-r, 0.0), 0.0), initial=0.0)))

    comp = float(np.max(np.abs(y_ub * slack), initial=0.0))
    with np.errstate(invalid="ignore"):
        lo_gap = np.where(np.isfinite(lp.lb), x - lp.lb, 0.0)
        hi_gap = np.where(np.isfinite(lp.ub), lp.ub - x, 0.0)
    comp = max(comp, float(np.max(np.maximum(r, 0.0) * lo_gap, initial=0.0)),
               float(np.max(np.maximum(-r, 0.0) * hi_gap, initial=0.0)))
    gap = abs(lp.objective(x) - dual_objective(lp, y_eq, y_ub))
    return Residuals(primal, dual, comp, gap)


# ---------------------------------------------------------------------------
# optimal-face ranges (degeneracy witnesses)

def _active_pattern(lp: LPInstance, sol: PrimalDualSolution, tol: float):
    slack = lp.b_ub - lp.A_ub @ sol.x if lp.n_ub else np.zeros(0)
    binding = slack <= tol
    at_lo = np.isfinite(lp.lb) & (sol.x - lp.lb <= tol)
    at_hi = np.isfinite(lp.ub) & (lp.ub - sol.x <= tol)
    return binding, at_lo, at_hi


def dual_range(lp: LPInstance, sol: PrimalDualSolution, w_eq: np.ndarray,
               w_ub: np.ndarray | None = None, tol: float = 1e-7,
               backend: str = "highs", fix: dict | None = None) -> tuple[float, float]:
    """Min and max of ``w_eq'y_eq + w_ub'y_ub`` over all optimal duals.

    The optimal dual face is described by dual feasibility plus complementary
    slackness against the primal optimum ``sol.x``. ``fix`` pins equality-row
    duals (position -> value); an empty face yields ``(inf, -inf)``.
    """
    n_eq, n_ub = lp.n_eq, lp.n_ub
    w = np.concatenate([w_eq, np.zeros(n_ub) if w_ub is None else w_ub])
    binding, at_lo, at_hi = _active_pattern(lp, sol, tol)
    lb = np.concatenate([np.full(n_eq, -np.inf), np.where(binding, -np.inf, 0.0)])
    ub = np.zeros(n_eq + n_ub)
    ub[:n_eq] = np.inf
    for pos, value in (fix or {}).items():
        lb[pos] = ub[pos] = value
    # reduced cost r = c - A'y; constrain its sign per the primal position
    A = sp.vstack([lp.A_eq, lp.A_ub]).T.tocsr()
    fixed = lp.lb == lp.ub
    rows_ge, rows_le, rows_eq = [], [], []
    for j in range(lp.n_vars):
        if fixed[j]:
            continue
        if at_lo[j] and not at_hi[j]:
            rows_ge.append(j)      # r_j >= 0  <=>  A'y <= c
        elif at_hi[j] and not at_lo[j]:
            rows_le.append(j)      # r_j <= 0  <=>  -A'y <= -c
        elif not at_lo[j] and not at_hi[j]:
            rows_eq.append(j)
    A_ub = sp.vstack([A[rows_ge], -A[rows_le]]).tocsr()
    b_ub = np.concatenate([lp.c[rows_ge], -lp.c[rows_le]])
    names = [f"y{i}" for i in range(n_eq + n_ub)]
    face = LPInstance(c=w, lb=lb, ub=ub, A_eq=A[rows_eq], b_eq=lp.c[rows_eq],
                      A_ub=A_ub, b_ub=b_ub, var_names=names,
                      eq_names=[f"e{j}" for j in rows_eq],
                      ub_names=[f"u{j}" for j in rows_ge + rows_le])
    lo = solve(face, backend)
    if lo.status is Status.INFEASIBLE:
        return math.inf, -math.inf
    hi = solve(face.copy_with(c=-w), backend)
    return (lo.objective if lo.optimal else -math.inf,
            -hi.objective if hi.optimal else math.inf)


def primal_range(lp: LPInstance, sol: PrimalDualSolution, w: np.ndarray,
                 tol: float = 1e-9, backend: str = "highs") -> tuple[float, float]:
    """Min and max of ``w'x`` over the optimal primal face."""
    row = sp.csr_matrix(lp.c.reshape(1, -1))
    A_ub = sp.vstack([lp.A_ub, row]).tocsr()
    b_ub = np.concatenate([lp.b_ub, [sol.objective - lp.const + tol]])
    face = lp.copy_with(c=np.asarray(w, dtype=float), A_ub=A_ub, b_ub=b_ub,
                        ub_names=lp.ub_names + ["optimal"], const=0.0)
    lo = solve(face, backend)
    hi = solve(face.copy_with(c=-face.c), backend)
    return lo.objective, -hi.objective


def solution_from_dict(lp: LPInstance, doc: dict) -> PrimalDualSolution:
    """Rebuild a solution written by :meth:`PrimalDualSolution.to_dict` against ``lp``."""
    status = Status(doc["status"])
    if status is not Status.OPTIMAL:
        return PrimalDualSolution(status, backend=doc.get("backend", ""))
    primal, dual = doc["primal"], doc["dual"]
    if not isinstance(primal, dict) or not isinstance(dual, dict):
        raise ValueError("solution file must map variable and row names to values")
    try:
        x = np.array([float(primal[n]) for n in lp.var_names])
        y_eq = np.array([float(dual[n]) for n in lp.eq_names])
        y_ub = np.array([float(dual[n]) for n in lp.ub_names])
    except KeyError as exc:
        raise ValueError(f"solution file lacks entry {exc.args[0]!r}") from None
    return PrimalDualSolution(status, lp.objective(x), x, y_eq, y_ub,
                              reduced_costs(lp, y_eq, y_ub), doc.get("backend", "replay"),
                              int(doc.get("iterations", 0)), doc.get("basis"))


def dump_basis(path, lp: LPInstance, sol: PrimalDualSolution) -> None:
    with open(path, "w") as fh:
        json.dump(sol.to_dict(lp), fh, indent=2, sort_keys=True)


def solve_subproblem_flows(scenario, t: int, prices, backend: str = "auto"):
    """Optimal transmission profit at time ``t`` and the maximizing edge flows.

    Returns ``(profit, flows)`` with flows ordered ``l+, l-`` per line.
    """
    from .builder import build_flow_subproblem

    lp = build_flow_subproblem(scenario, t, prices)
    if lp.n_vars == 0:
        return 0.0, np.zeros(0)
    sol = solve(lp, backend)
    if not sol.optimal:
        raise SolverError(f"flow subproblem at time {t} is {sol.status.value}")
    return -sol.objective, sol.x[lp.__dict__["flow_columns"]]
