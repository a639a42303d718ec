"""Independent reference computations used by the tests.

Nothing here calls into the package's solver: the LP oracle enumerates
vertices by brute force and the small-market oracle reasons from first
principles.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.linalg import null_space


def _dense(m):
    return m.toarray() if hasattr(m, "toarray") else np.asarray(m, dtype=float)


def vertex_enumeration(c, A_eq, b_eq, A_ub, b_ub, lb, ub, const=0.0, tol=1e-9,
                       chunk=200_000):
    """Minimum of ``c'x`` over a bounded polyhedron by visiting every vertex.

    Returns ``(status, value)`` with status ``"optimal"`` or ``"infeasible"``.
    The polyhedron must be pointed (have at least one vertex) when feasible.
    """
    c = np.asarray(c, float)
    lb, ub = np.asarray(lb, float), np.asarray(ub, float)
    A_eq, A_ub = _dense(A_eq), _dense(A_ub)
    b_eq, b_ub = np.asarray(b_eq, float), np.asarray(b_ub, float)
    n = c.size
    A_eq = A_eq.reshape(-1, n)
    A_ub = A_ub.reshape(-1, n)

    # substitute fixed variables
    fixed = np.isfinite(lb) & (lb == ub)
    x_fix = np.where(fixed, lb, 0.0)
    free = ~fixed
    const = const + float(c @ x_fix)
    b_eq = b_eq - A_eq @ x_fix
    b_ub = b_ub - A_ub @ x_fix
    c, A_eq, A_ub, lb, ub = c[free], A_eq[:, free], A_ub[:, free], lb[free], ub[free]
    n = c.size

    # inequality system G x <= h, including the finite bounds
    G = [A_ub]
    h = [b_ub]
    for j in range(n):
        e = np.zeros((1, n))
        e[0, j] = 1.0
        if math.isfinite(ub[j]):
            G.append(e)
            h.append([ub[j]])
        if math.isfinite(lb[j]):
            G.append(-e)
            h.append([-lb[j]])
    G = np.vstack(G) if G else np.zeros((0, n))
    h = np.concatenate([np.asarray(v, float) for v in h]) if h else np.zeros(0)

    # parametrize the equality set: x = x0 + N z
    if A_eq.shape[0]:
        x0, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
        if np.max(np.abs(A_eq @ x0 - b_eq), initial=0.0) > 1e-9:
            return "infeasible", math.nan
        N = null_space(A_eq)
    else:
        x0, N = np.zeros(n), np.eye(n)
    k = N.shape[1]
    Gz, hz = G @ N, h - G @ x0
    cz = c @ N
    base = const + float(c @ x0)
    if k == 0:
        ok = np.all(Gz.shape[0] == 0 or hz >= -tol)
        return ("optimal", base) if ok else ("infeasible", math.nan)

    best = math.inf
    combos = itertools.combinations(range(Gz.shape[0]), k)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            break
        idx = block.reshape(-1, k)
        M = Gz[idx]                       # (m, k, k)
        rhs = hz[idx]                     # (m, k)
        det = np.linalg.det(M)
        good = np.abs(det) > 1e-10
        if not good.any():
            continue
        z = np.linalg.solve(M[good], rhs[good][..., None])[..., 0]
        slack = hz[None, :] - z @ Gz.T
        scale = 1.0 + np.abs(hz)[None, :]
        feasible = np.all(slack >= -tol * scale, axis=1)
        if feasible.any():
            best = min(best, float(np.min(z[feasible] @ cz)))
    if best == math.inf:
        return "infeasible", math.nan
    return "optimal", base + best


def lp_vertex_optimum(lp):
    """Vertex-enumeration optimum of a package ``LPInstance`` (data only)."""
    return vertex_enumeration(lp.c, lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.lb, lp.ub,
                              lp.const)


def single_node_clearing(supply, demand):
    """Merit-order clearing of one node, one period, no network.

    ``supply`` and ``demand`` are lists of ``(price, quantity)``. Returns the
    optimal social surplus by walking the two sorted curves.
    """
    offers = sorted(supply)
    bids = sorted(demand, reverse=True)
    surplus, i, j = 0.0, 0, 0
    left_s = [q for _, q in offers]
    left_d = [q for _, q in bids]
    while i < len(offers) and j < len(bids) and bids[j][0] > offers[i][0]:
        q = min(left_s[i], left_d[j])
        surplus += (bids[j][0] - offers[i][0]) * q
        left_s[i] -= q
        left_d[j] -= q
        if left_s[i] == 0:
            i += 1
        if left_d[j] == 0:
            j += 1
    return surplus
