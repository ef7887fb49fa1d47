"""Brute-force MILP oracle: walk the whole integer lattice.

Kept deliberately naive. It is the reference the branch-and-bound code is
tested against, so it shares nothing with it beyond the LP solver used when
continuous variables are left free after fixing the integers.
"""

from __future__ import annotations

import numpy as np

from sldp.errors import EnumerationCapExceeded
from sldp.milp.problem import FEAS_TOL, MilpProblem, MilpSolution, Status
from sldp.milp.simplex import simplex

DEFAULT_CAP = 10**6
_CHUNK = 1 << 15


def _lattice_size(lo, hi):
    size = 1
    for a, b in zip(lo, hi):
        size *= int(b - a + 1)
    return size


def _points(lo, hi, start, stop):
    """Integer points ``start..stop-1`` of the box, mixed-radix ordered."""
    radix = (hi - lo + 1).astype(np.int64)
    idx = np.arange(start, stop, dtype=np.int64)
    pts = np.empty((idx.size, radix.size))
    for k in range(radix.size - 1, -1, -1):
        pts[:, k] = lo[k] + idx % radix[k]
        idx //= radix[k]
    return pts


def enumerate_milp(p: MilpProblem, cap: int = DEFAULT_CAP, feas_tol: float = FEAS_TOL) -> MilpSolution:
    int_idx = np.flatnonzero(p.integer)
    lo = np.ceil(p.lb[int_idx] - 1e-9)
    hi = np.floor(p.ub[int_idx] + 1e-9)
    if np.any(hi < lo):
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, 0)
    total = _lattice_size(lo, hi)
    if total > cap:
        raise EnumerationCapExceeded(f"{total} integer points exceed the cap of {cap}")

    cont_idx = np.flatnonzero(~p.integer)
    fixed_cont = np.all(p.lb[cont_idx] == p.ub[cont_idx])
    if int_idx.size == 0:
        lp = simplex(p, feas_tol)
        return MilpSolution(lp.status, lp.x, lp.objective, lp.objective, 1)
    if fixed_cont:
        return _enumerate_pure(p, int_idx, cont_idx, lo, hi, total, feas_tol)

    best_x, best = None, np.inf
    unbounded = False
    sub = p.relaxed()
    for start in range(0, total, _CHUNK):
        for pt in _points(lo, hi, start, min(start + _CHUNK, total)):
            sub.lb = p.lb.copy()
            sub.ub = p.ub.copy()
            sub.lb[int_idx] = pt
            sub.ub[int_idx] = pt
            lp = simplex(sub, feas_tol)
            if lp.status is Status.UNBOUNDED:
                unbounded = True
            elif lp.status is Status.OPTIMAL and lp.objective < best - 1e-12:
                best, best_x = lp.objective, lp.x
    if unbounded:
        return MilpSolution(Status.UNBOUNDED, None, -np.inf, -np.inf, total)
    if best_x is None:
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, total)
    return MilpSolution(Status.OPTIMAL, best_x, float(best), float(best), total)


def _enumerate_pure(p, int_idx, cont_idx, lo, hi, total, feas_tol):
    """Every continuous variable is fixed, so each lattice point is checked directly."""
    fixed = np.zeros(p.num_vars)
    fixed[cont_idx] = p.lb[cont_idx]
    base_rows = p.A[:, cont_idx] @ fixed[cont_idx]
    base_obj = float(p.c[cont_idx] @ fixed[cont_idx])
    Ai = p.A[:, int_idx]
    ci = p.c[int_idx]
    senses = np.array(p.senses)
    tol = feas_tol * (1.0 + np.abs(p.b))
    le, ge, eq = senses == "<=", senses == ">=", senses == "="
    best, best_pt = np.inf, None
    for start in range(0, total, _CHUNK):
        pts = _points(lo, hi, start, min(start + _CHUNK, total))
        ax = pts @ Ai.T + base_rows
        ok = np.ones(pts.shape[0], dtype=bool)
        if le.any():
            ok &= np.all(ax[:, le] <= p.b[le] + tol[le], axis=1)
        if ge.any():
            ok &= np.all(ax[:, ge] >= p.b[ge] - tol[ge], axis=1)
        if eq.any():
            ok &= np.all(np.abs(ax[:, eq] - p.b[eq]) <= tol[eq], axis=1)
        if not ok.any():
            continue
        obj = pts[ok] @ ci + base_obj
        k = int(np.argmin(obj))
        if obj[k] < best - 1e-12:
            best, best_pt = float(obj[k]), pts[ok][k]
    if best_pt is None:
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, total)
    x = fixed.copy()
    x[int_idx] = best_pt
    return MilpSolution(Status.OPTIMAL, x, best, best, total)
