"""Adapter onto SciPy's HiGHS bindings, same contracts as the native solvers."""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from sldp.errors import NodeLimitExceeded, SldpError
from sldp.milp.problem import FEAS_TOL, LpSolution, MilpProblem, MilpSolution, Status

HIGHS_PRESOLVE = False


def _split_rows(p: MilpProblem):
    senses = np.array(p.senses)
    le, ge, eq = senses == "<=", senses == ">=", senses == "="
    A_ub = np.vstack([p.A[le], -p.A[ge]])
    b_ub = np.concatenate([p.b[le], -p.b[ge]])
    return le, ge, eq, A_ub, b_ub


def highs_lp(p: MilpProblem, feas_tol: float = FEAS_TOL) -> LpSolution:
    le, ge, eq, A_ub, b_ub = _split_rows(p)
    bounds = list(zip(np.where(np.isfinite(p.lb), p.lb, None), np.where(np.isfinite(p.ub), p.ub, None)))
    res = linprog(
        p.c,
        A_ub=A_ub if A_ub.size else None,
        b_ub=b_ub if A_ub.size else None,
        A_eq=p.A[eq] if eq.any() else None,
        b_eq=p.b[eq] if eq.any() else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": feas_tol, "dual_feasibility_tolerance": feas_tol},
    )
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, None, np.nan, None, res.nit)
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, None, -np.inf, None, res.nit)
    if res.status != 0:
        raise SldpError(f"HiGHS LP failed: {res.message}")
    y = np.zeros(p.num_rows)
    n_le = int(le.sum())
    if A_ub.size:
        marg = res.ineqlin.marginals
        y[le] = marg[:n_le]
        y[ge] = -marg[n_le:]
    if eq.any():
        y[eq] = res.eqlin.marginals
    return LpSolution(Status.OPTIMAL, res.x, float(res.fun), y, res.nit)


def highs_milp(p: MilpProblem, feas_tol: float = FEAS_TOL, node_limit: int | None = None,
               mip_rel_gap: float = 1e-9) -> MilpSolution:
    lo = np.full(p.num_rows, -np.inf)
    hi = np.full(p.num_rows, np.inf)
    for i, s in enumerate(p.senses):
        if s in ("<=", "="):
            hi[i] = p.b[i]
        if s in (">=", "="):
            lo[i] = p.b[i]
    constraints = [LinearConstraint(p.A, lo, hi)] if p.num_rows else []
    # HiGHS presolve (as shipped with SciPy 1.15) can return a suboptimal
    # point as optimal on small mixed problems, so it stays off
    options = {"mip_rel_gap": mip_rel_gap, "presolve": HIGHS_PRESOLVE}
    if node_limit is not None:
        options["node_limit"] = node_limit
    res = milp(p.c, constraints=constraints, integrality=p.integer.astype(int),
               bounds=Bounds(p.lb, p.ub), options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        if np.any(p.c != 0) and _has_unbounded_direction(p):
            # HiGHS can report some unbounded MILPs as infeasible; confirm
            # feasibility without the objective and defer to the native solver
            probe = p.copy()
            probe.c = np.zeros(p.num_vars)
            if highs_milp(probe, feas_tol, node_limit, mip_rel_gap).status is Status.OPTIMAL:
                from sldp.milp.branch import branch_and_bound
                return branch_and_bound(p, feas_tol)
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, nodes)
    if res.status == 3:
        return MilpSolution(Status.UNBOUNDED, None, -np.inf, -np.inf, nodes)
    if res.status == 4 and "unbounded or infeasible" in res.message:
        probe = p.copy()
        probe.c = np.zeros(p.num_vars)
        found = highs_milp(probe, feas_tol, node_limit, mip_rel_gap)
        status = Status.UNBOUNDED if found.status is Status.OPTIMAL else Status.INFEASIBLE
        return MilpSolution(status, None, -np.inf if status is Status.UNBOUNDED else np.inf,
                            -np.inf if status is Status.UNBOUNDED else np.inf, nodes)
    if res.status == 1 and node_limit is not None:
        raise NodeLimitExceeded(f"HiGHS stopped at the node limit {node_limit}")
    if res.status != 0:
        raise SldpError(f"HiGHS MILP failed: {res.message}")
    x = np.array(res.x, dtype=float)
    x[p.integer] = np.round(x[p.integer])
    bound = getattr(res, "mip_dual_bound", None)
    bound = float(res.fun) if bound is None else float(bound)
    return MilpSolution(Status.OPTIMAL, x, float(res.fun), min(bound, float(res.fun)), nodes)


def _has_unbounded_direction(p: MilpProblem) -> bool:
    return bool(np.any(~np.isfinite(p.lb)) or np.any(~np.isfinite(p.ub)))
