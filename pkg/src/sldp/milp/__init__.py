"""Desk-scale LP/MILP kernel.

``backend="native"`` runs the in-house bounded simplex and branch-and-bound;
``backend="highs"`` routes the same problem through SciPy's HiGHS bindings.
Both honour the same result contracts.
"""

from __future__ import annotations

from sldp.milp.branch import DEFAULT_NODE_LIMIT, branch_and_bound
from sldp.milp.enumerate import DEFAULT_CAP, enumerate_milp
from sldp.milp.problem import (
    FEAS_TOL,
    INT_TOL,
    LpSolution,
    MilpProblem,
    MilpSolution,
    Status,
)
from sldp.milp.simplex import simplex

BACKENDS = ("native", "highs")


def solve_lp(p: MilpProblem, *, backend: str = "native", feas_tol: float = FEAS_TOL) -> LpSolution:
    """Solve the LP relaxation of ``p`` (integrality flags are ignored)."""
    if backend == "native":
        return simplex(p, feas_tol)
    if backend == "highs":
        from sldp.milp.highs import highs_lp
        return highs_lp(p, feas_tol)
    raise ValueError(f"unknown backend {backend!r}")


def solve_milp(p: MilpProblem, *, backend: str = "native", feas_tol: float = FEAS_TOL,
               int_tol: float = INT_TOL, node_limit: int = DEFAULT_NODE_LIMIT) -> MilpSolution:
    if backend == "native":
        if not p.integer.any():
            lp = simplex(p, feas_tol)
            return MilpSolution(lp.status, lp.x, lp.objective, lp.objective, 1)
        return branch_and_bound(p, feas_tol, int_tol, node_limit)
    if backend == "highs":
        from sldp.milp.highs import highs_milp
        return highs_milp(p, feas_tol, node_limit)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "BACKENDS", "DEFAULT_CAP", "FEAS_TOL", "INT_TOL", "LpSolution", "MilpProblem",
    "MilpSolution", "Status", "enumerate_milp", "solve_lp", "solve_milp",
]
