"""Best-first branch-and-bound over the native simplex."""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from sldp.errors import NodeLimitExceeded
from sldp.milp.problem import FEAS_TOL, INT_TOL, MilpProblem, MilpSolution, Status
from sldp.milp.simplex import simplex

DEFAULT_NODE_LIMIT = 200_000


def _most_fractional(x, int_idx, int_tol):
    frac = x[int_idx] - np.floor(x[int_idx])
    dist = np.minimum(frac, 1.0 - frac)
    if dist.size == 0 or dist.max() <= int_tol:
        return None
    # argmax returns the first maximum, i.e. the lowest variable index
    return int(int_idx[int(np.argmax(dist))])


def branch_and_bound(p: MilpProblem, feas_tol=FEAS_TOL, int_tol=INT_TOL,
                     node_limit=DEFAULT_NODE_LIMIT) -> MilpSolution:
    int_idx = np.flatnonzero(p.integer)
    root = simplex(p.relaxed(), feas_tol)
    if root.status is Status.INFEASIBLE:
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, 1)
    if root.status is Status.UNBOUNDED:
        return MilpSolution(Status.UNBOUNDED, None, -np.inf, -np.inf, 1)

    counter = itertools.count()
    incumbent_x = None
    incumbent = np.inf
    heap = [(root.objective, next(counter), p.lb.copy(), p.ub.copy(), root)]
    nodes = 0
    relaxed = p.relaxed()

    while heap:
        key, _, lb, ub, sol = heapq.heappop(heap)
        if key >= incumbent - 1e-9 * max(1.0, abs(incumbent)):
            continue
        if sol is None:
            nodes += 1
            if nodes > node_limit:
                raise NodeLimitExceeded(f"branch-and-bound exceeded {node_limit} nodes")
            relaxed.lb, relaxed.ub = lb, ub
            sol = simplex(relaxed, feas_tol)
            if sol.status is not Status.OPTIMAL:
                continue
            if sol.objective >= incumbent - 1e-9 * max(1.0, abs(incumbent)):
                continue
        else:
            nodes += 1
        j = _most_fractional(sol.x, int_idx, int_tol)
        if j is None:
            x = sol.x.copy()
            x[int_idx] = np.round(x[int_idx])
            incumbent_x = x
            incumbent = sol.objective
            continue
        v = sol.x[j]
        down_ub = ub.copy()
        down_ub[j] = np.floor(v)
        up_lb = lb.copy()
        up_lb[j] = np.ceil(v)
        heapq.heappush(heap, (sol.objective, next(counter), lb, down_ub, None))
        heapq.heappush(heap, (sol.objective, next(counter), up_lb, ub, None))

    if incumbent_x is None:
        return MilpSolution(Status.INFEASIBLE, None, np.inf, np.inf, nodes)
    return MilpSolution(Status.OPTIMAL, incumbent_x, float(incumbent), float(incumbent), nodes)
