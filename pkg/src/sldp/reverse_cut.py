"""Deterministic reverse cut method: minimize ``f(x) + g(x)`` with ``g`` a black box.

``f`` and the feasible set come as a MILP; ``g`` is only evaluated. Each
iteration solves ``min f + g_k`` where ``g_k`` is the max of the floor and the
reverse-norm cuts ``g(x_j) - rho * ||x - x_j||_1`` collected so far, and stops
once ``g(x_k) - g_k(x_k) <= eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sldp.errors import MalformedProblem, OracleFailure
from sldp.milp import MilpProblem
from sldp.pool import Cut, CutPool
from sldp.stage import StageTemplate, solve_stage


@dataclass
class ReverseCutResult:
    x: np.ndarray
    value: float
    nu: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    converged: bool = False
    pool: CutPool | None = None

    @property
    def iterations(self) -> int:
        return len(self.nu)


def reverse_cut_minimize(problem: MilpProblem, x_idx, g_oracle, rho: float, eps: float, *,
                         floor: float, max_iter: int = 10_000,
                         backend: str = "highs") -> ReverseCutResult:
    """Run the reverse cut method.

    ``x_idx`` picks the variables ``g`` depends on; their bounds must be
    finite. ``floor`` must be a lower bound of ``g``. The returned ``nu``
    sequence is nondecreasing and ``value = f(x) + g(x) <= nu[-1] + eps``
    when ``converged``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    x_idx = np.asarray(x_idx, dtype=int).reshape(-1)
    lo, hi = problem.lb[x_idx], problem.ub[x_idx]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise MalformedProblem("the variables seen by g need finite bounds")
    template = StageTemplate(problem.copy(), x_idx, [], lo, hi, [], [], name="reverse-cut")
    pool = CutPool(floor, lo, hi, key="g", drop_dominated=False)
    result = ReverseCutResult(x=np.full(x_idx.size, np.nan), value=np.inf, pool=pool)
    for k in range(max_iter):
        sol = solve_stage(template, None, [], pool, backend=backend)
        x = sol.state
        try:
            gx = float(g_oracle(x.copy()))
        except Exception as exc:  # the oracle is user code
            raise OracleFailure(f"g failed at {x}: {exc}") from exc
        if not np.isfinite(gx):
            raise OracleFailure(f"g returned {gx} at {x}")
        if gx < floor - 1e-9 * max(1.0, abs(floor)):
            raise OracleFailure(f"g({x}) = {gx} is below the declared floor {floor}")
        gap = gx - sol.alpha
        result.nu.append(sol.objective)
        result.gaps.append(gap)
        result.iterates.append(x)
        value = sol.immediate_cost + gx
        if value < result.value:
            result.x, result.value = x, value
        if gap <= eps:
            result.x, result.value = x, value
            result.converged = True
            return result
        pool.add(Cut(x, gx, np.zeros(x.size), rho, "rn", origin="g", iteration=k))
    return result
