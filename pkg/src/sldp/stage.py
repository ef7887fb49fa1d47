"""Per-node stage problems: assembly with copy rows, epigraph and cut gadgets.

A stage problem is a template MILP over its own variables. Assembly adds

* copy rows ``z_j = incoming_j`` tying the copy variables to the parent state,
* one epigraph variable ``alpha >= floor`` for the cost-to-go approximation,
* per cut, either a plain row (``rho = 0``) or the L1 big-M gadget

      u+_j - u-_j = x_j - c_j,  0 <= u+_j <= (hi_j - c_j) w_j,  0 <= u-_j <= (c_j - lo_j) (1 - w_j)

  with ``w_j`` binary, so that ``sum_j u+_j + u-_j`` is exactly
  ``||x - c||_1`` whenever the binaries are integral. A center on a face of
  the state box fixes its ``w_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sldp.errors import MalformedProblem, SldpError, StageInfeasible
from sldp.milp import MilpProblem, Status, solve_lp, solve_milp
from sldp.pool import CutPool, evaluate_pool

CHECK_TOL = 1e-6
POLISH_TOL = 1e-7
DUAL_SOURCES = ("relaxation", "fixed")


@dataclass
class Scenario:
    """Scenario payload: additive changes to a template's rhs and objective."""

    rhs: np.ndarray | None = None
    obj: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        if self.rhs is not None:
            self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if self.obj is not None:
            self.obj = np.asarray(self.obj, dtype=float).reshape(-1)

    def to_dict(self) -> dict:
        d = {"name": self.name}
        if self.rhs is not None:
            d["rhs"] = self.rhs.tolist()
        if self.obj is not None:
            d["obj"] = self.obj.tolist()
        return d


@dataclass
class StageTemplate:
    """Stage MILP skeleton.

    ``state_idx`` are the outgoing state variables, boxed by
    ``[state_lo, state_hi]``; ``copy_idx`` are the incoming copies, whose box
    ``[copy_lo, copy_hi]`` is the parent's state box. ``lipschitz`` is an
    optional bound on the immediate cost's Lipschitz constant, kept as
    metadata.
    """

    problem: MilpProblem
    state_idx: np.ndarray
    copy_idx: np.ndarray
    state_lo: np.ndarray
    state_hi: np.ndarray
    copy_lo: np.ndarray
    copy_hi: np.ndarray
    lipschitz: float | None = None
    name: str = ""

    def __post_init__(self):
        self.state_idx = np.asarray(self.state_idx, dtype=int).reshape(-1)
        self.copy_idx = np.asarray(self.copy_idx, dtype=int).reshape(-1)
        for attr in ("state_lo", "state_hi", "copy_lo", "copy_hi"):
            setattr(self, attr, np.asarray(getattr(self, attr), dtype=float).reshape(-1))
        n = self.problem.num_vars
        for idx in (self.state_idx, self.copy_idx):
            if np.any(idx < 0) or np.any(idx >= n):
                raise MalformedProblem("state/copy index out of range")
        if self.state_lo.size != self.state_idx.size or self.state_hi.size != self.state_idx.size:
            raise MalformedProblem("state box does not match the number of state variables")
        if self.copy_lo.size != self.copy_idx.size or self.copy_hi.size != self.copy_idx.size:
            raise MalformedProblem("copy box does not match the number of copy variables")
        if not (np.all(np.isfinite(self.state_lo)) and np.all(np.isfinite(self.state_hi))):
            raise MalformedProblem("state box must be finite")
        if np.any(self.state_lo > self.state_hi) or np.any(self.copy_lo > self.copy_hi):
            raise MalformedProblem("box with lower > upper")
        if np.intersect1d(self.state_idx, self.copy_idx).size:
            raise MalformedProblem("a variable cannot be both state and copy")
        if np.any(self.problem.integer[self.copy_idx]):
            raise MalformedProblem("copy variables must be continuous")
        # the state box is enforced through the variable bounds
        p = self.problem
        p.lb[self.state_idx] = np.maximum(p.lb[self.state_idx], self.state_lo)
        p.ub[self.state_idx] = np.minimum(p.ub[self.state_idx], self.state_hi)

    @property
    def state_dim(self) -> int:
        return self.state_idx.size

    @property
    def copy_dim(self) -> int:
        return self.copy_idx.size


@dataclass
class AssembledStage:
    problem: MilpProblem
    n_base: int
    copy_rows: np.ndarray
    alpha: int | None
    gadgets: list = field(default_factory=list)  # per cut: (u+, u-, w) index arrays or None
    cuts: list = field(default_factory=list)

    def gadget_norms(self, x: np.ndarray) -> np.ndarray:
        """``sum_j u+_j + u-_j`` per nonlinear cut at primal point ``x``."""
        return np.array([x[g[0]].sum() + x[g[1]].sum() for g in self.gadgets if g is not None])


@dataclass
class StageSolution:
    x: np.ndarray
    state: np.ndarray
    objective: float
    immediate_cost: float
    alpha: float
    duals: np.ndarray | None
    assembled: AssembledStage
    node_count: int = 0


def _scenario_data(template: StageTemplate, scenario):
    p = template.problem
    c = p.c.copy()
    b = p.b.copy()
    if scenario is not None:
        if scenario.rhs is not None:
            if scenario.rhs.size != b.size:
                raise MalformedProblem(f"scenario rhs has {scenario.rhs.size} entries, template has {b.size} rows")
            b = b + scenario.rhs
        if scenario.obj is not None:
            if scenario.obj.size != c.size:
                raise MalformedProblem(f"scenario objective has {scenario.obj.size} entries, expected {c.size}")
            c = c + scenario.obj
    return c, b


def assemble_stage(template: StageTemplate, scenario, incoming, pool: CutPool | None,
                   floor: float | None = None, copy_rows: bool = True) -> AssembledStage:
    """Build the stage MILP at ``incoming``.

    ``pool=None`` marks a leaf: no epigraph variable is added. With
    ``copy_rows=False`` the copy rows are omitted and the copies are boxed
    by ``[copy_lo, copy_hi]`` instead (the copy relaxation).
    """
    p = template.problem
    n0, m0 = p.num_vars, p.num_rows
    c, b = _scenario_data(template, scenario)
    incoming = np.asarray(incoming, dtype=float).reshape(-1)
    dc = template.copy_dim
    if copy_rows and incoming.size != dc:
        raise MalformedProblem(f"incoming state has {incoming.size} entries, stage expects {dc}")

    d = template.state_dim
    cuts = [] if pool is None else list(pool.cuts)
    if pool is not None:
        if pool.dim != d:
            raise MalformedProblem(f"pool dimension {pool.dim} != state dimension {d}")
        for cut in cuts:
            pool.check_center(cut.center)
    nonlinear = [k for k, cut in enumerate(cuts) if cut.rho > 0]
    n_alpha = 0 if pool is None else 1
    n = n0 + n_alpha + 3 * d * len(nonlinear)
    n_copy_rows = dc if copy_rows else 0
    m = m0 + n_copy_rows + len(cuts) + 3 * d * len(nonlinear)

    A = np.zeros((m, n))
    rhs = np.zeros(m)
    senses = list(p.senses)
    A[:m0, :n0] = p.A
    rhs[:m0] = b
    lb = np.zeros(n)
    ub = np.zeros(n)
    integer = np.zeros(n, dtype=bool)
    cost = np.zeros(n)
    lb[:n0], ub[:n0], integer[:n0], cost[:n0] = p.lb, p.ub, p.integer, c

    if copy_rows:
        # copies are pinned by their rows only, so the row duals carry the
        # sensitivity instead of a degenerate bound
        lb[template.copy_idx] = -np.inf
        ub[template.copy_idx] = np.inf
    elif dc:
        lb[template.copy_idx] = np.maximum(lb[template.copy_idx], template.copy_lo)
        ub[template.copy_idx] = np.minimum(ub[template.copy_idx], template.copy_hi)

    copy_row_idx = np.arange(m0, m0 + n_copy_rows)
    for j in range(n_copy_rows):
        A[m0 + j, template.copy_idx[j]] = 1.0
        rhs[m0 + j] = incoming[j]
    senses += ["="] * n_copy_rows

    alpha = None
    gadgets = []
    if pool is not None:
        alpha = n0
        lb[alpha] = pool.floor if floor is None else float(floor)
        ub[alpha] = np.inf
        cost[alpha] = 1.0
        lo_box, hi_box = template.state_lo, template.state_hi
        row = m0 + n_copy_rows
        g_row = row + len(cuts)
        col = n0 + 1
        sx = template.state_idx
        for cut in cuts:
            # alpha - lam @ x + rho * sum(u+ + u-) >= v - lam @ center
            A[row, alpha] = 1.0
            A[row, sx] = -cut.lam
            rhs[row] = cut.v - cut.lam @ cut.center
            if cut.rho > 0:
                up = np.arange(col, col + d)
                um = up + d
                w = um + d
                col += 3 * d
                A[row, up] = cut.rho
                A[row, um] = cut.rho
                # per-side big-M: x - c lies in [lo - c, hi - c]
                m_up = np.maximum(hi_box - cut.center, 0.0)
                m_um = np.maximum(cut.center - lo_box, 0.0)
                lb[up], ub[up] = 0.0, m_up
                lb[um], ub[um] = 0.0, m_um
                # a center on a face of the box leaves only one side open
                lb[w] = np.where(m_um == 0.0, 1.0, 0.0)
                ub[w] = np.where((m_up == 0.0) & (m_um > 0.0), 0.0, 1.0)
                integer[w] = True
                for j in range(d):
                    r = g_row + 3 * j
                    A[r, up[j]], A[r, um[j]], A[r, sx[j]] = 1.0, -1.0, -1.0
                    rhs[r] = -cut.center[j]
                    A[r + 1, up[j]], A[r + 1, w[j]] = 1.0, -m_up[j]
                    A[r + 2, um[j]], A[r + 2, w[j]] = 1.0, m_um[j]
                    rhs[r + 2] = m_um[j]
                g_row += 3 * d
                gadgets.append((up, um, w))
            else:
                gadgets.append(None)
            row += 1
        senses += _cut_senses(cuts, d)

    problem = MilpProblem(cost, A, senses, rhs, lb, ub, integer)
    return AssembledStage(problem, n0, copy_row_idx, alpha, gadgets, cuts)


def _cut_senses(cuts, d):
    head = [">="] * len(cuts)
    tail = []
    for cut in cuts:
        if cut.rho > 0:
            tail += ["=", "<=", "<="] * d
    return head + tail


def copy_relaxation(template: StageTemplate, scenario, pool: CutPool | None, center,
                    lam, rho: float = 0.0) -> tuple[MilpProblem, float]:
    """Lagrangian relaxation of the copy rows at ``center``.

    Returns ``(problem, constant)`` such that ``problem``'s optimal value plus
    ``constant`` is ``min f + Qbar + lam @ (center - z) + rho * ||z - center||_1``
    over the stage feasible set with ``z`` in the copy box. The L1 term is
    split into nonnegative parts, no binaries needed.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), center.shape)
    st = assemble_stage(template, scenario, center, pool, copy_rows=False)
    p = st.problem
    zi = template.copy_idx
    dc = zi.size
    c = p.c.copy()
    c[zi] -= lam
    constant = float(lam @ center)
    if rho <= 0 or dc == 0:
        return MilpProblem(c, p.A, p.senses, p.b, p.lb, p.ub, p.integer), constant
    n, m = p.num_vars, p.num_rows
    A = np.zeros((m + dc, n + 2 * dc))
    A[:m, :n] = p.A
    for j in range(dc):
        # z_j - s+_j + s-_j = center_j
        A[m + j, zi[j]] = 1.0
        A[m + j, n + j] = -1.0
        A[m + j, n + dc + j] = 1.0
    b = np.concatenate([p.b, center])
    width = template.copy_hi - template.copy_lo
    lb = np.concatenate([p.lb, np.zeros(2 * dc)])
    ub = np.concatenate([p.ub, width, width])
    cost = np.concatenate([c, np.full(2 * dc, float(rho))])
    integer = np.concatenate([p.integer, np.zeros(2 * dc, dtype=bool)])
    return MilpProblem(cost, A, list(p.senses) + ["="] * dc, b, lb, ub, integer), constant


def _fix_integers(p: MilpProblem, x: np.ndarray) -> MilpProblem:
    q = p.relaxed()
    ints = p.integer
    q.lb[ints] = np.round(x[ints])
    q.ub[ints] = np.round(x[ints])
    return q


def _needs_polish(st: AssembledStage, pool, template, x) -> bool:
    if st.alpha is None:
        return False
    xs = x[template.state_idx]
    for cut, g in zip(st.cuts, st.gadgets):
        if g is None:
            continue
        exact = np.abs(xs - cut.center).sum()
        if abs(x[g[0]].sum() + x[g[1]].sum() - exact) > POLISH_TOL:
            return True
    return abs(x[st.alpha] - evaluate_pool(pool, xs)) > POLISH_TOL * max(1.0, abs(x[st.alpha]))


def _repair(st: AssembledStage, pool, template, x) -> np.ndarray:
    """Rebuild gadget parts and ``alpha`` exactly from the state in ``x``.

    Within the solver's feasibility tolerance a state can sit on the wrong
    side of a cut center, so the gadget misreads the distance by that
    tolerance times ``rho``. Recomputing from the state gives a point that
    satisfies every gadget row exactly.
    """
    x = x.copy()
    xs = x[template.state_idx]
    for cut, g in zip(st.cuts, st.gadgets):
        if g is None:
            continue
        up, um, w = g
        diff = xs - cut.center
        x[up] = np.maximum(diff, 0.0)
        x[um] = np.maximum(-diff, 0.0)
        p = st.problem
        x[w] = np.clip(np.where(diff > 0, 1.0, np.where(diff < 0, 0.0, x[w])), p.lb[w], p.ub[w])
    x[st.alpha] = evaluate_pool(pool, xs)
    return x


def solve_stage(template: StageTemplate, scenario, incoming, pool: CutPool | None, *,
                backend: str = "highs", lp_backend: str = "native", duals: str | None = None,
                node=None, floor: float | None = None) -> StageSolution:
    """Solve the stage MILP at ``incoming`` and optionally extract copy-row duals.

    ``duals`` is ``None`` (skip), ``"relaxation"`` (LP relaxation of the
    assembled problem) or ``"fixed"`` (LP with the integers fixed at the MILP
    optimum). Duals are ``d objective / d incoming``.
    """
    st = assemble_stage(template, scenario, incoming, pool, floor=floor)
    p = st.problem
    sol = solve_milp(p, backend=backend)
    if sol.status is Status.INFEASIBLE:
        raise StageInfeasible(node, f"stage {template.name or '?'} infeasible at incoming state {incoming}")
    if sol.status is not Status.OPTIMAL:
        raise SldpError(f"stage problem at node {node!r} is {sol.status.value}")
    x = sol.x
    fixed = None
    if _needs_polish(st, pool, template, x):
        fixed = solve_lp(_fix_integers(p, x), backend=lp_backend)
        if fixed.status is not Status.OPTIMAL:
            raise SldpError(f"polishing LP at node {node!r} is {fixed.status.value}")
        x = fixed.x
        if _needs_polish(st, pool, template, x):
            x = _repair(st, pool, template, x)
    objective = float(p.c @ x)

    lam = None
    if duals == "relaxation":
        lp = solve_lp(p.relaxed(), backend=lp_backend)
        if lp.status is not Status.OPTIMAL:
            raise SldpError(f"LP relaxation at node {node!r} is {lp.status.value}")
        lam = lp.duals[st.copy_rows].copy()
    elif duals == "fixed":
        if fixed is None:
            fixed = solve_lp(_fix_integers(p, x), backend=lp_backend)
        if fixed.status is not Status.OPTIMAL:
            raise SldpError(f"fixed-integer LP at node {node!r} is {fixed.status.value}")
        lam = fixed.duals[st.copy_rows].copy()
    elif duals is not None:
        raise ValueError(f"unknown dual source {duals!r}; expected one of {DUAL_SOURCES}")

    alpha = 0.0 if st.alpha is None else float(x[st.alpha])
    state = x[template.state_idx].copy()
    return StageSolution(x, state, objective, objective - alpha, alpha, lam, st, sol.node_count)


def check_stage_solution(template: StageTemplate, pool: CutPool | None, sol: StageSolution,
                         tol: float = CHECK_TOL) -> None:
    """Assert the epigraph and gadget invariants at a returned optimum."""
    st = sol.assembled
    if st.alpha is None:
        return
    want = evaluate_pool(pool, sol.state)
    if abs(sol.alpha - want) > tol * max(1.0, abs(want)):
        raise AssertionError(f"alpha {sol.alpha} != pool value {want}")
    for cut, g in zip(st.cuts, st.gadgets):
        if g is None:
            continue
        got = sol.x[g[0]].sum() + sol.x[g[1]].sum()
        exact = np.abs(sol.state - cut.center).sum()
        if abs(got - exact) > tol:
            raise AssertionError(f"gadget gives {got}, exact L1 distance is {exact}")


def relaxation_duals(template: StageTemplate, scenario, incoming, pool: CutPool | None, *,
                     lp_backend: str = "native", node=None) -> np.ndarray:
    """Copy-row duals of the LP relaxation alone, without solving the MILP."""
    st = assemble_stage(template, scenario, incoming, pool)
    lp = solve_lp(st.problem.relaxed(), backend=lp_backend)
    if lp.status is Status.INFEASIBLE:
        raise StageInfeasible(node, "LP relaxation infeasible")
    if lp.status is not Status.OPTIMAL:
        raise SldpError(f"LP relaxation at node {node!r} is {lp.status.value}")
    return lp.duals[st.copy_rows].copy()
