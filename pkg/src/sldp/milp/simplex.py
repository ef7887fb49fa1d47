"""Bounded-variable primal simplex on a dense tableau.

Rows are brought to equality form ``A x + s = b`` with one slack per row;
the slack bounds encode the row sense. Phase 1 minimizes the sum of
artificial variables added only for rows whose slack cannot absorb the
initial residual. Pricing is Dantzig's rule until a run of degenerate
pivots exceeds ``2 * num_vars``, after which Bland's rule takes over until
the objective moves again.
"""

from __future__ import annotations

import numpy as np

from sldp.errors import SldpError
from sldp.milp.problem import FEAS_TOL, LpSolution, MilpProblem, Status

_BASIC, _AT_LB, _AT_UB, _FREE = 0, 1, 2, 3

PIVOT_TOL = 1e-9
DUAL_TOL = 1e-9
REFACTOR_EVERY = 100


class _Tableau:
    def __init__(self, Afull, b, cost, lbf, ubf, basis, status, xval):
        self.Afull = Afull
        self.b = b
        self.cost = cost
        self.lbf = lbf
        self.ubf = ubf
        self.basis = basis
        self.status = status
        self.xval = xval
        self.T = None
        self.d = None
        self.refactor()

    def refactor(self):
        B = self.Afull[:, self.basis]
        self.T = np.linalg.solve(B, self.Afull)
        nonbasic = self.status != _BASIC
        rhs = self.b - self.Afull[:, nonbasic] @ self.xval[nonbasic]
        self.xval[self.basis] = np.linalg.solve(B, rhs)
        self.price()

    def price(self):
        self.d = self.cost - self.cost[self.basis] @ self.T

    def run(self, num_vars, max_iter, phase2):
        """Iterate to optimality. Returns 'optimal' or 'unbounded'."""
        degenerate_run = 0
        since_refactor = 0
        lbf, ubf, status = self.lbf, self.ubf, self.status
        movable = (ubf - lbf) > 0
        for it in range(max_iter):
            d = self.d
            at_lb = (status == _AT_LB) & (d < -DUAL_TOL) & movable
            at_ub = (status == _AT_UB) & (d > DUAL_TOL) & movable
            free = (status == _FREE) & (np.abs(d) > DUAL_TOL)
            eligible = at_lb | at_ub | free
            if not eligible.any():
                return "optimal", it
            bland = degenerate_run > 2 * num_vars
            if bland:
                q = int(np.argmax(eligible))
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            dirn = 1.0 if d[q] < 0 else -1.0

            alpha = self.T[:, q]
            delta = -dirn * alpha
            xB = self.xval[self.basis]
            lbB = lbf[self.basis]
            ubB = ubf[self.basis]
            limits = np.full(delta.size, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                limits[dec] = (xB[dec] - lbB[dec]) / (-delta[dec])
                limits[inc] = (ubB[inc] - xB[inc]) / delta[inc]
            np.maximum(limits, 0.0, out=limits)
            theta_row = limits.min() if limits.size else np.inf
            flip = ubf[q] - lbf[q]
            if not np.isfinite(theta_row) and not np.isfinite(flip):
                return "unbounded", it

            if flip <= theta_row:
                theta = flip
                self.xval[self.basis] = xB + theta * delta
                self.xval[q] = ubf[q] if dirn > 0 else lbf[q]
                status[q] = _AT_UB if dirn > 0 else _AT_LB
            else:
                theta = theta_row
                ties = np.flatnonzero(limits <= theta_row + 1e-12 * max(1.0, theta_row))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = self.basis[r]
                self.xval[self.basis] = xB + theta * delta
                self.xval[q] = self.xval[q] + dirn * theta
                if delta[r] < 0:
                    self.xval[leaving] = lbf[leaving]
                    status[leaving] = _AT_LB
                else:
                    self.xval[leaving] = ubf[leaving]
                    status[leaving] = _AT_UB
                entering_value = self.xval[q]
                self.basis[r] = q
                status[q] = _BASIC
                self._pivot(r, q)
                self.xval[q] = entering_value
                since_refactor += 1
                if since_refactor >= REFACTOR_EVERY:
                    self.refactor()
                    since_refactor = 0

            if theta <= 1e-12:
                degenerate_run += 1
            else:
                degenerate_run = 0
        raise SldpError(f"simplex iteration limit {max_iter} reached")

    def _pivot(self, r, q):
        T = self.T
        prow = T[r] / T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, prow)
        T[r] = prow
        self.d = self.d - self.d[q] * prow


def _trivial(p: MilpProblem) -> LpSolution:
    """No rows: every variable sits at its cheapest bound."""
    x = np.zeros(p.num_vars)
    for j, cj in enumerate(p.c):
        lo, hi = p.lb[j], p.ub[j]
        if cj > 0:
            if not np.isfinite(lo):
                return LpSolution(Status.UNBOUNDED, None, -np.inf, None)
            x[j] = lo
        elif cj < 0:
            if not np.isfinite(hi):
                return LpSolution(Status.UNBOUNDED, None, -np.inf, None)
            x[j] = hi
        else:
            x[j] = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
    return LpSolution(Status.OPTIMAL, x, float(p.c @ x), np.zeros(0))


def simplex(p: MilpProblem, feas_tol: float = FEAS_TOL, max_iter: int | None = None) -> LpSolution:
    n, m = p.num_vars, p.num_rows
    if m == 0:
        return _trivial(p)
    if max_iter is None:
        max_iter = 50 * (n + m) + 1000

    A, b = p.A, p.b
    slack_lb = np.array([0.0 if s != ">=" else -np.inf for s in p.senses])
    slack_ub = np.array([np.inf if s == "<=" else 0.0 for s in p.senses])

    x0 = np.where(np.isfinite(p.lb), p.lb, np.where(np.isfinite(p.ub), p.ub, 0.0))
    st0 = np.where(np.isfinite(p.lb), _AT_LB, np.where(np.isfinite(p.ub), _AT_UB, _FREE))
    resid = b - A @ x0
    clamp = np.clip(resid, slack_lb, slack_ub)
    scale = 1.0 + np.abs(b)
    needs_art = np.abs(resid - clamp) > 1e-12 * scale
    art_rows = np.flatnonzero(needs_art)
    k = art_rows.size
    sigma = np.sign(resid[art_rows] - clamp[art_rows])

    N = n + m + k
    Afull = np.zeros((m, N))
    Afull[:, :n] = A
    Afull[:, n:n + m] = np.eye(m)
    Afull[art_rows, n + m + np.arange(k)] = sigma

    lbf = np.concatenate([p.lb, slack_lb, np.zeros(k)])
    ubf = np.concatenate([p.ub, slack_ub, np.full(k, np.inf)])
    xval = np.concatenate([x0, np.zeros(m), np.zeros(k)])
    status = np.concatenate([st0, np.full(m, _BASIC), np.full(k, _AT_LB)])
    basis = n + np.arange(m)
    for a, i in enumerate(art_rows):
        # slack leaves at its violated bound, artificial takes its place
        slack = n + i
        xval[slack] = clamp[i]
        status[slack] = _AT_LB if clamp[i] == slack_lb[i] else _AT_UB
        basis[i] = n + m + a
        status[n + m + a] = _BASIC

    total_iter = 0
    if k:
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        tab = _Tableau(Afull, b, cost1, lbf, ubf, basis, status, xval)
        outcome, it = tab.run(n, max_iter, phase2=False)
        total_iter += it
        infeas = float(np.sum(tab.xval[n + m:]))
        if infeas > feas_tol * (1.0 + np.max(np.abs(b))):
            return LpSolution(Status.INFEASIBLE, None, np.nan, None, total_iter)
        # artificials are pinned to zero for phase 2
        ubf[n + m:] = 0.0
        nb_art = (status[n + m:] != _BASIC)
        idx = n + m + np.flatnonzero(nb_art)
        xval[idx] = 0.0
        status[idx] = _AT_LB
        cost2 = np.zeros(N)
        cost2[:n] = p.c
        tab.cost = cost2
        tab.refactor()
    else:
        cost2 = np.zeros(N)
        cost2[:n] = p.c
        tab = _Tableau(Afull, b, cost2, lbf, ubf, basis, status, xval)

    outcome, it = tab.run(n, max_iter, phase2=True)
    total_iter += it
    if outcome == "unbounded":
        return LpSolution(Status.UNBOUNDED, None, -np.inf, None, total_iter)

    tab.refactor()
    x = tab.xval[:n].copy()
    y = tab.cost[tab.basis] @ tab.T[:, n:n + m]
    return LpSolution(Status.OPTIMAL, x, float(p.c @ x), y, total_iter)
