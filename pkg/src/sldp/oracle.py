"""Exact cost-to-go values by brute force, for validation.

``node_value`` builds the deterministic equivalent of the subtree below a
node, substituting every copy variable by the parent state it copies, and
hands it to :func:`enumerate_milp`. Subtrees whose only continuous variables
are copies therefore enumerate the pure integer lattice, vectorized.

``grid_expected_ctg`` is the approximate alternative for trees too large to
enumerate: a backward recursion on a state grid with linear interpolation.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from sldp.errors import OracleFailure, StageInfeasible
from sldp.milp import DEFAULT_CAP, MilpProblem, Status, enumerate_milp, solve_lp
from sldp.stage import _scenario_data


def _subtree(tree, node):
    """Subtree nodes in BFS order with (parent position, probability from ``node``)."""
    out = [(node, -1, 1.0)]
    i = 0
    while i < len(out):
        n, _, p = out[i]
        for m, q in tree.children(n):
            out.append((m, i, p * q))
        i += 1
    return out


def deterministic_equivalent(tree, templates, node, incoming) -> tuple[MilpProblem, float]:
    """Extensive form of the subtree rooted at ``node`` with copies substituted.

    Returns ``(problem, constant)``; the subtree's value is the problem's
    optimum plus ``constant``.
    """
    nodes = _subtree(tree, node)
    blocks, offsets = [], []
    n_cols = 0
    for n, _, _ in nodes:
        t = templates[tree.stage(n) - 1]
        keep = np.setdiff1d(np.arange(t.problem.num_vars), t.copy_idx)
        blocks.append((t, keep))
        offsets.append(n_cols)
        n_cols += keep.size
    rows_A, rows_b, senses = [], [], []
    c = np.zeros(n_cols)
    lb = np.zeros(n_cols)
    ub = np.zeros(n_cols)
    integer = np.zeros(n_cols, dtype=bool)
    constant = 0.0
    incoming = np.asarray(incoming, dtype=float).reshape(-1)
    for (n, parent, prob), (t, keep), off in zip(nodes, blocks, offsets):
        cost, b = _scenario_data(t, tree.payload(n))
        p = t.problem
        cols = off + np.arange(keep.size)
        c[cols] += prob * cost[keep]
        lb[cols], ub[cols], integer[cols] = p.lb[keep], p.ub[keep], p.integer[keep]
        A = np.zeros((p.num_rows, n_cols))
        A[:, cols] = p.A[:, keep]
        rhs = b.copy()
        if t.copy_idx.size:
            if parent < 0:
                if incoming.size != t.copy_idx.size:
                    raise OracleFailure(f"incoming state has {incoming.size} entries, expected {t.copy_idx.size}")
                rhs = rhs - p.A[:, t.copy_idx] @ incoming
                constant += prob * float(cost[t.copy_idx] @ incoming)
            else:
                pt, pkeep = blocks[parent]
                # column of each parent state variable inside the extensive form
                pos = offsets[parent] + np.searchsorted(pkeep, pt.state_idx)
                if pt.state_idx.size != t.copy_idx.size:
                    raise OracleFailure("copy dimension does not match the parent's state dimension")
                A[:, pos] += p.A[:, t.copy_idx]
                c[pos] += prob * cost[t.copy_idx]
        rows_A.append(A)
        rows_b.append(rhs)
        senses += list(p.senses)
    A = np.vstack(rows_A) if rows_A else np.zeros((0, n_cols))
    b = np.concatenate(rows_b) if rows_b else np.zeros(0)
    return MilpProblem(c, A, senses, b, lb, ub, integer), constant


def node_value(tree, templates, node, incoming, cap: int = DEFAULT_CAP) -> float:
    """Exact ``Q_node(incoming)`` including everything below the node."""
    p, constant = deterministic_equivalent(tree, templates, node, incoming)
    sol = enumerate_milp(p, cap=cap)
    if sol.status is Status.INFEASIBLE:
        raise StageInfeasible(node, f"subtree infeasible at incoming {incoming}")
    if sol.status is not Status.OPTIMAL:
        raise OracleFailure(f"subtree at node {node!r} is {sol.status.value}")
    return float(sol.objective + constant)


def expected_value(tree, templates, node, x, cap: int = DEFAULT_CAP) -> float:
    """Exact ``Qbar_node(x) = sum_m q_m Q_m(x)``, zero at leaves."""
    return float(sum(q * node_value(tree, templates, m, x, cap) for m, q in tree.children(node)))


def _representative(tree, t):
    n = tree.root
    for _ in range(t - 1):
        n = tree.children(n)[0][0]
    return n


def exact_expected_ctg(tree, templates, samples: dict, cap: int = DEFAULT_CAP,
                       nodes: dict | None = None) -> dict:
    """Exact expected cost-to-go at sampled states.

    ``samples`` maps a stage to an array of states (one per row). For each
    stage the values belong to ``nodes[stage]`` when given, else to the
    first node of that stage, which is every node's function on a
    stagewise-independent tree. Returns ``{stage: (states, values)}``.
    """
    out = {}
    for t, states in samples.items():
        n = nodes[t] if nodes and t in nodes else _representative(tree, t)
        X = np.atleast_2d(np.asarray(states, dtype=float))
        if X.shape[1] == 0:
            X = X.reshape(-1, 0)
        vals = np.array([expected_value(tree, templates, n, x, cap) for x in X])
        out[t] = (X, vals)
    return out


def lattice(lo, hi) -> np.ndarray:
    """All integer points of the box ``[lo, hi]``."""
    axes = [np.arange(math.ceil(a - 1e-9), math.floor(b + 1e-9) + 1) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, len(axes))


def first_stage_sweep(tree, templates, points, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``f_1(x) + Qbar_1(x)`` at each first-stage state in ``points``.

    Valid when the root stage has no controls beyond its state, as in the
    two-stage benchmark: ``f_1`` is then the objective restricted to ``x``.
    """
    t = templates[0]
    cost, _ = _scenario_data(t, tree.payload(tree.root))
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if t.problem.num_vars != t.state_dim:
        raise OracleFailure("sweep needs a root stage whose only variables are the state")
    vals = np.empty(X.shape[0])
    for i, x in enumerate(X):
        full = np.zeros(t.problem.num_vars)
        full[t.state_idx] = x
        if not t.problem.is_feasible(full):
            vals[i] = np.inf
            continue
        vals[i] = float(cost @ full) + expected_value(tree, templates, tree.root, x, cap)
    return vals


def _stage_choices(template, scenario, incoming, cap: int):
    """Every integer assignment's cheapest completion: (immediate cost, outgoing state)."""
    p = template.problem
    cost, b = _scenario_data(template, scenario)
    lb, ub = p.lb.copy(), p.ub.copy()
    lb[template.copy_idx] = incoming
    ub[template.copy_idx] = incoming
    ints = np.flatnonzero(p.integer)
    axes = [np.arange(int(round(lb[j])), int(round(ub[j])) + 1) for j in ints]
    if math.prod(len(a) for a in axes) > cap:
        raise OracleFailure("too many integer assignments for the grid oracle")
    out = []
    for pt in itertools.product(*axes):
        lo, hi = lb.copy(), ub.copy()
        lo[ints] = pt
        hi[ints] = pt
        sol = solve_lp(MilpProblem(cost, p.A, p.senses, b, lo, hi, False))
        if sol.status is Status.OPTIMAL:
            out.append((sol.objective, sol.x[template.state_idx]))
    return out


def grid_expected_ctg(tree, templates, grid, cap: int = 4096) -> dict:
    """Approximate ``Qbar_t`` on a 1-D state grid by backward recursion.

    Needs a stagewise-independent tree with one-dimensional states. For each
    integer assignment of a stage the continuous variables are set by the
    LP minimizing the immediate cost; this is exact when they are determined
    by the integers and the incoming state, as in the control benchmark.
    Between grid points the next stage's function is interpolated linearly,
    so the result is labeled approximate. Returns ``{stage: values}``.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1)
    T = tree.horizon
    out = {T: np.zeros(grid.size)}
    for t in range(T - 1, 0, -1):
        n = _representative(tree, t)
        nxt = out[t + 1]
        vals = np.zeros(grid.size)
        for m, q in tree.children(n):
            template = templates[t]
            scen = tree.payload(m)
            for i, x in enumerate(grid):
                best = np.inf
                for cost, state in _stage_choices(template, scen, [x], cap):
                    future = np.interp(state[0], grid, nxt) if t + 1 < T else 0.0
                    best = min(best, cost + future)
                if not np.isfinite(best):
                    raise StageInfeasible(m, f"no feasible control at grid state {x}")
                vals[i] += q * best
        out[t] = vals
    return out
