import numpy as np
import pytest

from sldp.milp import MilpProblem
from sldp.stage import Scenario, StageTemplate
from sldp.tree import build_stagewise_tree


def random_stage(rng, d: int, has_copy: bool, x_hi: int, copy_hi: int, n_ctrl: int, n_rows: int,
                 name: str = "") -> StageTemplate:
    """Integer stage with continuous copies and a penalized recourse variable.

    Variables: x (state, d), y (controls), r (recourse), z (copies, d).
    Rows: G y + H x + R r >= W z + h (+ scenario shift). R is large enough
    that every incoming state in the box is feasible.
    """
    nx, ny = d, n_ctrl
    n = nx + ny + 1 + (d if has_copy else 0)
    G = rng.integers(-2, 3, size=(n_rows, ny)).astype(float)
    H = rng.integers(-2, 3, size=(n_rows, nx)).astype(float)
    W = rng.integers(0, 3, size=(n_rows, d)).astype(float) if has_copy else np.zeros((n_rows, 0))
    h = rng.integers(0, 4, size=n_rows).astype(float)
    R = 2.0 * (np.abs(G).sum(axis=1) * 2 + np.abs(H).sum(axis=1) * x_hi + W.sum(axis=1) * copy_hi + h + 4)
    A = np.hstack([G, H, R[:, None], -W])
    # column order: y, x, r, z
    c = np.concatenate([rng.integers(-3, 4, size=ny), rng.integers(-3, 4, size=nx), [5.0],
                        np.zeros(d if has_copy else 0)]).astype(float)
    lb = np.zeros(n)
    ub = np.concatenate([np.full(ny, 2.0), np.full(nx, float(x_hi)), [2.0],
                         np.full(d if has_copy else 0, float(copy_hi))])
    integer = np.concatenate([np.ones(ny + nx + 1, dtype=bool), np.zeros(d if has_copy else 0, dtype=bool)])
    p = MilpProblem(c, A, [">="] * n_rows, h, lb, ub, integer)
    state_idx = np.arange(ny, ny + nx)
    copy_idx = np.arange(ny + nx + 1, n) if has_copy else np.arange(0)
    copy_lo, copy_hi = (np.zeros(d), np.full(d, float(copy_hi))) if has_copy else ([], [])
    return StageTemplate(p, state_idx, copy_idx, np.zeros(d), np.full(d, float(x_hi)),
                         copy_lo, copy_hi, name=name)


def random_instance(seed: int, T: int = 2, d: int | None = None, n_scen: int | None = None):
    """Random stagewise tree with integer stages, enumerable by the oracle.

    The root has no copies, so its incoming state is empty.
    """
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(1, 3))
    x_hi = 3 if (T == 2 or d == 1) else 2
    templates = []
    for t in range(1, T + 1):
        n_ctrl = 2 if T == 2 else 1
        templates.append(random_stage(rng, d, t > 1, x_hi if t < T else 0, x_hi, n_ctrl,
                                      int(rng.integers(1, 3)), name=f"rand-t{t}"))
    stages = [[(Scenario(name="root"), 1.0)]]
    for t in range(2, T + 1):
        k = n_scen or int(rng.integers(2, 4))
        q = rng.dirichlet(np.ones(k))
        q = q / q.sum()
        q[-1] = 1.0 - q[:-1].sum()
        rows = templates[t - 1].problem.num_rows
        stages.append([(Scenario(rhs=rng.integers(-2, 3, size=rows).astype(float), name=f"s{i}"), float(q[i]))
                       for i in range(k)])
    tree = build_stagewise_tree(stages)
    floors = [-1000.0] * T
    return tree, templates, floors


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def probe_states(rng, lo, hi, n):
    """``n`` states in the box: integer lattice points first, then uniform draws."""
    from sldp.oracle import lattice

    pts = lattice(lo, hi)[: n // 4]
    rest = rng.uniform(lo, hi, size=(n - len(pts), len(lo)))
    return np.vstack([pts, rest])


def cut_violations(tree, templates, pools, n_states, rng, extra=None):
    """Largest ``cut(x) - Qbar(x)`` over every pooled node and ``n_states`` probes.

    ``extra`` maps a node to additional cuts to check against the same oracle.
    Returns ``(worst, n_checked)``.
    """
    from sldp.oracle import expected_value

    worst, checked = -np.inf, 0
    by_node = {key[1]: list(p.cuts) for key, p in pools.items()}
    for n, cuts in (extra or {}).items():
        by_node.setdefault(n, []).extend(cuts)
    for n, cuts in by_node.items():
        if not cuts:
            continue
        t = templates[tree.stage(n) - 1]
        X = probe_states(rng, t.state_lo, t.state_hi, n_states)
        X = np.vstack([X, np.array([c.center for c in cuts])])
        exact = np.array([expected_value(tree, templates, n, x) for x in X])
        for c in cuts:
            worst = max(worst, float(np.max(c.evaluate(X) - exact)))
        checked += len(X)
    return worst, checked


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
