import numpy as np
import pytest

from conftest import random_instance
from sldp.bench import WIDE_NOISE, CaroeSchultzSpec, ControlProblemSpec, gen_caroe_schultz, gen_control1d
from sldp.milp import solve_milp
from sldp.oracle import (
    deterministic_equivalent,
    expected_value,
    first_stage_sweep,
    grid_expected_ctg,
    lattice,
    node_value,
)
from sldp.stage import solve_stage


def test_caroe_schultz_n2_sweep():
    tree, templates, _ = gen_caroe_schultz(CaroeSchultzSpec(N=2))
    pts = lattice([0, 0], [5, 5])
    assert len(pts) == 36
    vals = first_stage_sweep(tree, templates, pts)
    assert vals.min() == pytest.approx(-57.0, abs=1e-9)
    np.testing.assert_allclose(pts[np.argmin(vals)], [0.0, 2.0])


def test_leaf_value_and_recourse_example():
    tree, templates, _ = gen_caroe_schultz(CaroeSchultzSpec(N=2))
    leaf = tree.children(tree.root)[0][0]
    assert tree.payload(leaf).rhs.tolist() == [5.0, 5.0]
    assert expected_value(tree, templates, leaf, []) == 0.0
    assert node_value(tree, templates, leaf, [0.0, 0.0]) == pytest.approx(-28.0)


def test_deterministic_equivalent_matches_recursion():
    # the extensive form solved by branch and bound equals root cost plus exact successors
    for seed in range(5):
        tree, templates, _ = random_instance(seed, T=2)
        p, const = deterministic_equivalent(tree, templates, tree.root, [])
        de = solve_milp(p).objective + const
        t0 = templates[0]
        X = lattice(t0.state_lo, t0.state_hi)
        best = np.inf
        for x in X:
            # cheapest root cost with the state fixed at x
            q = t0.problem.with_bounds(t0.problem.lb.copy(), t0.problem.ub.copy())
            q.lb[t0.state_idx] = x
            q.ub[t0.state_idx] = x
            sol = solve_milp(q)
            if sol.x is None:
                continue
            best = min(best, sol.objective + expected_value(tree, templates, tree.root, x))
        assert de == pytest.approx(best, abs=1e-6)


def test_node_value_matches_stage_solve_at_leaf():
    tree, templates, _ = random_instance(2, T=2)
    rng = np.random.default_rng(0)
    for m, _ in tree.children(tree.root):
        z = rng.uniform(templates[1].copy_lo, templates[1].copy_hi)
        assert node_value(tree, templates, m, z) == pytest.approx(
            solve_stage(templates[1], tree.payload(m), z, None).objective, abs=1e-9)


def test_control_generator_examples():
    spec = ControlProblemSpec(T=2, noise=(0.0,))
    tree, templates, floors = gen_control1d(spec, materialize=True)
    assert len(tree) == 2
    assert node_value(tree, templates, tree.root, [2.0]) == pytest.approx(1.0)
    assert floors == [0.0, 0.0]
    tree, templates, _ = gen_control1d(ControlProblemSpec(T=3, beta=0.0, noise=(-1.0, 1.0)), materialize=True)
    # later stages are free, the first costs |x0 +- 1|
    assert node_value(tree, templates, tree.root, [2.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ControlProblemSpec(noise=(-1.0, 2.0))
    with pytest.raises(ValueError):
        ControlProblemSpec(noise=())
    assert ControlProblemSpec().box() == (-6.0, 6.0)
    with pytest.raises(ValueError):
        ControlProblemSpec(noise=WIDE_NOISE)
    lo, hi = ControlProblemSpec(noise=WIDE_NOISE, state_box=None).box()
    assert lo == -hi and hi == pytest.approx(2.0 + 8 + 7 * 2.7)


def test_grid_oracle_matches_exact_on_lattice_points():
    spec = ControlProblemSpec(T=3, noise=(-1.0, 0.0, 1.0), state_box=(-8.0, 8.0))
    tree, templates, _ = gen_control1d(spec, materialize=True)
    grid = np.arange(-8.0, 9.0)
    approx = grid_expected_ctg(tree, templates, grid)
    assert np.all(approx[3] == 0.0)
    m = tree.children(tree.root)[0][0]
    # integer noise keeps every reachable state on the grid, so it is exact
    for i, x in enumerate(grid[2:-2]):
        exact = expected_value(tree, templates, m, [x])
        assert approx[2][i + 2] == pytest.approx(exact, abs=1e-9)
