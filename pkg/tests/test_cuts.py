import math

import numpy as np
import pytest

from conftest import cut_violations, random_instance
from sldp.bench import CaroeSchultzSpec, fractional_part_stage, gen_caroe_schultz
from sldp.cuts import (
    RhoSchedule,
    aggregate,
    minimal_reverse_norm_rho,
    reverse_norm_cut,
    rho_schedule,
    strengthened_aug_benders_cut,
    strengthened_benders_cut,
)
from sldp.engine import SldpConfig, run_full
from sldp.errors import CenterMismatch, ProbabilityMismatch
from sldp.milp import MilpProblem
from sldp.oracle import expected_value, node_value
from sldp.pool import Cut
from sldp.stage import Scenario, StageTemplate, solve_stage


def successor_cuts(tree, templates, n, center, lam, rho, pools=None):
    parts = []
    for m, q in tree.children(n):
        pool = None if tree.is_leaf(m) else (pools or {}).get(tree.pool_key(m))
        if pool is None and not tree.is_leaf(m):
            return None
        t = templates[tree.stage(m) - 1]
        parts.append((q, strengthened_aug_benders_cut(t, tree.payload(m), pool, center, lam, rho)))
    return aggregate(parts)


# validity against the oracle ------------------------------------------------

def engine_and_random_cuts(tree, templates, floors, rng):
    """Pool cuts from short SB and SAB runs, plus SAB cuts with random multipliers."""
    extra = {}
    pools = {}
    for family in ("sb", "sab"):
        res = run_full(tree, templates, SldpConfig(cuts=family, max_iterations=4, rho0=0.5), floors)
        for key, pool in res.pools.items():
            extra.setdefault(key[1], []).extend(pool.cuts)
        pools = res.pools
    t0 = templates[0]
    for _ in range(5):
        c = rng.uniform(t0.state_lo, t0.state_hi)
        lam = rng.uniform(-10, 10, c.size)
        cut = successor_cuts(tree, templates, tree.root, c, lam, float(rng.uniform(0, 20)), pools)
        extra[tree.root].append(cut)
    return extra


# the full sweep (10 instances x 1000 states) lives in the acceptance module
@pytest.mark.parametrize("seed,T", [(0, 2), (1, 2), (2, 2), (100, 3)])
def test_engine_cuts_valid_against_oracle(seed, T):
    tree, templates, floors = random_instance(seed, T=T, d=1 if T == 3 else None)
    rng = np.random.default_rng(seed)
    extra = engine_and_random_cuts(tree, templates, floors, rng)
    worst, checked = cut_violations(tree, templates, {}, 200, rng, extra=extra)
    assert checked >= 200
    assert worst <= 1e-6


def test_weak_duality_over_lambda_rho_sweep():
    tree, templates, _ = random_instance(3, T=2)
    rng = np.random.default_rng(0)
    t0 = templates[0]
    for _ in range(20):
        c = rng.uniform(t0.state_lo, t0.state_hi)
        exact = expected_value(tree, templates, tree.root, c)
        for lam_scale in (0.0, 1.0, 10.0):
            for rho in (0.0, 0.5, 5.0, 50.0):
                lam = lam_scale * rng.standard_normal(c.size)
                cut = successor_cuts(tree, templates, tree.root, c, lam, rho)
                assert cut.v <= exact + 1e-6


def test_larger_rho_never_weakens_the_intercept():
    tree, templates, _ = random_instance(4, T=2)
    rng = np.random.default_rng(1)
    t0 = templates[0]
    for _ in range(10):
        c = rng.uniform(t0.state_lo, t0.state_hi)
        lam = rng.standard_normal(c.size)
        vs = [successor_cuts(tree, templates, tree.root, c, lam, rho).v for rho in (0.0, 0.3, 1.0, 3.0, 30.0)]
        assert np.all(np.diff(vs) >= -1e-9)


def test_caroe_schultz_zero_multiplier_rho_sweep():
    tree, templates, _ = gen_caroe_schultz(CaroeSchultzSpec(N=2))
    c = np.array([0.0, 4.0])
    exact = expected_value(tree, templates, tree.root, c)
    vs = []
    for rho in (1.0, 10.0, 100.0):
        cut = successor_cuts(tree, templates, tree.root, c, np.zeros(2), rho)
        assert cut.v <= exact + 1e-9
        vs.append(cut.v)
    assert vs[0] <= vs[1] <= vs[2]
    # large enough opening recovers the value at an integer center
    assert vs[2] == pytest.approx(exact, abs=1e-6)


def test_strengthened_benders_above_lp_intercept():
    tree, templates, _ = gen_caroe_schultz(CaroeSchultzSpec(N=2))
    c = np.array([1.5, 2.5])
    parts, lp_v = [], 0.0
    for m, q in tree.children(tree.root):
        t, scen = templates[1], tree.payload(m)
        sb = strengthened_benders_cut(t, scen, None, c)
        parts.append((q, sb))
        lp = solve_stage(StageTemplate(t.problem.relaxed(), t.state_idx, t.copy_idx, t.state_lo,
                                       t.state_hi, t.copy_lo, t.copy_hi), scen, c, None)
        lp_v += q * lp.objective
    cut = aggregate(parts)
    assert cut.v >= lp_v - 1e-9
    assert cut.v <= expected_value(tree, templates, tree.root, c) + 1e-9


def test_zero_multiplier_gives_min_over_copy_box():
    t = fractional_part_stage()
    cut = strengthened_benders_cut(t, None, None, [0.7], lam=[0.0])
    assert cut.v == pytest.approx(0.0, abs=1e-9)
    cut = strengthened_aug_benders_cut(t, None, None, [0.7], [0.0], 0.0)
    assert cut.v == pytest.approx(0.0, abs=1e-9)


def test_reverse_norm_valid_on_lipschitz_instance():
    # value 3 * |z - 1| on [0, 2] with integer-free recourse: Lipschitz constant 3
    p = MilpProblem([3.0, 3.0, 0.0], [[1.0, -1.0, -1.0]], ["="], [-1.0], [0, 0, 0], [2, 2, 2],
                    [False, False, False])
    t = StageTemplate(p, [], [2], [], [], [0.0], [2.0])
    X = np.linspace(0, 2, 201)
    vals = np.array([solve_stage(t, None, [x], None).objective for x in X])
    for c in (0.0, 0.4, 1.0, 1.7):
        v = solve_stage(t, None, [c], None).objective
        cut = reverse_norm_cut([(1.0, v)], [c], 3.0)
        assert np.all(cut.evaluate(X[:, None]) <= vals + 1e-9)


def test_reverse_norm_cut_example():
    cut = reverse_norm_cut([(0.5, 2.0), (0.5, 4.0)], [1.0], 2.0)
    assert cut.v == pytest.approx(3.0)
    assert cut.evaluate([2.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        reverse_norm_cut([(1.0, 0.0)], [0.0], 0.0)
    with pytest.raises(ProbabilityMismatch):
        reverse_norm_cut([(0.5, 0.0)], [0.0], 1.0)


def test_aggregate_examples():
    a = Cut([1.0, 2.0], 4.0, [1.0, 0.0], 2.0, "sab")
    b = Cut([1.0, 2.0], 0.0, [0.0, 2.0], 0.0, "sab")
    cut = aggregate([(0.25, a), (0.75, b)])
    assert cut.v == pytest.approx(1.0)
    np.testing.assert_allclose(cut.lam, [0.25, 1.5])
    assert cut.rho == pytest.approx(0.5)
    assert cut.family == "sab"
    with pytest.raises(CenterMismatch):
        aggregate([(0.5, a), (0.5, Cut([0.0, 2.0], 0.0, [0.0, 0.0], 0.0))])
    with pytest.raises(ProbabilityMismatch):
        aggregate([(0.5, a), (0.4, b)])


def test_rho_schedule_examples():
    s = RhoSchedule(1.0, 2.0, math.inf, 10)
    assert s(0) == 1.0
    assert s(9) == 1.0
    assert s(25) == 4.0
    assert RhoSchedule(1.0, 2.0, 8.0, 10)(100) == 8.0
    assert rho_schedule(10**6, {"rho0": 1.0, "gamma": 2.0, "rho_max": 50.0}) == 50.0
    assert rho_schedule(7, {"rho0": 3.0, "gamma": 1.0}) == 3.0
    with pytest.raises(ValueError):
        RhoSchedule(0.0)


def test_fractional_part_minimal_rho_increases():
    t = fractional_part_stage()
    X = np.linspace(0.0, 2.0, 2001)
    g = np.array([solve_stage(t, None, [x], None).objective for x in X])
    np.testing.assert_allclose(g, X - np.floor(X), atol=1e-9)
    rhos = []
    for c in (0.5, 0.9, 0.99):
        gc = solve_stage(t, None, [c], None).objective
        rho = minimal_reverse_norm_rho(g, X[:, None], gc, [c])
        rhos.append(rho)
        # tight and valid at that opening, invalid just below it
        assert np.all(reverse_norm_cut([(1.0, gc)], [c], rho).evaluate(X[:, None]) <= g + 1e-9)
        assert np.any(reverse_norm_cut([(1.0, gc)], [c], 0.99 * rho).evaluate(X[:, None]) > g + 1e-9)
    np.testing.assert_allclose(rhos, [1.0, 9.0, 99.0], rtol=1e-6)
    assert rhos[0] < rhos[1] < rhos[2]


def test_minimal_rho_examples():
    assert minimal_reverse_norm_rho([0.0, 1.0], [[1.0], [2.0]], 2.0, [0.0]) == pytest.approx(2.0)
    assert minimal_reverse_norm_rho([5.0], [[1.0]], 2.0, [0.0]) == 0.0


def test_node_value_used_by_cut_matches_stage_solve():
    tree, templates, _ = random_instance(1, T=2)
    m = tree.children(tree.root)[0][0]
    z = np.full(templates[1].copy_dim, 1.5)
    assert node_value(tree, templates, m, z) == pytest.approx(
        solve_stage(templates[1], tree.payload(m), z, None).objective, abs=1e-9)
