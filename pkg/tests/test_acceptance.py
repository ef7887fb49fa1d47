"""Acceptance checks, one test per criterion.

Each test prints ``criterion N: PASS|FAIL ...`` and the lines are repeated
in the pytest terminal summary. Run directly with ``python
tests/test_acceptance.py`` to get the lines without pytest.

The Caroe-Schultz runs are cached per configuration so criteria 2, 3 and 4
share them; every cached run also feeds the monotonicity check of
criterion 7.
"""

import functools
import time

import numpy as np
import pytest

from conftest import cut_violations, random_instance
from sldp.bench import CaroeSchultzSpec, ControlProblemSpec, fractional_part_stage, gen_caroe_schultz, gen_control1d
from sldp.cli import caroe_oracle
from sldp.cuts import minimal_reverse_norm_rho, reverse_norm_cut
from sldp.engine import SldpConfig, run_full, run_sampled
from sldp.milp import MilpProblem, Status, enumerate_milp, solve_milp
from sldp.oracle import expected_value, node_value
from sldp.pool import CutPool
from sldp.reverse_cut import reverse_cut_minimize
from sldp.stage import check_stage_solution, solve_stage
from test_cuts import engine_and_random_cuts, successor_cuts
from test_milp import random_instance as random_milp
from test_stage import box_stage, random_pool

pytestmark = pytest.mark.slow

RESULTS = {}
PAPER_OBJECTIVE = {2: -57.000, 3: -59.333, 6: -61.222}
ALL_RUNS = []  # lower-bound sequences of every run made here


def report(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def oracle_objective(N: int) -> float:
    return caroe_oracle(N)[0]


@functools.lru_cache(maxsize=None)
def cs_run(N: int, discrete: bool, family: str, iters: int, rho_max: float = np.inf):
    tree, templates, floors = gen_caroe_schultz(CaroeSchultzSpec(N=N, discrete_first_stage=discrete))
    cfg = SldpConfig(cuts=family, max_iterations=iters, rho_max=rho_max)
    t0 = time.perf_counter()
    res = run_full(tree, templates, cfg, floors)
    ALL_RUNS.append((f"cs N={N} {'int' if discrete else 'cont'} {family}", res.lower_bounds))
    return res, time.perf_counter() - t0


def first_within(lbs, target, tol):
    hits = [k + 1 for k, lb in enumerate(lbs) if abs(lb - target) <= tol]
    return hits[0] if hits else None


# 1 ---------------------------------------------------------------------------

def test_criterion_1_caroe_schultz_objectives():
    got = {N: oracle_objective(N) for N in (2, 3, 6)}
    ok = all(abs(got[N] - PAPER_OBJECTIVE[N]) <= 1e-3 for N in got)
    report(1, ok, "oracle objectives " + ", ".join(f"N={N} {v:.4f}" for N, v in got.items()))
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_discrete_gap_closed():
    details, ok, total = [], True, 0.0
    for N in (2, 3):
        res, secs = cs_run(N, True, "sab", 200)
        total += secs
        k = first_within(res.lower_bounds, oracle_objective(N), 1e-3)
        ok &= k is not None
        details.append(f"N={N} LB {res.lb:.4f} (exact after {k} iterations)")
    res6, secs = cs_run(6, True, "sab", 200)
    total += secs
    ok &= res6.lb >= -61.50
    soft = abs(res6.lb - (-61.274)) <= 0.25
    details.append(f"N=6 LB {res6.lb:.4f} (>= -61.50; soft target -61.274+-0.25 {'met' if soft else 'missed'})")
    ok &= total <= 600
    report(2, ok, "; ".join(details) + f"; {total:.0f} s")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_continuous_first_stage():
    res2, _ = cs_run(2, False, "sab", 150, 8.0)
    ok = abs(res2.lb - PAPER_OBJECTIVE[2]) <= 1e-3
    details = [f"N=2 LB {res2.lb:.5f}"]
    for N in (3, 6):
        sab, _ = cs_run(N, False, "sab", 100, 8.0)
        sb, _ = cs_run(N, False, "sb", 100)
        obj = oracle_objective(N)
        ok &= sab.lb < obj and sab.lb >= sb.lb - 1e-9
        details.append(f"N={N} LB {sab.lb:.4f} (objective {obj:.4f}, SB {sb.lb:.4f})")
    report(3, ok, "; ".join(details))
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_4_strengthened_benders_stalls():
    ok, details = True, []
    for discrete in (True, False):
        for N in (2, 3, 6):
            sb, _ = cs_run(N, discrete, "sb", 100)
            gap = oracle_objective(N) - sb.lb
            ok &= gap > 0
            if N == 2:
                ok &= gap > 0.5
            details.append(f"{'int' if discrete else 'cont'} N={N} {sb.lb:.3f}")
    soft = abs(cs_run(2, True, "sb", 100)[0].lb - (-58.096)) <= 0.1
    report(4, ok, "SB LB " + ", ".join(details) + f"; soft -58.096+-0.1 {'met' if soft else 'missed'}")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_5_control_pattern():
    tree, templates, floors = gen_control1d(ControlProblemSpec())
    methods = {
        "sb": SldpConfig(mode="sampled", cuts="sb"),
        "rn": SldpConfig(mode="sampled", cuts="rn", rho=5.0, delta=0.05),
        "sab": SldpConfig(mode="sampled", cuts="sab", delta=0.05, rho_max=8.0),
    }
    out, total = {}, 0.0
    for name, cfg in methods.items():
        d = cfg.to_dict()
        d.update(max_iterations=100, sim_samples=200, seed=0)
        t0 = time.perf_counter()
        res = run_sampled(tree, templates, SldpConfig.from_dict(d), floors)
        total += time.perf_counter() - t0
        ALL_RUNS.append((f"control {name}", res.lower_bounds))
        out[name] = res
    lb = {k: r.lb for k, r in out.items()}
    a = lb["sb"] + 0.5 <= min(lb["rn"], lb["sab"])
    b = all(r.lb <= r.policy["mean"] + 3 * r.policy["stderr"] for r in out.values())
    c = abs(lb["rn"] - lb["sab"]) <= 0.05 * max(abs(lb["rn"]), abs(lb["sab"]))
    ok = a and b and c and total <= 900
    report(5, ok, ", ".join(f"{k} LB {r.lb:.3f} UB {r.policy['mean']:.3f}+-{r.policy['stderr']:.3f}"
                            for k, r in out.items()) + f"; (a) {a} (b) {b} (c) {c}; {total:.0f} s")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_reverse_cut_method():
    p = MilpProblem([0.0], np.zeros((0, 1)), [], [], 0.0, 3.0, False)
    res = reverse_cut_minimize(p, [0], lambda x: min(x[0], 1.0, 3.0 - x[0]), rho=1.0, eps=1e-4, floor=-5.0)
    ok = res.converged and abs(res.nu[-1]) <= 1e-4
    report(6, ok, f"converged {res.converged} after {res.iterations} iterations, nu {res.nu[-1]:.2e}")
    assert ok


# 7 ---------------------------------------------------------------------------

def property_cut_validity():
    worst, states = -np.inf, 0
    cases = [(s, 2) for s in range(6)] + [(s, 3) for s in range(100, 104)]
    for seed, T in cases:
        tree, templates, floors = random_instance(seed, T=T, d=1 if T == 3 else None)
        rng = np.random.default_rng(seed)
        extra = engine_and_random_cuts(tree, templates, floors, rng)
        w, checked = cut_violations(tree, templates, {}, 1000, rng, extra=extra)
        assert checked >= 1000
        worst, states = max(worst, w), states + checked
    return worst <= 1e-6, f"cut validity: {len(cases)} instances, {states} states, worst excess {worst:.1e}"


def property_milp_kernel():
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(200):
        p = random_milp(rng)
        ref = enumerate_milp(p, cap=10**6)
        sol = solve_milp(p, backend="highs")
        if sol.status is not ref.status:
            bad += 1
        elif ref.status is Status.OPTIMAL and abs(sol.objective - ref.objective) > 1e-6:
            bad += 1
    return bad == 0, f"MILP kernel: {bad} mismatches over 200 instances"


def property_gadget():
    rng = np.random.default_rng(77)
    for _ in range(200):
        d = int(rng.integers(1, 4))
        t = box_stage(0.0, 3.0, d, integer=bool(rng.random() < 0.5), cost=rng.uniform(-2, 2, d))
        pool = random_pool(rng, d, 0.0, 3.0, int(rng.integers(1, 8)))
        check_stage_solution(t, pool, solve_stage(t, None, [], pool), tol=1e-6)
    # every engine run in this module checks the same invariant at each stage optimum
    return True, "gadget exactness: 200 random pools plus every engine stage solve"


def property_weak_duality():
    worst = -np.inf
    for seed in range(3):
        tree, templates, _ = random_instance(seed, T=2)
        rng = np.random.default_rng(seed)
        t0 = templates[0]
        for _ in range(10):
            c = rng.uniform(t0.state_lo, t0.state_hi)
            exact = expected_value(tree, templates, tree.root, c)
            for scale in (0.0, 1.0, 10.0):
                for rho in (0.0, 0.5, 5.0, 50.0):
                    cut = successor_cuts(tree, templates, tree.root, c, scale * rng.standard_normal(c.size), rho)
                    worst = max(worst, cut.v - exact)
    return worst <= 1e-6, f"weak duality: worst v - Q {worst:.1e}"


def property_sampled_bound():
    spec = ControlProblemSpec(T=3, noise=(-1.0, 0.0, 1.0))
    tree, templates, floors = gen_control1d(spec, materialize=True)
    exact = node_value(tree, templates, tree.root, [spec.x0])
    ok, worst = True, -np.inf
    for family in ("rn", "sab"):
        for delta in (0.25, 1.0):
            cfg = SldpConfig(mode="sampled", cuts=family, rho=2.0, delta=delta, max_iterations=60, seed=3)
            res = run_sampled(tree, templates, cfg, floors)
            ALL_RUNS.append((f"sampled {family} delta={delta}", res.lower_bounds))
            gap = exact - res.lb
            ok &= -1e-6 <= gap <= res.epsilon_bound + 1e-6
            worst = max(worst, gap - res.epsilon_bound)
    return ok, f"sampled epsilon bound: worst gap minus bound {worst:.3f}"


def test_criterion_7_property_suites():
    parts = [property_milp_kernel(), property_gadget(), property_weak_duality(), property_sampled_bound(),
             property_cut_validity()]
    mono = all(np.all(np.diff(lbs) >= -1e-7 * np.maximum(1.0, np.abs(lbs[1:]))) for _, lbs in ALL_RUNS)
    parts.append((mono, f"LB monotone on all {len(ALL_RUNS)} runs"))
    ok = all(p[0] for p in parts)
    report(7, ok, "; ".join(p[1] for p in parts))
    assert ok


# 8 ---------------------------------------------------------------------------

def test_criterion_8_divergent_rho():
    t = fractional_part_stage()
    X = np.linspace(0.0, 2.0, 4001)
    g = np.array([solve_stage(t, None, [x], None).objective for x in X])
    rhos = []
    for c in (0.5, 0.9, 0.99):
        gc = solve_stage(t, None, [c], None).objective
        rho = minimal_reverse_norm_rho(g, X[:, None], gc, [c])
        assert np.all(reverse_norm_cut([(1.0, gc)], [c], rho).evaluate(X[:, None]) <= g + 1e-9)
        rhos.append(rho)
    ok = rhos[0] < rhos[1] < rhos[2]
    report(8, ok, "minimal tight rho at 0.5 / 0.9 / 0.99: " + " / ".join(f"{r:.2f}" for r in rhos))
    assert ok


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
