"""Forward/backward passes of SLDP on a full tree or along sampled paths.

The root's stage problem gives the lower bound. Each backward visit of a
node adds one cut, aggregated over the node's successors, to the node's pool
(or the stage's pool when pools are shared).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from sldp.cuts import (
    FAMILIES,
    RhoSchedule,
    aggregate,
    reverse_norm_cut,
    stage_duals,
    strengthened_aug_benders_cut,
    strengthened_benders_cut,
)
from sldp.errors import MalformedProblem, SldpError
from sldp.pool import CutPool, evaluate_pool
from sldp.stage import DUAL_SOURCES, check_stage_solution, solve_stage

log = logging.getLogger("sldp")

MODES = ("full", "sampled")
LB_TOL = 1e-7


@dataclass
class SldpConfig:
    """Run configuration.

    The cut opening is ``rho`` when given (a number, or one per stage), else
    the progressive schedule ``rho0 * gamma ** (k // rho_period)`` capped at
    ``rho_max``. ``floors[t-1]`` bounds stage t's expected cost-to-go from
    below; ``None`` falls back to the generator's floors, then to 0.
    """

    mode: str = "full"
    cuts: str = "sab"
    rho: float | list | None = None
    rho0: float = 1.0
    gamma: float = 2.0
    rho_max: float = math.inf
    rho_period: int = 10
    delta: float = 0.0
    floors: list | None = None
    max_iterations: int = 100
    tol: float = 0.0
    window: int = 5
    seed: int = 0
    sim_samples: int = 0
    backend: str = "highs"
    lp_backend: str = "native"
    dual_source: str = "relaxation"
    drop_dominated: bool = True
    lipschitz_bound: float | None = None
    check_invariants: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise MalformedProblem(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cuts not in FAMILIES:
            raise MalformedProblem(f"cut family must be one of {FAMILIES}, got {self.cuts!r}")
        if self.dual_source not in DUAL_SOURCES:
            raise MalformedProblem(f"dual source must be one of {DUAL_SOURCES}")
        if self.delta < 0:
            raise MalformedProblem("delta must be nonnegative")
        if self.max_iterations < 0:
            raise MalformedProblem("max_iterations must be nonnegative")
        if self.window < 1:
            raise MalformedProblem("window must be positive")
        self.schedule  # validates the schedule parameters

    @property
    def schedule(self) -> RhoSchedule:
        return RhoSchedule(self.rho0, self.gamma, self.rho_max, self.rho_period)

    def rho_at(self, k: int, stage: int) -> float:
        if self.rho is None:
            return self.schedule(k)
        if np.ndim(self.rho) == 0:
            return float(self.rho)
        return float(self.rho[stage - 1])

    @property
    def guaranteed(self) -> bool:
        """Sampled runs only carry the epsilon guarantee with ``delta > 0``."""
        return self.mode == "full" or self.delta > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho_max"] = None if math.isinf(self.rho_max) else self.rho_max
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SldpConfig":
        d = dict(d)
        if d.get("rho_max") is None:
            d["rho_max"] = math.inf
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise MalformedProblem(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class IterationRecord:
    k: int
    lb: float
    cuts_total: int
    stage_solves: int
    wall_ms: float
    states: dict


@dataclass
class RunResult:
    config: SldpConfig
    records: list
    pools: dict
    lb_initial: float
    policy: dict | None = None
    epsilon_bound: float | None = None
    first_stage_state: np.ndarray | None = None

    @property
    def lower_bounds(self) -> list[float]:
        return [r.lb for r in self.records]

    @property
    def lb(self) -> float:
        return self.records[-1].lb if self.records else self.lb_initial

    @property
    def iterations(self) -> int:
        return len(self.records)


def stabilize_state(candidate, history: list, delta: float) -> np.ndarray:
    """Snap ``candidate`` to the nearest stored state if it is closer than ``delta``.

    Distances are L1 and ties go to the lowest index. A candidate that is not
    snapped is appended to ``history``.
    """
    u = np.asarray(candidate, dtype=float).reshape(-1)
    if history:
        dist = np.abs(np.asarray(history) - u).sum(axis=1)
        i = int(np.argmin(dist))
        if dist[i] < delta:
            return np.array(history[i], dtype=float)
        if dist[i] == 0.0:
            return u
    history.append(u.copy())
    return u


class _Engine:
    def __init__(self, tree, templates, config: SldpConfig, floors=None, pools=None):
        if len(templates) < tree.horizon:
            raise MalformedProblem(f"{len(templates)} templates for a {tree.horizon}-stage tree")
        self.tree = tree
        self.templates = templates
        self.config = config
        self.floors = self._floors(floors)
        self.pools = {} if pools is None else pools
        self.solves = 0
        root_t = templates[0]
        if np.any(root_t.copy_lo != root_t.copy_hi):
            raise MalformedProblem("the root's copy box must pin the initial state (lo == hi)")
        self.x0 = root_t.copy_lo.copy()

    def _floors(self, floors):
        T = self.tree.horizon
        src = self.config.floors if self.config.floors is not None else floors
        if src is None:
            return [0.0] * T
        if np.ndim(src) == 0:
            return [float(src)] * T
        if len(src) < T:
            raise MalformedProblem(f"{len(src)} floors for {T} stages")
        return [float(f) for f in src]

    def template(self, n):
        return self.templates[self.tree.stage(n) - 1]

    def pool(self, n) -> CutPool | None:
        if self.tree.is_leaf(n):
            return None
        key = self.tree.pool_key(n)
        pool = self.pools.get(key)
        if pool is None:
            t = self.template(n)
            pool = CutPool(self.floors[self.tree.stage(n) - 1], t.state_lo, t.state_hi, key,
                           self.config.drop_dominated)
            self.pools[key] = pool
        return pool

    def solve(self, n, incoming):
        self.solves += 1
        pool = self.pool(n)
        sol = solve_stage(self.template(n), self.tree.payload(n), incoming, pool,
                          backend=self.config.backend, lp_backend=self.config.lp_backend, node=n)
        if self.config.check_invariants:
            check_stage_solution(self.template(n), pool, sol)
        return sol

    def backward_cut(self, n, center, k):
        cfg = self.config
        stage = self.tree.stage(n)
        kids = self.tree.children(n)
        origin = ("node", n) if not isinstance(n, tuple) else ("path", list(n))
        if cfg.cuts == "rn":
            vals = [(q, self.solve(m, center).objective) for m, q in kids]
            cut = reverse_norm_cut(vals, center, cfg.rho_at(k, stage), origin=origin, iteration=k)
        else:
            rho = cfg.rho_at(k, stage) if cfg.cuts == "sab" else 0.0
            parts = []
            for m, q in kids:
                t, scen, pool = self.template(m), self.tree.payload(m), self.pool(m)
                lam = stage_duals(t, scen, pool, center, dual_source=cfg.dual_source,
                                  backend=cfg.backend, lp_backend=cfg.lp_backend, node=m)
                self.solves += 2
                if cfg.cuts == "sb":
                    c = strengthened_benders_cut(t, scen, pool, center, lam=lam, backend=cfg.backend, node=m)
                else:
                    c = strengthened_aug_benders_cut(t, scen, pool, center, lam, rho,
                                                     backend=cfg.backend, node=m)
                parts.append((q, c))
            cut = aggregate(parts, origin=origin, iteration=k)
        self.pool(n).add(cut)

    @property
    def cuts_total(self) -> int:
        return sum(len(p) for p in self.pools.values())


def _check_lb(prev: float, lb: float, k: int) -> None:
    if lb < prev - LB_TOL * max(1.0, abs(prev)):
        raise SldpError(f"lower bound decreased at iteration {k}: {prev} -> {lb}")


def _stalled(lbs: list, tol: float, window: int) -> bool:
    if tol <= 0 or len(lbs) <= window:
        return False
    gain = lbs[-1] - lbs[-1 - window]
    return gain < tol * max(1.0, abs(lbs[-1]))


def _run(tree, templates, config, floors, sampled: bool) -> RunResult:
    eng = _Engine(tree, templates, config, floors)
    rng = np.random.default_rng(config.seed)
    root = tree.root
    T = tree.horizon
    histories: dict = {}
    root_sol = eng.solve(root, eng.x0)
    lb_initial = root_sol.objective
    records = []
    lbs = []
    t0 = time.perf_counter()
    for k in range(config.max_iterations):
        if T == 1:
            lb = root_sol.objective
        else:
            if sampled:
                visit = tree.sample_path(rng)[:-1]
            else:
                visit = [n for t in range(1, T) for n in tree.nodes_at_stage(t)]
            states = {}
            for n in visit:
                if n == root:
                    sol = root_sol
                else:
                    sol = eng.solve(n, states[tree.parent(n)])
                x = sol.state
                if sampled and config.delta > 0:
                    x = stabilize_state(x, histories.setdefault(tree.history_key(n), []), config.delta)
                states[n] = x
            for n in reversed(visit):
                eng.backward_cut(n, states[n], k)
            root_sol = eng.solve(root, eng.x0)
            lb = root_sol.objective
        if lbs:
            _check_lb(lbs[-1], lb, k)
        lbs.append(lb)
        shown = {} if T == 1 else {_key(n): states[n].tolist() for n in visit[:64]}
        records.append(IterationRecord(k + 1, lb, eng.cuts_total, eng.solves,
                                       (time.perf_counter() - t0) * 1e3, shown))
        log.info("iter %d lb %.6f cuts %d solves %d", k + 1, lb, eng.cuts_total, eng.solves)
        if _stalled(lbs, config.tol, config.window):
            break

    result = RunResult(config, records, eng.pools, lb_initial, first_stage_state=root_sol.state)
    if sampled and config.delta > 0:
        result.epsilon_bound = epsilon_bound(eng, config, T)
    if config.sim_samples > 0:
        result.policy = simulate_policy(tree, templates, eng.pools, config.sim_samples,
                                        config.seed + 1, config=config, floors=eng.floors)
    return result


def _key(n):
    return str(n) if isinstance(n, tuple) else int(n)


def epsilon_bound(eng: _Engine, config: SldpConfig, T: int) -> float:
    """``(L + rho) * delta * (T - 1)`` with tree-wide maxima of L and rho."""
    L = config.lipschitz_bound
    if L is None:
        L = max((p.lipschitz for p in eng.pools.values()), default=0.0)
    rho = max((c.rho for p in eng.pools.values() for c in p.cuts), default=0.0)
    return (L + rho) * config.delta * (T - 1)


def run_full(tree, templates, config: SldpConfig | None = None, floors=None) -> RunResult:
    """Full-tree forward and backward passes over every node."""
    config = config or SldpConfig(mode="full")
    if config.mode != "full":
        raise MalformedProblem("run_full needs mode='full'")
    return _run(tree, templates, config, floors, sampled=False)


def run_sampled(tree, templates, config: SldpConfig | None = None, floors=None) -> RunResult:
    """One sampled root-to-leaf path per iteration, with delta-stabilized states."""
    config = config or SldpConfig(mode="sampled")
    if config.mode != "sampled":
        raise MalformedProblem("run_sampled needs mode='sampled'")
    if config.delta == 0:
        log.warning("delta = 0: sampled run carries no epsilon guarantee")
    return _run(tree, templates, config, floors, sampled=True)


def run(tree, templates, config: SldpConfig, floors=None) -> RunResult:
    if config.mode == "full":
        return run_full(tree, templates, config, floors)
    return run_sampled(tree, templates, config, floors)


def simulate_policy(tree, templates, pools: dict, n_samples: int, seed: int = 0, *,
                    config: SldpConfig | None = None, floors=None) -> dict:
    """Monte Carlo cost of the policy induced by ``pools``.

    Each sample walks one root-to-leaf path, solving every stage with its
    cost-to-go approximation and accumulating only the immediate costs.
    With a single sample the standard error is reported as 0.
    """
    config = config or SldpConfig()
    eng = _Engine(tree, templates, config, floors, pools=dict(pools))
    rng = np.random.default_rng(seed)
    costs = np.empty(n_samples)
    for s in range(n_samples):
        incoming = eng.x0
        total = 0.0
        for n in tree.sample_path(rng):
            sol = eng.solve(n, incoming)
            total += sol.immediate_cost
            incoming = sol.state
        costs[s] = total
    mean = float(costs.mean()) if n_samples else math.nan
    stderr = float(costs.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return {"mean": mean, "stderr": stderr, "samples": int(n_samples)}


def pool_values(pool: CutPool, grid) -> np.ndarray:
    return evaluate_pool(pool, np.asarray(grid, dtype=float))
