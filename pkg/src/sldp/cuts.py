"""Cut families and their aggregation over successors.

* reverse-norm: ``v = sum q_m Q_m(c)``, ``lam = 0``, opening ``rho``;
* strengthened Benders: ``lam`` from copy-row duals, ``v`` from the copy
  relaxation ``min f + Qbar + lam @ (c - z)``, ``rho = 0``;
* strengthened augmented Benders: as above with ``+ rho * ||z - c||_1`` in
  the relaxed objective, giving a valid cut with opening ``rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sldp.errors import CenterMismatch, ProbabilityMismatch, SldpError, StageInfeasible
from sldp.milp import Status, solve_milp
from sldp.pool import Cut, CutPool, evaluate_pool
from sldp.stage import StageTemplate, copy_relaxation, relaxation_duals, solve_stage

FAMILIES = ("rn", "sb", "sab")
FAMILY_NAMES = {"rn": "reverse-norm", "sb": "strengthened-benders", "sab": "strengthened-aug-benders"}


def reverse_norm_cut(successor_values, center, rho: float, **provenance) -> Cut:
    """Cut tight at ``center`` from ``[(q_m, Q_m(center)), ...]``."""
    if rho <= 0:
        raise ValueError("reverse-norm cuts need rho > 0")
    qs = np.array([q for q, _ in successor_values], dtype=float)
    vals = np.array([v for _, v in successor_values], dtype=float)
    if abs(qs.sum() - 1.0) > 1e-9:
        raise ProbabilityMismatch(f"successor probabilities sum to {qs.sum()}")
    center = np.asarray(center, dtype=float).reshape(-1)
    return Cut(center, float(qs @ vals), np.zeros(center.size), rho, "rn", **provenance)


def _relaxed_value(template, scenario, pool, center, lam, rho, backend, node) -> float:
    p, constant = copy_relaxation(template, scenario, pool, center, lam, rho)
    sol = solve_milp(p, backend=backend)
    if sol.status is Status.INFEASIBLE:
        raise StageInfeasible(node, "copy relaxation infeasible")
    if sol.status is not Status.OPTIMAL:
        raise SldpError(f"copy relaxation at node {node!r} is {sol.status.value}")
    return float(sol.objective + constant)


def stage_duals(template, scenario, pool, center, *, dual_source="relaxation",
                backend="highs", lp_backend="native", node=None) -> np.ndarray:
    """Copy-row duals at ``center``: LP relaxation, or LP with integers fixed."""
    if dual_source == "relaxation":
        return relaxation_duals(template, scenario, center, pool, lp_backend=lp_backend, node=node)
    sol = solve_stage(template, scenario, center, pool, backend=backend, lp_backend=lp_backend,
                      duals=dual_source, node=node)
    return sol.duals


def strengthened_benders_cut(template: StageTemplate, scenario, pool: CutPool | None, center, *,
                             lam=None, dual_source="relaxation", backend="highs",
                             lp_backend="native", node=None, **provenance) -> Cut:
    """Per-successor strengthened Benders cut (before aggregation)."""
    center = np.asarray(center, dtype=float).reshape(-1)
    if lam is None:
        lam = stage_duals(template, scenario, pool, center, dual_source=dual_source,
                          backend=backend, lp_backend=lp_backend, node=node)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), center.shape).copy()
    v = _relaxed_value(template, scenario, pool, center, lam, 0.0, backend, node)
    return Cut(center, v, lam, 0.0, "sb", **provenance)


def strengthened_aug_benders_cut(template: StageTemplate, scenario, pool: CutPool | None, center,
                                 lam, rho: float, *, backend="highs", node=None,
                                 **provenance) -> Cut:
    """Per-successor strengthened augmented Benders cut for fixed ``(lam, rho)``."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    center = np.asarray(center, dtype=float).reshape(-1)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), center.shape).copy()
    v = _relaxed_value(template, scenario, pool, center, lam, rho, backend, node)
    return Cut(center, v, lam, rho, "sab", **provenance)


def aggregate(successor_cuts, **provenance) -> Cut:
    """Probability-weighted sum of cuts sharing one center."""
    if not successor_cuts:
        raise ValueError("nothing to aggregate")
    center = successor_cuts[0][1].center
    for _, cut in successor_cuts:
        if cut.center.shape != center.shape or not np.allclose(cut.center, center, rtol=0, atol=1e-12):
            raise CenterMismatch("aggregated cuts must share their center")
    qs = np.array([q for q, _ in successor_cuts], dtype=float)
    if abs(qs.sum() - 1.0) > 1e-9:
        raise ProbabilityMismatch(f"successor probabilities sum to {qs.sum()}")
    v = float(sum(q * c.v for q, c in successor_cuts))
    lam = sum(q * c.lam for q, c in successor_cuts)
    rho = float(sum(q * c.rho for q, c in successor_cuts))
    families = {c.family for _, c in successor_cuts}
    family = families.pop() if len(families) == 1 else "mixed"
    return Cut(center, v, lam, rho, family, **provenance)


def minimal_reverse_norm_rho(values, points, center_value: float, center) -> float:
    """Smallest ``rho`` keeping the tight cut ``center_value - rho * ||x - c||_1``
    below ``values`` at every one of ``points`` (a ``(k, d)`` array)."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.abs(X - np.asarray(center, dtype=float).reshape(1, -1)).sum(axis=1)
    drop = center_value - np.asarray(values, dtype=float)
    need = np.where(dist > 0, drop / np.where(dist > 0, dist, 1.0), 0.0)
    return float(max(need.max(initial=0.0), 0.0))


@dataclass(frozen=True)
class RhoSchedule:
    """``rho_k = min(rho0 * gamma ** floor(k / period), rho_max)``."""

    rho0: float = 1.0
    gamma: float = 2.0
    rho_max: float = math.inf
    period: int = 10

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.period < 1:
            raise ValueError("period must be >= 1")

    def __call__(self, k: int) -> float:
        return rho_schedule(k, self)


def rho_schedule(k: int, config) -> float:
    """Progressive opening; ``config`` is a :class:`RhoSchedule` or a mapping."""
    if not isinstance(config, RhoSchedule):
        config = RhoSchedule(**dict(config))
    steps = k // config.period
    if config.gamma == 1.0:
        return min(config.rho0, config.rho_max)
    # compare in log space so huge k never overflows
    if math.log(config.rho0) + steps * math.log(config.gamma) >= math.log(config.rho_max):
        return float(config.rho_max)
    return float(config.rho0 * config.gamma ** steps)


__all__ = [
    "Cut", "CutPool", "FAMILIES", "RhoSchedule", "aggregate", "evaluate_pool", "minimal_reverse_norm_rho",
    "reverse_norm_cut",
    "rho_schedule", "stage_duals", "strengthened_aug_benders_cut", "strengthened_benders_cut",
]
