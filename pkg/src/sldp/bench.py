"""Generators for the two case studies.

* a 1-D control problem ``x_t = x_{t-1} + c_t + xi_t`` with ``c_t = +-1`` and
  discounted cost ``beta**(t-1) * |x_t|``;
* the two-stage Caroe-Schultz knapsack recourse with an ``N x N`` grid of
  right-hand sides on ``[5, 15]**2``.

Each generator returns ``(tree, templates, floors)`` where ``templates`` is a
list indexed by stage minus one and ``floors[t-1]`` is a valid lower bound on
stage t's expected cost-to-go.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sldp.milp import MilpProblem
from sldp.stage import Scenario, StageTemplate
from sldp.tree import StagewiseLattice, build_stagewise_tree

DEFAULT_NOISE = (-0.9, -0.7, -0.5, -0.3, -0.1, 0.1, 0.3, 0.5, 0.7, 0.9)
WIDE_NOISE = (-2.7, -2.1, -1.5, -0.9, -0.3, 0.3, 0.9, 1.5, 2.1, 2.7)
DEFAULT_BOX = (-6.0, 6.0)
CS_COST = (-16.0, -19.0, -23.0, -28.0)
CS_W1 = (2.0, 3.0, 4.0, 5.0)
CS_W2 = (6.0, 1.0, 3.0, 2.0)


@dataclass
class ControlProblemSpec:
    """1-D control instance.

    A fixed ``state_box`` keeps every stage feasible only while the noise
    stays within 1 in magnitude (the control can then always pull the state
    back inside). ``state_box=None`` sizes the box to the worst-case drift
    instead, which any noise set allows.
    """

    T: int = 8
    beta: float = 0.9
    x0: float = 2.0
    noise: tuple = DEFAULT_NOISE
    state_box: tuple | None = DEFAULT_BOX

    def __post_init__(self):
        xi = np.sort(np.asarray(self.noise, dtype=float))
        if xi.size == 0:
            raise ValueError("noise set is empty")
        if not np.allclose(xi, -xi[::-1], atol=1e-12):
            raise ValueError("noise set must be symmetric about 0")
        if self.T < 1:
            raise ValueError("horizon must be at least 1")
        if self.state_box is not None:
            lo, hi = self.state_box
            if hi - lo < 2 or not lo <= self.x0 <= hi:
                raise ValueError("state box must contain x0 and be at least 2 wide")
            if np.max(np.abs(xi)) > 1:
                raise ValueError("noise above 1 in magnitude can leave a fixed state box; "
                                 "pass state_box=None for a drift-sized box")

    def box(self) -> tuple[float, float]:
        if self.state_box is not None:
            lo, hi = self.state_box
            return float(lo), float(hi)
        # no trajectory can leave this box, whatever the controls
        reach = abs(self.x0) + self.T + (self.T - 1) * float(np.max(np.abs(self.noise)))
        return -reach, reach


def _control_stage(t: int, spec: ControlProblemSpec, lo: float, hi: float) -> StageTemplate:
    # variables: x (state), z (copy), b (binary control), p, n (|x| split)
    big = max(abs(lo), abs(hi))
    w = spec.beta ** (t - 1)
    c = [0.0, 0.0, 0.0, w, w]
    rows = [
        ([1.0, -1.0, -2.0, 0.0, 0.0], "=", -1.0),  # x = z + 2b - 1 + xi
        ([1.0, 0.0, 0.0, -1.0, 1.0], "=", 0.0),    # x = p - n
    ]
    copy_box = (spec.x0, spec.x0) if t == 1 else (lo, hi)
    p = MilpProblem.from_rows(c, rows, [lo, copy_box[0], 0, 0, 0], [hi, copy_box[1], 1, big, big],
                              [False, False, True, False, False])
    p.names = ["x", "z", "b", "p", "n"]
    return StageTemplate(p, [0], [1], [lo], [hi], [copy_box[0]], [copy_box[1]],
                         lipschitz=w, name=f"control-t{t}")


def gen_control1d(spec: ControlProblemSpec | None = None, materialize: bool = False):
    """Lazy stagewise tree (or a materialized one) plus one template per stage."""
    spec = spec or ControlProblemSpec()
    lo, hi = spec.box()
    q = 1.0 / len(spec.noise)
    stages = [[(Scenario(rhs=[0.0, 0.0], name="xi=0"), 1.0)]]
    for _ in range(2, spec.T + 1):
        stages.append([(Scenario(rhs=[float(xi), 0.0], name=f"xi={xi:g}"), q) for xi in spec.noise])
    tree = build_stagewise_tree(stages, share_pools=True) if materialize else StagewiseLattice(stages)
    templates = [_control_stage(t, spec, lo, hi) for t in range(1, spec.T + 1)]
    floors = [0.0] * spec.T
    return tree, templates, floors


@dataclass
class CaroeSchultzSpec:
    N: int = 2
    discrete_first_stage: bool = True
    omega_lo: float = 5.0
    omega_hi: float = 15.0
    x_box: tuple = field(default=(0.0, 5.0))

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")

    def omega_axis(self) -> np.ndarray:
        if self.N == 1:
            return np.array([(self.omega_lo + self.omega_hi) / 2])
        return np.linspace(self.omega_lo, self.omega_hi, self.N)

    def omega_grid(self) -> list[tuple[float, float]]:
        axis = self.omega_axis()
        return [(float(a), float(b)) for a in axis for b in axis]


def caroe_schultz_first_stage(spec: CaroeSchultzSpec) -> StageTemplate:
    lo, hi = spec.x_box
    p = MilpProblem([-1.5, -4.0], np.zeros((0, 2)), [], [], [lo, lo], [hi, hi],
                    spec.discrete_first_stage)
    p.names = ["x1", "x2"]
    return StageTemplate(p, [0, 1], [], [lo, lo], [hi, hi], [], [], name="caroe-schultz-1")


def caroe_schultz_second_stage(spec: CaroeSchultzSpec) -> StageTemplate:
    lo, hi = spec.x_box
    # variables: y1..y4 (binary), z1, z2 (copies of x)
    rows = [
        (list(CS_W1) + [1.0, 0.0], "<=", 0.0),
        (list(CS_W2) + [0.0, 1.0], "<=", 0.0),
    ]
    p = MilpProblem.from_rows(list(CS_COST) + [0.0, 0.0], rows, [0, 0, 0, 0, lo, lo],
                              [1, 1, 1, 1, hi, hi], [True] * 4 + [False] * 2)
    p.names = ["y1", "y2", "y3", "y4", "z1", "z2"]
    return StageTemplate(p, [], [4, 5], [], [], [lo, lo], [hi, hi], name="caroe-schultz-2")


def gen_caroe_schultz(spec: CaroeSchultzSpec | None = None):
    """Two-stage tree with N*N equiprobable leaves and the two stage templates."""
    spec = spec or CaroeSchultzSpec()
    grid = spec.omega_grid()
    q = 1.0 / len(grid)
    stages = [
        [(Scenario(name="root"), 1.0)],
        [(Scenario(rhs=[w1, w2], name=f"omega=({w1:g},{w2:g})"), q) for w1, w2 in grid],
    ]
    tree = build_stagewise_tree(stages)
    templates = [caroe_schultz_first_stage(spec), caroe_schultz_second_stage(spec)]
    # the recourse cost is never below the sum of all negative coefficients
    floors = [float(sum(CS_COST)), 0.0]
    return tree, templates, floors


def fractional_part_stage(hi: float = 2.0) -> StageTemplate:
    """Stage whose value at incoming ``z`` in ``[0, hi]`` is ``z - floor(z)``.

    Variables ``s`` (continuous, the value), ``k`` (integer) and the copy
    ``z``. The row ``s + k - z = 0`` with ``s >= 0`` makes the minimum of
    ``s`` the fractional part, reached at ``k = floor(z)``.
    """
    p = MilpProblem.from_rows([1.0, 0.0, 0.0], [([1.0, 1.0, -1.0], "=", 0.0)],
                              [0.0, 0.0, 0.0], [np.inf, np.floor(hi), hi], [False, True, False])
    p.names = ["s", "k", "z"]
    return StageTemplate(p, [], [2], [], [], [0.0], [hi], name="fractional-part")
