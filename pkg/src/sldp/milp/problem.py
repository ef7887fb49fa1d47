from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from sldp.errors import MalformedProblem

FEAS_TOL = 1e-7
INT_TOL = 1e-6

SENSES = ("<=", "=", ">=")


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class MilpProblem:
    """Bounded mixed-integer linear program, minimization, dense row form.

    Rows are ``A[i] @ x  sense[i]  b[i]``. Continuous variables may have
    infinite bounds; integer variables may not.
    """

    c: np.ndarray
    A: np.ndarray
    senses: tuple
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    names: list | None = field(default=None, compare=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        n = self.c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise MalformedProblem(
                f"row coefficient length {A.shape[-1] if A.ndim == 2 else A.shape} != num_vars {n}")
        self.A = A
        self.senses = tuple(self.senses)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(self.senses) != A.shape[0] or self.b.size != A.shape[0]:
            raise MalformedProblem("senses/rhs length does not match number of rows")
        for s in self.senses:
            if s not in SENSES:
                raise MalformedProblem(f"unknown row sense {s!r}")
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        self.integer = np.broadcast_to(np.asarray(self.integer, dtype=bool), (n,)).copy()
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise MalformedProblem(f"variable {j}: lower bound {self.lb[j]} > upper bound {self.ub[j]}")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(np.isnan(self.A)):
            raise MalformedProblem("NaN in problem data")
        bad = self.integer & ~(np.isfinite(self.lb) & np.isfinite(self.ub))
        if np.any(bad):
            raise MalformedProblem(f"integer variable {int(np.argmax(bad))} has an infinite bound")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_rows(cls, c, rows, lb, ub, integer=False):
        """Build from ``rows = [(coefficients, sense, rhs), ...]``."""
        n = len(c)
        A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        return cls(c, A, [r[1] for r in rows], [r[2] for r in rows], lb, ub, integer)

    def copy(self) -> "MilpProblem":
        return MilpProblem(self.c.copy(), self.A.copy(), self.senses, self.b.copy(),
                           self.lb.copy(), self.ub.copy(), self.integer.copy(),
                           None if self.names is None else list(self.names))

    def with_bounds(self, lb, ub) -> "MilpProblem":
        p = self.copy()
        p.lb = np.asarray(lb, dtype=float).copy()
        p.ub = np.asarray(ub, dtype=float).copy()
        return p

    def relaxed(self) -> "MilpProblem":
        p = self.copy()
        p.integer = np.zeros(self.num_vars, dtype=bool)
        return p

    def residuals(self, x) -> np.ndarray:
        """Per-row constraint violation (>= 0) at ``x``."""
        ax = self.A @ x
        viol = np.zeros(self.num_rows)
        for i, s in enumerate(self.senses):
            if s == "<=":
                viol[i] = max(ax[i] - self.b[i], 0.0)
            elif s == ">=":
                viol[i] = max(self.b[i] - ax[i], 0.0)
            else:
                viol[i] = abs(ax[i] - self.b[i])
        return viol

    def is_feasible(self, x, tol=FEAS_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lb - tol) or np.any(x > self.ub + tol):
            return False
        scale = 1.0 + np.abs(self.b)
        return bool(np.all(self.residuals(x) <= tol * scale))


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None
    iterations: int = 0


@dataclass
class MilpSolution:
    status: Status
    x: np.ndarray | None
    objective: float
    best_bound: float
    node_count: int = 0
