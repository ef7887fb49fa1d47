"""Lipschitz cuts and the cut pools that hold them.

A cut reads ``alpha >= v + lam @ (x - center) - rho * ||x - center||_1``.
``lam = 0`` is a reverse-norm cut, ``rho = 0`` a linear Benders cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sldp.errors import CenterOutsideBox

BOX_TOL = 1e-9


@dataclass
class Cut:
    center: np.ndarray
    v: float
    lam: np.ndarray
    rho: float
    family: str = "custom"
    origin: object = None
    iteration: int = -1

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(-1)
        self.lam = np.broadcast_to(np.asarray(self.lam, dtype=float), self.center.shape).copy()
        self.v = float(self.v)
        self.rho = float(self.rho)
        if self.rho < 0:
            raise ValueError("cut opening rho must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the cut with respect to the L1 norm."""
        return float(np.max(np.abs(self.lam), initial=0.0)) + self.rho

    def evaluate(self, x) -> np.ndarray | float:
        """Cut value at ``x``; ``x`` may be one point or a ``(k, d)`` array of points."""
        x = np.asarray(x, dtype=float)
        diff = x - self.center
        val = self.v + diff @ self.lam - self.rho * np.abs(diff).sum(axis=-1)
        return float(val) if np.ndim(val) == 0 else val

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "v": self.v,
            "lam": self.lam.tolist(),
            "rho": self.rho,
            "family": self.family,
            "origin": _plain(self.origin),
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cut":
        origin = d.get("origin")
        return cls(d["center"], d["v"], d["lam"], d["rho"], d.get("family", "custom"),
                   tuple(origin) if isinstance(origin, list) else origin, d.get("iteration", -1))


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(o) for o in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


@dataclass
class CutPool:
    """Cuts approximating one expected cost-to-go function from below.

    With ``drop_dominated`` the pool skips a new cut that an existing cut with
    the same center and slope dominates everywhere, and retires old cuts the
    new one dominates. The represented function is unchanged either way.
    """

    floor: float
    lo: np.ndarray
    hi: np.ndarray
    key: object = None
    drop_dominated: bool = True
    cuts: list = field(default_factory=list)
    added: int = 0

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).reshape(-1)
        self.hi = np.asarray(self.hi, dtype=float).reshape(-1)
        self.floor = float(self.floor)

    @property
    def dim(self) -> int:
        return self.lo.size

    def __len__(self):
        return len(self.cuts)

    def check_center(self, center) -> None:
        c = np.asarray(center, dtype=float)
        if c.size != self.dim:
            raise CenterOutsideBox(f"cut center has dimension {c.size}, pool expects {self.dim}")
        tol = BOX_TOL * (1.0 + np.abs(self.hi - self.lo))
        if np.any(c < self.lo - tol) or np.any(c > self.hi + tol):
            raise CenterOutsideBox(f"cut center {c} outside state box [{self.lo}, {self.hi}]")

    def add(self, cut: Cut) -> bool:
        """Append ``cut``; returns False when it was skipped as dominated."""
        self.check_center(cut.center)
        if self.drop_dominated:
            keep = []
            for old in self.cuts:
                same = np.array_equal(old.center, cut.center) and np.array_equal(old.lam, cut.lam)
                if same and cut.v <= old.v and cut.rho >= old.rho:
                    return False
                if not (same and cut.v >= old.v and cut.rho <= old.rho):
                    keep.append(old)
            self.cuts = keep
        self.cuts.append(cut)
        self.added += 1
        return True

    def value(self, x) -> np.ndarray | float:
        return evaluate_pool(self, x)

    @property
    def lipschitz(self) -> float:
        return max((c.lipschitz for c in self.cuts), default=0.0)

    def to_dict(self) -> dict:
        return {
            "key": _plain(self.key),
            "floor": self.floor,
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "cuts": [c.to_dict() for c in self.cuts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CutPool":
        key = d.get("key")
        pool = cls(d["floor"], d["lo"], d["hi"], tuple(key) if isinstance(key, list) else key)
        pool.cuts = [Cut.from_dict(c) for c in d["cuts"]]
        pool.added = len(pool.cuts)
        return pool


def evaluate_pool(pool: CutPool, x) -> np.ndarray | float:
    """``max(floor, max_k cut_k(x))``, for one point or a ``(k, d)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        best = pool.floor
        for c in pool.cuts:
            best = max(best, c.evaluate(x))
        return float(best)
    best = np.full(x.shape[0], pool.floor)
    for c in pool.cuts:
        np.maximum(best, c.evaluate(x), out=best)
    return best
