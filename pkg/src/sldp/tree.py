"""Scenario trees: a materialized tree and a lazy stagewise-independent lattice.

Both expose the same handle interface used by the engine:

``root``, ``horizon``, ``stage(n)``, ``children(n)`` (list of ``(child, q)``),
``payload(n)``, ``parent(n)`` and ``pool_key(n)``.

Node handles are ints for :class:`ScenarioTree` and index tuples for
:class:`StagewiseLattice`. Stages are numbered from 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sldp.errors import NodeCapExceeded, ProbabilityMismatch

PROB_TOL = 1e-12
NODE_CAP = 10**5


@dataclass
class Node:
    id: int
    stage: int
    parent: int | None
    prob: float
    payload: object
    children: list = field(default_factory=list)


class ScenarioTree:
    """Explicit tree. Node 0 is the root at stage 1.

    ``share_pools`` makes every node of a stage use one cut pool, which is
    sound when the tree is stagewise independent.
    """

    def __init__(self, nodes: list[Node], share_pools: bool = False):
        self.nodes = nodes
        self.share_pools = share_pools
        self.horizon = max(n.stage for n in nodes) if nodes else 0
        self._by_stage: dict[int, list[int]] = {}
        for n in nodes:
            self._by_stage.setdefault(n.stage, []).append(n.id)

    @property
    def root(self) -> int:
        return 0

    def __len__(self):
        return len(self.nodes)

    def stage(self, n: int) -> int:
        return self.nodes[n].stage

    def parent(self, n: int):
        return self.nodes[n].parent

    def payload(self, n: int):
        return self.nodes[n].payload

    def children(self, n: int) -> list:
        return [(m, self.nodes[m].prob) for m in self.nodes[n].children]

    def is_leaf(self, n: int) -> bool:
        return not self.nodes[n].children

    def nodes_at_stage(self, t: int) -> list[int]:
        return list(self._by_stage.get(t, []))

    def pool_key(self, n: int):
        return ("stage", self.nodes[n].stage) if self.share_pools else ("node", n)

    def history_key(self, n: int):
        return self.pool_key(n)

    def validate(self) -> None:
        """Raise :class:`ProbabilityMismatch` (or ``ValueError``) on a broken tree."""
        if not self.nodes:
            raise ValueError("empty tree")
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1 or roots[0].id != 0 or roots[0].stage != 1:
            raise ValueError("tree needs exactly one root, id 0, at stage 1")
        for i, n in enumerate(self.nodes):
            if n.id != i:
                raise ValueError(f"node id {n.id} stored at position {i}")
            if not n.children:
                continue
            qs = np.array([self.nodes[m].prob for m in n.children])
            if np.any(qs <= 0) or not np.all(np.isfinite(qs)):
                raise ProbabilityMismatch(f"node {n.id}: transition probabilities must be positive")
            if abs(qs.sum() - 1.0) > PROB_TOL * max(1, qs.size):
                raise ProbabilityMismatch(f"node {n.id}: probabilities sum to {qs.sum():.15g}, not 1")
            for m in n.children:
                child = self.nodes[m]
                if child.parent != n.id or child.stage != n.stage + 1:
                    raise ValueError(f"node {m}: inconsistent parent or stage")

    def sample_path(self, rng: np.random.Generator) -> list[int]:
        return _sample_path(self, rng)


def _check_stage_probs(per_stage_scenarios) -> None:
    if not per_stage_scenarios:
        raise ValueError("at least one stage is required")
    if len(per_stage_scenarios[0]) != 1:
        raise ProbabilityMismatch("stage 1 must have exactly one scenario")
    for t, scen in enumerate(per_stage_scenarios, start=1):
        if not scen:
            raise ValueError(f"stage {t} has no scenarios")
        qs = np.array([q for _, q in scen], dtype=float)
        if np.any(qs <= 0):
            raise ProbabilityMismatch(f"stage {t}: probabilities must be positive")
        if abs(qs.sum() - 1.0) > PROB_TOL * max(1, qs.size):
            raise ProbabilityMismatch(f"stage {t}: probabilities sum to {qs.sum():.15g}, not 1")


def stagewise_node_count(per_stage_scenarios) -> int:
    total, width = 0, 1
    for scen in per_stage_scenarios:
        width *= len(scen)
        total += width
    return total


def build_stagewise_tree(per_stage_scenarios, share_pools: bool = False,
                         node_cap: int = NODE_CAP) -> ScenarioTree:
    """Full product tree from per-stage ``(payload, probability)`` lists."""
    _check_stage_probs(per_stage_scenarios)
    count = stagewise_node_count(per_stage_scenarios)
    if count > node_cap:
        raise NodeCapExceeded(f"tree would have {count} nodes, cap is {node_cap}; use the lazy view")
    payload, q = per_stage_scenarios[0][0]
    nodes = [Node(0, 1, None, 1.0, payload)]
    frontier = [0]
    for t, scen in enumerate(per_stage_scenarios[1:], start=2):
        nxt = []
        for n in frontier:
            for payload, q in scen:
                m = len(nodes)
                nodes.append(Node(m, t, n, float(q), payload))
                nodes[n].children.append(m)
                nxt.append(m)
        frontier = nxt
    return ScenarioTree(nodes, share_pools=share_pools)


class StagewiseLattice:
    """Implicit stagewise-independent tree.

    A node is the tuple of scenario indices chosen so far, the root being
    ``(0,)``. Nothing is materialized, so horizons with millions of nodes
    are fine. Cut pools and forward histories are always per stage.
    """

    share_pools = True

    def __init__(self, per_stage_scenarios):
        _check_stage_probs(per_stage_scenarios)
        self.stages = [list(s) for s in per_stage_scenarios]
        self.horizon = len(self.stages)
        self._probs = [np.array([q for _, q in s], dtype=float) for s in self.stages]

    root = (0,)

    def __len__(self):
        return stagewise_node_count(self.stages)

    def stage(self, n: tuple) -> int:
        return len(n)

    def parent(self, n: tuple):
        return n[:-1] if len(n) > 1 else None

    def payload(self, n: tuple):
        return self.stages[len(n) - 1][n[-1]][0]

    def children(self, n: tuple) -> list:
        t = len(n)
        if t >= self.horizon:
            return []
        return [(n + (i,), float(q)) for i, (_, q) in enumerate(self.stages[t])]

    def is_leaf(self, n: tuple) -> bool:
        return len(n) >= self.horizon

    def nodes_at_stage(self, t: int, node_cap: int = NODE_CAP) -> list[tuple]:
        count = math.prod(len(s) for s in self.stages[:t])
        if count > node_cap:
            raise NodeCapExceeded(f"stage {t} has {count} nodes, cap is {node_cap}")
        out = [(0,)]
        for s in self.stages[1:t]:
            out = [n + (i,) for n in out for i in range(len(s))]
        return out

    def pool_key(self, n: tuple):
        return ("stage", len(n))

    def history_key(self, n: tuple):
        return ("stage", len(n))

    def validate(self) -> None:
        _check_stage_probs(self.stages)

    def sample_path(self, rng: np.random.Generator) -> list[tuple]:
        return _sample_path(self, rng)


def _sample_path(tree, rng: np.random.Generator) -> list:
    n = tree.root
    path = [n]
    while True:
        kids = tree.children(n)
        if not kids:
            return path
        cum = np.cumsum([q for _, q in kids])
        u = rng.random() * cum[-1]
        i = min(int(np.searchsorted(cum, u, side="right")), len(kids) - 1)
        n = kids[i][0]
        path.append(n)


def sample_path(tree, rng: np.random.Generator) -> list:
    """Root-to-leaf path drawn by the transition probabilities."""
    return _sample_path(tree, rng)


def lazy_node_view(per_stage_scenarios, path) -> list[tuple]:
    """Payloads along ``path`` with the successor payload lists at each step.

    ``path`` is a sequence of scenario indices, one per stage, starting with
    0 for the root. Returns ``[(payload, [(succ_payload, q), ...]), ...]``.
    """
    lattice = StagewiseLattice(per_stage_scenarios)
    out = []
    node = ()
    for i in path:
        node = node + (int(i),)
        succ = [(lattice.payload(m), q) for m, q in lattice.children(node)]
        out.append((lattice.payload(node), succ))
    return out
