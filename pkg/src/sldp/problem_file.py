"""JSON problem documents.

A document describes a stagewise-independent multistage problem::

    {
      "schema_version": 1,
      "name": "...",
      "tree": {"lazy": false, "share_pools": false},
      "templates": [                      # one per stage
        {"name": "...",
         "variables": [{"name": "x", "lb": 0, "ub": 5, "integer": false, "obj": -1.5}],
         "rows": [{"coef": [1, -1], "sense": "<=", "rhs": 0}],
         "state": [0], "copy": [],
         "state_lo": [0], "state_hi": [5], "copy_lo": [], "copy_hi": [],
         "lipschitz": null}
      ],
      "scenarios": [                      # one list per stage
        [{"prob": 1.0, "name": "root"}],
        [{"prob": 0.5, "rhs": [5], "obj": null, "name": "a"}, ...]
      ],
      "floors": [-86, 0],
      "config": {...}                     # SldpConfig fields, all optional
    }

Infinite bounds are written as ``null``. Every validation error names the
JSON path of the offending entry, e.g. ``$.scenarios[1]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sldp.engine import SldpConfig
from sldp.errors import MalformedProblem, ProblemFileError
from sldp.milp import MilpProblem
from sldp.milp.problem import SENSES
from sldp.stage import Scenario, StageTemplate
from sldp.tree import PROB_TOL, StagewiseLattice, build_stagewise_tree

SCHEMA_VERSION = 1


@dataclass
class ProblemSpec:
    templates: list
    scenarios: list  # per stage: [(Scenario, prob), ...]
    floors: list | None = None
    config: SldpConfig = field(default_factory=SldpConfig)
    name: str = ""
    lazy: bool = False
    share_pools: bool = False

    @property
    def horizon(self) -> int:
        return len(self.templates)

    def build_tree(self):
        if self.lazy:
            return StagewiseLattice(self.scenarios)
        return build_stagewise_tree(self.scenarios, share_pools=self.share_pools)


def _bound(v):
    return None if not math.isfinite(v) else float(v)


def _plain_list(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _template_to_dict(t: StageTemplate) -> dict:
    p = t.problem
    names = p.names or [f"v{j}" for j in range(p.num_vars)]
    variables = [
        {"name": names[j], "lb": None if p.lb[j] == -math.inf else float(p.lb[j]),
         "ub": None if p.ub[j] == math.inf else float(p.ub[j]),
         "integer": bool(p.integer[j]), "obj": float(p.c[j])}
        for j in range(p.num_vars)
    ]
    rows = [{"coef": _plain_list(p.A[i]), "sense": p.senses[i], "rhs": float(p.b[i])}
            for i in range(p.num_rows)]
    return {
        "name": t.name,
        "variables": variables,
        "rows": rows,
        "state": [int(j) for j in t.state_idx],
        "copy": [int(j) for j in t.copy_idx],
        "state_lo": _plain_list(t.state_lo),
        "state_hi": _plain_list(t.state_hi),
        "copy_lo": [_bound(v) for v in t.copy_lo],
        "copy_hi": [_bound(v) for v in t.copy_hi],
        "lipschitz": None if t.lipschitz is None else float(t.lipschitz),
    }


def serialize_problem(spec: ProblemSpec) -> dict:
    scenarios = []
    for stage in spec.scenarios:
        entries = []
        for scen, q in stage:
            d = {"prob": float(q)}
            d.update(scen.to_dict() if scen is not None else {"name": ""})
            entries.append(d)
        scenarios.append(entries)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "tree": {"lazy": spec.lazy, "share_pools": spec.share_pools},
        "templates": [_template_to_dict(t) for t in spec.templates],
        "scenarios": scenarios,
        "floors": None if spec.floors is None else [float(f) for f in spec.floors],
        "config": spec.config.to_dict(),
    }


def dumps_problem(spec: ProblemSpec) -> str:
    return json.dumps(serialize_problem(spec), indent=1) + "\n"


def save_problem(spec: ProblemSpec, path) -> None:
    Path(path).write_text(dumps_problem(spec))


# parsing -------------------------------------------------------------------

def _get(d: dict, key: str, path: str, kind=None, optional=False, default=None):
    if not isinstance(d, dict):
        raise ProblemFileError(path, "expected an object")
    if key not in d:
        if optional:
            return default
        raise ProblemFileError(f"{path}.{key}", "missing required field")
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ProblemFileError(f"{path}.{key}", f"expected {_kind_name(kind)}")
    return v


def _kind_name(kind) -> str:
    if kind is list:
        return "an array"
    if kind is dict:
        return "an object"
    if kind is str:
        return "a string"
    if kind is bool:
        return "a boolean"
    return "a number"


def _number(v, path: str, allow_null=False, null=None) -> float:
    if v is None and allow_null:
        return null
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemFileError(path, "expected a number" + (" or null" if allow_null else ""))
    if not math.isfinite(v):
        raise ProblemFileError(path, "expected a finite number")
    return float(v)


def _numbers(v, path: str, length=None, allow_null=False, null=None) -> list:
    if not isinstance(v, list):
        raise ProblemFileError(path, "expected an array")
    if length is not None and len(v) != length:
        raise ProblemFileError(path, f"expected {length} entries, got {len(v)}")
    return [_number(x, f"{path}[{i}]", allow_null, null) for i, x in enumerate(v)]


def _indices(v, path: str, n: int) -> list:
    if not isinstance(v, list):
        raise ProblemFileError(path, "expected an array")
    for i, j in enumerate(v):
        if isinstance(j, bool) or not isinstance(j, int) or not 0 <= j < n:
            raise ProblemFileError(f"{path}[{i}]", f"expected a variable index in [0, {n})")
    return list(v)


def _parse_template(d: dict, path: str) -> StageTemplate:
    variables = _get(d, "variables", path, list)
    if not variables:
        raise ProblemFileError(f"{path}.variables", "a stage needs at least one variable")
    n = len(variables)
    names, lb, ub, integer, c = [], [], [], [], []
    for j, var in enumerate(variables):
        vp = f"{path}.variables[{j}]"
        names.append(_get(var, "name", vp, str, optional=True, default=f"v{j}"))
        lb.append(_number(_get(var, "lb", vp, optional=True, default=0.0), f"{vp}.lb", True, -math.inf))
        ub.append(_number(_get(var, "ub", vp, optional=True), f"{vp}.ub", True, math.inf))
        integer.append(_get(var, "integer", vp, bool, optional=True, default=False))
        c.append(_number(_get(var, "obj", vp, optional=True, default=0.0), f"{vp}.obj"))
        if lb[-1] > ub[-1]:
            raise ProblemFileError(vp, f"lower bound {lb[-1]} exceeds upper bound {ub[-1]}")
        if integer[-1] and not (math.isfinite(lb[-1]) and math.isfinite(ub[-1])):
            raise ProblemFileError(vp, "integer variables need finite bounds")
    rows = _get(d, "rows", path, list, optional=True, default=[])
    A, senses, b = [], [], []
    for i, row in enumerate(rows):
        rp = f"{path}.rows[{i}]"
        A.append(_numbers(_get(row, "coef", rp), f"{rp}.coef", n))
        sense = _get(row, "sense", rp, str)
        if sense not in SENSES:
            raise ProblemFileError(f"{rp}.sense", f"expected one of {list(SENSES)}")
        senses.append(sense)
        b.append(_number(_get(row, "rhs", rp), f"{rp}.rhs"))
    state = _indices(_get(d, "state", path, optional=True, default=[]), f"{path}.state", n)
    copy = _indices(_get(d, "copy", path, optional=True, default=[]), f"{path}.copy", n)
    state_lo = _numbers(_get(d, "state_lo", path, optional=True, default=[]), f"{path}.state_lo", len(state))
    state_hi = _numbers(_get(d, "state_hi", path, optional=True, default=[]), f"{path}.state_hi", len(state))
    copy_lo = _numbers(_get(d, "copy_lo", path, optional=True, default=[]), f"{path}.copy_lo", len(copy),
                       True, -math.inf)
    copy_hi = _numbers(_get(d, "copy_hi", path, optional=True, default=[]), f"{path}.copy_hi", len(copy),
                       True, math.inf)
    lip = _get(d, "lipschitz", path, optional=True)
    lip = None if lip is None else _number(lip, f"{path}.lipschitz")
    try:
        p = MilpProblem(c, np.array(A, dtype=float).reshape(len(rows), n), senses, b, lb, ub, integer)
        p.names = names
        return StageTemplate(p, state, copy, state_lo, state_hi, copy_lo, copy_hi, lipschitz=lip,
                             name=_get(d, "name", path, str, optional=True, default=""))
    except MalformedProblem as exc:
        raise ProblemFileError(path, str(exc)) from exc


def _parse_stage(entries, path: str, template: StageTemplate) -> list:
    if not isinstance(entries, list) or not entries:
        raise ProblemFileError(path, "expected a non-empty array of scenarios")
    out = []
    for i, e in enumerate(entries):
        ep = f"{path}[{i}]"
        q = _number(_get(e, "prob", ep), f"{ep}.prob")
        if q <= 0:
            raise ProblemFileError(f"{ep}.prob", "probabilities must be positive")
        rhs = _get(e, "rhs", ep, optional=True)
        obj = _get(e, "obj", ep, optional=True)
        if rhs is not None:
            rhs = _numbers(rhs, f"{ep}.rhs", template.problem.num_rows)
        if obj is not None:
            obj = _numbers(obj, f"{ep}.obj", template.problem.num_vars)
        name = _get(e, "name", ep, str, optional=True, default="")
        out.append((Scenario(rhs=rhs, obj=obj, name=name), q))
    total = sum(q for _, q in out)
    if abs(total - 1.0) > PROB_TOL * max(1, len(out)):
        raise ProblemFileError(path, f"probabilities sum to {total:.15g}, not 1")
    return out


def parse_problem(doc) -> ProblemSpec:
    """Validate a decoded JSON document and build the problem."""
    if not isinstance(doc, dict):
        raise ProblemFileError("$", "expected an object")
    version = _get(doc, "schema_version", "$")
    if version != SCHEMA_VERSION:
        raise ProblemFileError("$.schema_version", f"unsupported version {version!r}, expected {SCHEMA_VERSION}")
    known = {"schema_version", "name", "tree", "templates", "scenarios", "floors", "config"}
    for key in doc:
        if key not in known:
            raise ProblemFileError(f"$.{key}", "unknown field")
    raw_templates = _get(doc, "templates", "$", list)
    if not raw_templates:
        raise ProblemFileError("$.templates", "at least one stage is required")
    templates = [_parse_template(t, f"$.templates[{i}]") for i, t in enumerate(raw_templates)]
    raw_scen = _get(doc, "scenarios", "$", list)
    if len(raw_scen) != len(templates):
        raise ProblemFileError("$.scenarios", f"expected {len(templates)} stages, got {len(raw_scen)}")
    scenarios = [_parse_stage(s, f"$.scenarios[{t}]", templates[t]) for t, s in enumerate(raw_scen)]
    if len(scenarios[0]) != 1:
        raise ProblemFileError("$.scenarios[0]", "the first stage must have exactly one scenario")
    for t in range(1, len(templates)):
        if templates[t].copy_dim != templates[t - 1].state_dim:
            raise ProblemFileError(f"$.templates[{t}].copy",
                                   f"{templates[t].copy_dim} copies for a parent state of "
                                   f"dimension {templates[t - 1].state_dim}")
    if templates[0].copy_dim and not np.allclose(templates[0].copy_lo, templates[0].copy_hi):
        raise ProblemFileError("$.templates[0].copy_lo", "first-stage copies need copy_lo == copy_hi")
    floors = _get(doc, "floors", "$", optional=True)
    if floors is not None:
        floors = _numbers(floors, "$.floors", len(templates))
    tree = _get(doc, "tree", "$", dict, optional=True, default={})
    lazy = _get(tree, "lazy", "$.tree", bool, optional=True, default=False)
    share = _get(tree, "share_pools", "$.tree", bool, optional=True, default=False)
    raw_cfg = _get(doc, "config", "$", dict, optional=True, default={})
    try:
        config = SldpConfig.from_dict(raw_cfg)
    except (MalformedProblem, TypeError, ValueError) as exc:
        raise ProblemFileError("$.config", str(exc)) from exc
    return ProblemSpec(templates, scenarios, floors, config,
                       _get(doc, "name", "$", str, optional=True, default=""), lazy, share)


def loads_problem(text: str) -> ProblemSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError("$", f"invalid JSON: {exc}") from exc
    return parse_problem(doc)


def load_problem(path) -> ProblemSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError("$", f"cannot read {path}: {exc}") from exc
    return loads_problem(text)


def stagewise_scenarios(tree) -> list:
    """Per-stage ``(payload, prob)`` lists of a stagewise-independent tree."""
    if isinstance(tree, StagewiseLattice):
        return [list(s) for s in tree.stages]
    out = [[(tree.payload(tree.root), 1.0)]]
    n = tree.root
    while not tree.is_leaf(n):
        kids = tree.children(n)
        out.append([(tree.payload(m), q) for m, q in kids])
        n = kids[0][0]
    return out


def spec_from_generated(tree, templates, floors, config: SldpConfig | None = None,
                        name: str = "") -> ProblemSpec:
    """Wrap a generator's output so it can be written as a problem file."""
    return ProblemSpec(list(templates), stagewise_scenarios(tree), list(floors) if floors else None,
                       config or SldpConfig(), name, isinstance(tree, StagewiseLattice),
                       bool(getattr(tree, "share_pools", False)))
