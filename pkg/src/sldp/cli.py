"""Command-line front end.

Subcommands:

* ``solve``     run SLDP on a problem file, write iterations.csv and result.json;
* ``validate``  parse a problem file and report what it contains;
* ``oracle``    exact values by enumeration (Caroe-Schultz suite or a problem file);
* ``bench``     the Caroe-Schultz and control case studies.

Exit codes: 0 success, 1 solver or runtime failure, 2 malformed input.
``SLDP_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from sldp import __version__
from sldp.bench import CaroeSchultzSpec, ControlProblemSpec, gen_caroe_schultz, gen_control1d
from sldp.engine import RunResult, SldpConfig, pool_values, run
from sldp.errors import MalformedProblem, ProbabilityMismatch, SldpError
from sldp.oracle import first_stage_sweep, grid_expected_ctg, lattice, node_value
from sldp.problem_file import load_problem

log = logging.getLogger("sldp")

EXIT_OK, EXIT_FAILURE, EXIT_MALFORMED = 0, 1, 2
ITER_COLUMNS = ("iter", "lb", "cuts_total", "stage_solves", "wall_ms")
CAROE_SIZES = (2, 3, 6)
# suite defaults for the cap on the progressive opening: the integer first
# stage needs large openings, the continuous cases converge faster when the
# opening stays near the cost-to-go's Lipschitz scale
CAROE_RHO_MAX = {True: math.inf, False: 8.0}
CONTROL_RHO_MAX = 8.0


def _fmt(v: float) -> str:
    return repr(float(v))


def write_iterations(result: RunResult, path: Path, wall_time: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ITER_COLUMNS)
        for r in result.records:
            w.writerow([r.k, _fmt(r.lb), r.cuts_total, r.stage_solves,
                        f"{r.wall_ms:.3f}" if wall_time else "0"])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _finite_or_none(v):
    return None if v is None or not math.isfinite(v) else float(v)


def result_document(result: RunResult, problem_name: str = "", wall_time: bool = True) -> dict:
    return {
        "problem": problem_name,
        "version": __version__,
        "seed": result.config.seed,
        "config": result.config.to_dict(),
        "lb": result.lb,
        "lb_initial": result.lb_initial,
        "iterations": result.iterations,
        "first_stage_state": None if result.first_stage_state is None else result.first_stage_state,
        "epsilon_bound": _finite_or_none(result.epsilon_bound),
        "policy": result.policy,
        "wall_ms": (result.records[-1].wall_ms if result.records and wall_time else 0.0),
        "pools": {_pool_name(k): p.to_dict() for k, p in sorted(result.pools.items(), key=lambda kv: str(kv[0]))},
    }


def _pool_name(key) -> str:
    if isinstance(key, tuple):
        return ":".join(str(part) for part in key)
    return str(key)


def write_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=1, default=_json_default) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _overrides(args, config: SldpConfig) -> SldpConfig:
    d = config.to_dict()
    for flag, key in [("mode", "mode"), ("cuts", "cuts"), ("iters", "max_iterations"),
                      ("rho", "rho"), ("rho0", "rho0"), ("gamma", "gamma"), ("rho_max", "rho_max"),
                      ("rho_period", "rho_period"), ("delta", "delta"), ("seed", "seed"),
                      ("sim_samples", "sim_samples")]:
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    return SldpConfig.from_dict(d)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# subcommands ---------------------------------------------------------------

def cmd_validate(args) -> int:
    spec = load_problem(args.problem)
    tree = spec.build_tree()
    tree.validate()
    widths = [len(s) for s in spec.scenarios]
    print(f"ok: {spec.name or args.problem}: {spec.horizon} stages, scenarios per stage {widths}, "
          f"{'lazy' if spec.lazy else 'materialized'} tree")
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = load_problem(args.problem)
    config = _overrides(args, spec.config)
    tree = spec.build_tree()
    result = run(tree, spec.templates, config, spec.floors)
    out = _out_dir(args)
    wall = not args.no_wall_time
    write_iterations(result, out / "iterations.csv", wall)
    write_json(result_document(result, spec.name, wall), out / "result.json")
    print(f"lb {result.lb:.6f} after {result.iterations} iterations")
    return EXIT_OK


def caroe_oracle(N: int, discrete: bool = True):
    """Exact optimum over the first-stage lattice, with the full sweep."""
    spec = CaroeSchultzSpec(N=N, discrete_first_stage=discrete)
    tree, templates, _ = gen_caroe_schultz(spec)
    pts = lattice(templates[0].state_lo, templates[0].state_hi)
    vals = first_stage_sweep(tree, templates, pts)
    i = int(np.argmin(vals))
    return float(vals[i]), pts[i], pts, vals


def cmd_oracle(args) -> int:
    out = _out_dir(args)
    if args.problem:
        spec = load_problem(args.problem)
        tree = spec.build_tree()
        t0 = spec.templates[0]
        value = node_value(tree, spec.templates, tree.root, t0.copy_lo, cap=args.cap)
        write_json({"problem": spec.name, "objective": value}, out / "result.json")
        print(f"objective {value:.6f}")
        return EXIT_OK
    if args.suite == "caroe":
        rows = []
        for N in args.N or CAROE_SIZES:
            obj, x, pts, vals = caroe_oracle(N)
            rows.append([N, _fmt(obj), _fmt(x[0]), _fmt(x[1])])
            write_csv(out / f"caroe_n{N}_values.csv", ["x1", "x2", "value"],
                      [[_fmt(p[0]), _fmt(p[1]), _fmt(v)] for p, v in zip(pts, vals)])
            print(f"N={N}  objective {obj:.3f}  at x = ({x[0]:g}, {x[1]:g})")
        write_csv(out / "oracle.csv", ["N", "objective", "x1", "x2"], rows)
        return EXIT_OK
    # control: approximate grid recursion
    tree, templates, _ = gen_control1d(_control_spec(args))
    lo, hi = templates[0].state_lo[0], templates[0].state_hi[0]
    grid = np.round(np.arange(lo, hi + 1e-9, args.grid_step), 10)
    table = grid_expected_ctg(tree, templates, grid)
    stages = sorted(table)
    write_csv(out / "control_values.csv", ["x"] + [f"stage{t}" for t in stages],
              [[_fmt(x)] + [_fmt(table[t][i]) for t in stages] for i, x in enumerate(grid)])
    print(f"wrote approximate expected cost-to-go on {grid.size} grid points (step {args.grid_step})")
    return EXIT_OK


def _rho_max(args, default: float) -> float:
    return default if args.rho_max is None else args.rho_max


def _timed_run(tree, templates, config, floors):
    t0 = time.perf_counter()
    result = run(tree, templates, config, floors)
    return result, time.perf_counter() - t0


def bench_caroe(args, out: Path) -> list:
    settings = {"discrete": [True], "continuous": [False], "both": [True, False]}[args.first_stage]
    rows = []
    for discrete in settings:
        for N in args.N or CAROE_SIZES:
            obj = caroe_oracle(N)[0]
            tree, templates, floors = gen_caroe_schultz(CaroeSchultzSpec(N=N, discrete_first_stage=discrete))
            sb_cfg = SldpConfig(cuts="sb", max_iterations=args.sb_iters, seed=args.seed)
            sab_cfg = SldpConfig(cuts="sab", max_iterations=args.iters, seed=args.seed,
                                 rho0=args.rho0, gamma=args.gamma, rho_period=args.rho_period,
                                 rho_max=_rho_max(args, CAROE_RHO_MAX[discrete]))
            sb, sb_time = _timed_run(tree, templates, sb_cfg, floors)
            sab, sab_time = _timed_run(tree, templates, sab_cfg, floors)
            tag = "int" if discrete else "cont"
            write_iterations(sab, out / f"caroe_n{N}_{tag}_sab_iterations.csv", not args.no_wall_time)
            write_iterations(sb, out / f"caroe_n{N}_{tag}_sb_iterations.csv", not args.no_wall_time)
            denom = obj - sb.lb
            remaining = 100.0 * (obj - sab.lb) / denom if denom > 0 else 0.0
            rows.append([N, "discrete" if discrete else "continuous", obj, sb.lb, sab.lb, remaining,
                         sb_time, sab_time])
            print(f"N={N} {rows[-1][1]:<10} objective {obj:.3f}  SB LB {sb.lb:.3f}  "
                  f"SAB LB {sab.lb:.3f}  remaining {remaining:.2f}%")
    return rows


def _control_spec(args) -> ControlProblemSpec:
    if not args.noise:
        return ControlProblemSpec(T=args.T)
    noise = tuple(sorted(args.noise))
    # noise above 1 can push the state out of the default box
    box = None if max(abs(v) for v in noise) > 1 else ControlProblemSpec.state_box
    try:
        return ControlProblemSpec(T=args.T, noise=noise, state_box=box)
    except ValueError as exc:
        raise MalformedProblem(f"--noise: {exc}") from exc


def bench_control(args, out: Path) -> list:
    tree, templates, floors = gen_control1d(_control_spec(args))
    lo, hi = templates[0].state_lo[0], templates[0].state_hi[0]
    grid = np.linspace(lo, hi, 201).reshape(-1, 1)
    methods = [
        ("sb", SldpConfig(mode="sampled", cuts="sb")),
        ("rn", SldpConfig(mode="sampled", cuts="rn", rho=args.rn_rho, delta=args.delta)),
        ("sab", SldpConfig(mode="sampled", cuts="sab", delta=args.delta, rho0=args.rho0,
                           gamma=args.gamma, rho_period=args.rho_period,
                           rho_max=_rho_max(args, CONTROL_RHO_MAX))),
    ]
    rows = []
    for name, cfg in methods:
        d = cfg.to_dict()
        d.update(max_iterations=args.iters, seed=args.seed, sim_samples=args.sim_samples)
        cfg = SldpConfig.from_dict(d)
        res, secs = _timed_run(tree, templates, cfg, floors)
        write_iterations(res, out / f"control_{name}_iterations.csv", not args.no_wall_time)
        pools = {t: res.pools.get(("stage", t)) for t in range(1, tree.horizon)}
        write_csv(out / f"control_{name}_values.csv", ["x"] + [f"stage{t}" for t in pools],
                  [[_fmt(g[0])] + [_fmt(pool_values(p, g)) if p is not None else "" for p in pools.values()]
                   for g in grid])
        ub = res.policy or {"mean": math.nan, "stderr": math.nan}
        rows.append([name, res.lb, ub["mean"], ub["stderr"], secs])
        print(f"{name:<4} LB {res.lb:.4f}  UB {ub['mean']:.4f} +- {ub['stderr']:.4f}  ({secs:.1f} s)")
    return rows


def cmd_bench(args) -> int:
    out = _out_dir(args)
    if args.suite == "caroe":
        rows = bench_caroe(args, out)
        header = ["N", "first_stage", "objective", "sb_lb", "sab_lb", "remaining_pct", "sb_time_s", "sab_time_s"]
    else:
        rows = bench_control(args, out)
        header = ["method", "lb", "ub_mean", "ub_stderr", "time_s"]
    if args.no_wall_time:
        k = header.index("sb_time_s") if "sb_time_s" in header else header.index("time_s")
        rows = [r[:k] + [0.0] * (len(r) - k) for r in rows]
    write_csv(out / f"{args.suite}_bench.csv", header,
              [[_fmt(v) if isinstance(v, float) else v for v in r] for r in rows])
    return EXIT_OK


# argument parsing ----------------------------------------------------------

def _schedule_flags(p: argparse.ArgumentParser, defaults: bool) -> None:
    d = SldpConfig()
    p.add_argument("--rho0", type=float, default=d.rho0 if defaults else None)
    p.add_argument("--gamma", type=float, default=d.gamma if defaults else None)
    p.add_argument("--rho-max", dest="rho_max", type=float, default=None)
    p.add_argument("--rho-period", dest="rho_period", type=int, default=d.rho_period if defaults else None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sldp", description="Stochastic Lipschitz dynamic programming")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run SLDP on a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--mode", choices=["full", "sampled"])
    p.add_argument("--cuts", choices=["rn", "sb", "sab"])
    p.add_argument("--iters", type=int)
    p.add_argument("--rho", type=float, help="fixed opening instead of the schedule")
    _schedule_flags(p, defaults=False)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--sim-samples", dest="sim_samples", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--no-wall-time", action="store_true", help="write 0 for wall_ms (byte-stable output)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="check a problem file")
    p.add_argument("--problem", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="exact values by enumeration")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--suite", choices=["caroe", "control"])
    g.add_argument("--problem")
    p.add_argument("--N", type=int, nargs="+", choices=CAROE_SIZES)
    p.add_argument("--T", type=int, default=ControlProblemSpec.T)
    p.add_argument("--noise", type=float, nargs="+", help="control noise values (symmetric set)")
    p.add_argument("--grid-step", dest="grid_step", type=float, default=0.1)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="case-study experiments")
    p.add_argument("--suite", choices=["caroe", "control"], required=True)
    p.add_argument("--N", type=int, nargs="+", choices=CAROE_SIZES)
    p.add_argument("--first-stage", dest="first_stage", choices=["discrete", "continuous", "both"],
                   default="discrete")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--sb-iters", dest="sb_iters", type=int, default=100)
    _schedule_flags(p, defaults=True)
    p.add_argument("--T", type=int, default=ControlProblemSpec.T)
    p.add_argument("--noise", type=float, nargs="+", help="control noise values (symmetric set)")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--rn-rho", dest="rn_rho", type=float, default=5.0)
    p.add_argument("--sim-samples", dest="sim_samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.add_argument("--no-wall-time", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("SLDP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "iters", "unset") is None and args.command == "bench":
        args.iters = 200 if args.suite == "caroe" else 100
    try:
        return args.func(args)
    except (MalformedProblem, ProbabilityMismatch) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except SldpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:  # report anything else as a runtime failure
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
