"""Command line runner: plan, sweep, eval, version.

Exit codes: 0 ok, 2 usage or config error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import ConfigError, build_problem, config_hash, load_config, validate
from .footprint import Cone
from .infomap import reconstruct, write_pgm
from .optimize import SolverFailure, evaluate_trajectories, solve

logger = logging.getLogger("footprint_ergodic")

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3
U64_MAX = 2 ** 64 - 1
PGM_RES = 64

SWEEP_DEFAULTS = {
    "horizon": [10, 50, 100],
    "k_h": [0.01, 0.25, 0.5, 1.0, 1.25],
    "fixed_radius": [0.025, 0.05, 0.1],
    "mode": ["dynamic", "fixed:0.05", "point"],
}


def _u64(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("need a positive integer")
    return v


# -- artifacts -------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def trajectory_csv(trajectories) -> str:
    n = trajectories[0].states.shape[1]
    m = trajectories[0].controls.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "robot_id"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)])
    for rid, tr in enumerate(trajectories):
        for k, x in enumerate(tr.states):
            u = [_fmt(v) for v in tr.controls[k]] if k < tr.N else [""] * m
            w.writerow([_fmt(k * tr.dt), rid] + [_fmt(v) for v in x] + u)
    return buf.getvalue()


def read_trajectory_csv(path, n: int, m: int):
    """Parse a trajectory CSV into per-robot (states, controls); ValueError on any defect."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty trajectory file")
    header = rows[0]
    want = ["t", "robot_id"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    if header != want:
        raise ValueError(f"header {header} does not match the config dimensions (n={n}, m={m})")
    robots: dict[int, tuple[list, list]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(want):
            raise ValueError(f"line {lineno}: expected {len(want)} fields, got {len(row)}")
        rid = int(row[1])
        X, U = robots.setdefault(rid, ([], []))
        X.append([float(v) for v in row[2:2 + n]])
        if all(v == "" for v in row[2 + n:]):
            U.append(None)
        else:
            U.append([float(v) for v in row[2 + n:]])
    states, controls = [], []
    for rid in sorted(robots):
        X, U = robots[rid]
        if len(X) < 2 or U[-1] is not None or any(u is None for u in U[:-1]):
            raise ValueError(f"robot {rid}: need >= 2 states and controls on all but the last row")
        states.append(np.array(X))
        controls.append(np.array(U[:-1]))
    if list(sorted(robots)) != list(range(len(robots))):
        raise ValueError("robot ids must be 0..R-1")
    return states, controls


def _log_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "ergodicity", "control_cost", "max_constraint_violation"])
    for r in log:
        w.writerow([r["iteration"], _fmt(r["ergodicity"]), _fmt(r["control_cost"]),
                    _fmt(r["max_constraint_violation"])])
    return buf.getvalue()


def _planar(coeffs, basis):
    """2D heatmap values; 3D fields are summed over the third axis."""
    vals = reconstruct(coeffs, basis, PGM_RES).cells
    return vals if vals.ndim == 2 else vals.sum(axis=2)


def _problem(cfg):
    try:
        return build_problem(cfg)
    except ConfigError:
        raise
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigError(str(exc)) from None


def run_plan(cfg: dict, out: Path, figures: bool = True) -> dict:
    """Solve one config and write every artifact into ``out``. Returns the summary."""
    spec = _problem(cfg)
    out.mkdir(parents=True, exist_ok=True)
    result = solve(spec)
    ev = evaluate_trajectories(spec, [t.states for t in result.trajectories],
                               [t.controls for t in result.trajectories])
    (out / "trajectory.csv").write_text(trajectory_csv(result.trajectories))
    (out / "iterations.csv").write_text(_log_csv(result.log))
    write_pgm(out / "time_averaged.pgm", _planar(result.coeffs, spec.basis),
              "time-averaged statistics of the footprint trajectory")
    write_pgm(out / "reconstructed_map.pgm", _planar(spec.phi, spec.basis),
              "information map reconstructed from its coefficients")
    summary = {
        "ergodicity": result.ergodicity,
        "point_ergodicity": ev["point_ergodicity"],
        "control_cost": result.control_cost,
        "violation": result.violation,
        "wall_time": result.wall_time,
        "success": result.success,
        "message": result.message,
        "seed": cfg.get("seed", 0),
        "config_hash": config_hash(cfg),
        "config": cfg,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if figures:
        proj = spec.robots[0].dynamics.projection
        if spec.basis.dim == 2:
            plotting.plot_plan_2d(out / "plan.png", spec.basis, spec.phi, result.coeffs,
                                  result.trajectories, proj)
        elif isinstance(spec.footprint, Cone):
            plotting.plot_plan_3d(out / "plan.png", spec.cloud, result.trajectories, proj)
        plotting.plot_log(out / "iterations.png", result.log)
    return summary


# -- sweeps ----------------------------------------------------------------------


def sweep_config(cfg: dict, variable: str, value) -> dict:
    c = copy.deepcopy(cfg)
    fp = c["footprint"]
    if variable == "horizon":
        dt = c["dynamics"]["dt"]
        N = int(round(float(value) / dt))
        if N < 1 or abs(N * dt - float(value)) > 1e-9 * max(1.0, float(value)):
            raise ConfigError(f"horizon {value} is not a positive multiple of dt = {dt}")
        c["dynamics"]["N"] = N
    elif variable == "k_h":
        if fp["variant"] not in ("altitude", "cone"):
            raise ConfigError("a k_h sweep needs an altitude or cone footprint")
        fp["k_h"] = float(value)
    elif variable == "fixed_radius":
        c["footprint"] = {"variant": "fixed", "r": float(value)}
    elif variable == "mode":
        kind, _, arg = str(value).partition(":")
        if kind == "dynamic":
            if fp["variant"] != "altitude":
                c["footprint"] = {"variant": "altitude", "k_h": 0.25, "M": 25}
        elif kind == "fixed":
            c["footprint"] = {"variant": "fixed", "r": float(arg) if arg else 0.05}
        elif kind == "point":
            c["footprint"] = {"variant": "point"}
        else:
            raise ConfigError(f"unknown mode {value!r}; use dynamic, fixed[:r] or point")
    else:
        raise ConfigError(f"unknown sweep variable {variable!r}")
    return validate(c)


def _sweep_worker(cfg, out, figures):
    try:
        s = run_plan(cfg, Path(out), figures)
        return {"status": "ok" if s["success"] else "infeasible", **s}
    except (SolverFailure, FloatingPointError) as exc:
        return {"status": f"solver failure: {exc}"}
    except (ConfigError, ValueError) as exc:
        return {"status": f"config error: {exc}"}


SWEEP_FIELDS = ["variable", "value", "ergodicity", "point_ergodicity", "control_cost",
                "violation", "wall_time", "status", "dir"]


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in sorted(rows, key=lambda r: r["index"]):
            w.writerow({k: r.get(k, "") for k in SWEEP_FIELDS})


def run_sweep(cfg, variable, values, out: Path, threads=1, figures=True):
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i, v in enumerate(values):
        c = sweep_config(cfg, variable, v)
        d = out / f"{i:02d}_{variable}_{str(v).replace(':', '_')}"
        jobs.append((i, v, c, d))
    rows = []
    table = out / "comparison.csv"

    def record(i, v, d, res):
        rows.append({"index": i, "variable": variable, "value": v, "dir": d.name, **res})
        # rewrite after every run so partial results survive an interruption
        _write_rows(table, rows)

    if threads <= 1:
        for i, v, c, d in jobs:
            record(i, v, d, _sweep_worker(c, d, figures))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_sweep_worker, c, str(d), figures): (i, v, d) for i, v, c, d in jobs}
            for f in as_completed(futs):
                i, v, d = futs[f]
                record(i, v, d, f.result())
    rows.sort(key=lambda r: r["index"])
    if figures:
        plotting.plot_sweep(out / "comparison.png", variable, rows)
    return rows


# -- commands --------------------------------------------------------------------


def _load(args):
    if args.config is None:
        raise ConfigError("--config PATH is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args, cfg):
    return Path(args.out or cfg.get("output") or "out")


def cmd_plan(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    s = run_plan(cfg, out, figures=not args.no_figures)
    print(json.dumps({k: s[k] for k in ("ergodicity", "control_cost", "violation", "wall_time")}))
    if not s["success"]:
        logger.error("solver ended infeasible: %s", s["message"])
        return EXIT_SOLVER
    return EXIT_OK


def _parse_values(variable, raw):
    if not raw:
        return SWEEP_DEFAULTS[variable]
    if variable == "mode":
        return list(raw)
    try:
        return [float(v) for v in raw]
    except ValueError:
        raise ConfigError(f"sweep values for {variable} must be numbers") from None


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.variable, args.values)
    rows = run_sweep(cfg, args.variable, values, _out_dir(args, cfg), args.threads,
                     figures=not args.no_figures)
    for r in rows:
        erg = r.get("ergodicity")
        print(f"{args.variable}={r['value']}\t{erg if erg is not None else '-'}\t{r['status']}")
    if any(r["status"].startswith("config error") for r in rows):
        return EXIT_USAGE
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_SOLVER


def cmd_eval(args) -> int:
    cfg = _load(args)
    spec = _problem(cfg)
    rb = spec.robots[0].dynamics
    try:
        states, controls = read_trajectory_csv(args.trajectory, rb.n, rb.control_dim)
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{args.trajectory}: {exc}") from None
    if len(states) != spec.n_robots:
        raise ConfigError(f"trajectory has {len(states)} robots, config has {spec.n_robots}")
    res = evaluate_trajectories(spec, states, controls)
    print(json.dumps(res, indent=2))
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"footprint-ergodic {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run config (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: config 'output' or ./out)")
    common.add_argument("--seed", type=_u64, metavar="U64", help="override the config seed")
    common.add_argument("--threads", type=_positive_int, default=1, metavar="N",
                        help="worker processes for sweeps")
    common.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="footprint-ergodic",
                                description="Footprint-aware ergodic trajectory planning.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("plan", parents=[common], help="solve one config and write artifacts")
    sw = sub.add_parser("sweep", parents=[common], help="one run per value of a variable")
    sw.add_argument("--variable", required=True, choices=sorted(SWEEP_DEFAULTS))
    sw.add_argument("--values", nargs="+", metavar="V",
                    help="values to sweep (mode: dynamic, fixed[:r], point)")
    ev = sub.add_parser("eval", parents=[common], help="metrics of an existing trajectory CSV")
    ev.add_argument("trajectory", metavar="CSV")
    sub.add_parser("version", help="print the version")
    return p


COMMANDS = {"plan": cmd_plan, "sweep": cmd_sweep, "eval": cmd_eval, "version": cmd_version}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
