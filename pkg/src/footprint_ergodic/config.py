"""Run configuration: JSON schema, presets and problem construction."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import infomap
from .dynamics import DynamicsModel, StateProjection
from .footprint import AltitudeDisk, Cone, FixedDisk, Point
from .optimize.problem import ProblemSpec, Robot, SolverSettings, default_constraints
from .spectral import SpectralBasis, Workspace
from .surface3d import PointCloud, load_cloud, sphere_with_handle

MAP_PRESETS = ("mixed", "mixed_b", "widespread", "spread_peaks", "uniform")
CLOUD_PRESETS = ("sphere_handle",)

_vec = {"type": "array", "items": {"type": "number"}}
_bounds = {"type": "array", "items": _vec, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["workspace", "basis", "dynamics", "footprint"],
    "properties": {
        "name": {"type": "string"},
        "workspace": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                      "minItems": 2, "maxItems": 3},
        "map": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(MAP_PRESETS)},
                "path": {"type": "string"},
                "type": {"enum": ["gmm", "grid", "cloud"]},
                "workspace": _vec,
                "components": {"type": "array"},
                "cells": {"type": "array"},
                "points": {"type": "array"},
                "weights": _vec,
                "quadrature": {"type": "integer", "minimum": 32},
            },
        },
        "cloud": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(CLOUD_PRESETS)},
                "path": {"type": "string"},
                "hit_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "basis": {"type": "array", "items": {"type": "integer", "minimum": 1},
                  "minItems": 2, "maxItems": 3},
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["model", "n", "dt", "N", "x0"],
            "properties": {
                "model": {"enum": ["single_integrator", "double_integrator"]},
                "n": {"type": "integer", "minimum": 2},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 1},
                "x0": {"type": "array", "items": _vec, "minItems": 1},
                "control_bounds": _bounds,
                "state_bounds": _bounds,
                "q_index": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "h_index": {"type": ["integer", "null"], "minimum": 0},
            },
        },
        "footprint": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["point", "fixed", "altitude", "cone"]},
                "k_h": {"type": "number", "exclusiveMinimum": 0},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "M": {"type": "integer", "minimum": 1},
                "k_d": {"type": "number", "exclusiveMinimum": 0},
                "axis_policy": {"enum": ["object", "down"]},
            },
        },
        "constraints": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "footprint_interior": {"type": "boolean"},
                "h1": {"type": "number", "minimum": 0},
                "h2": {"type": "number", "exclusiveMinimum": 0},
                "h3": {"type": "number", "minimum": 0},
            },
        },
        "control_weight": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _vec]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_outer": {"type": "integer", "minimum": 1},
                "max_inner": {"type": "integer", "minimum": 1},
                "memory": {"type": "integer", "minimum": 1},
                "mu0": {"type": "number", "exclusiveMinimum": 0},
                "mu_growth": {"type": "number", "minimum": 1},
                "mu_max": {"type": "number", "exclusiveMinimum": 0},
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "violation_tol": {"type": "number", "exclusiveMinimum": 0},
                "init_amplitude": {"type": "number", "minimum": 0},
                "lambda_max": {"type": "number", "exclusiveMinimum": 0},
                "progress_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "outer_rtol": {"type": "number", "minimum": 0},
            },
        },
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(cfg), key=lambda e: e.path)
    if errors:
        msgs = [f"{'/'.join(str(p) for p in e.path) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(msgs))
    dyn = cfg["dynamics"]
    nu = len(cfg["workspace"])
    if len(cfg["basis"]) != nu:
        raise ConfigError(f"basis needs {nu} counts, one per workspace dimension")
    order = 2 if dyn["model"] == "double_integrator" else 1
    if dyn["n"] % order:
        raise ConfigError("double integrator needs an even state dimension")
    for x0 in dyn["x0"]:
        if len(x0) != dyn["n"]:
            raise ConfigError(f"x0 entries need {dyn['n']} components, got {len(x0)}")
    fp = cfg["footprint"]
    need = {"fixed": "r", "altitude": "k_h", "cone": "k_h"}.get(fp["variant"])
    if need and need not in fp:
        raise ConfigError(f"footprint variant {fp['variant']!r} needs {need!r}")
    if fp["variant"] == "cone" and "cloud" not in cfg:
        raise ConfigError("cone footprints need a 'cloud' block")
    if fp["variant"] == "altitude" and _h_index(cfg) is None:
        raise ConfigError("altitude footprints need dynamics.h_index")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _preset_text(name: str) -> str:
    return resources.files("footprint_ergodic.presets").joinpath(name).read_text()


def preset_map_dict(name: str) -> dict:
    if name not in MAP_PRESETS:
        raise ConfigError(f"unknown map preset {name!r}")
    if name == "uniform":
        return {"type": "grid", "workspace": [1.0, 1.0], "cells": np.ones((64, 64)).tolist()}
    return json.loads(_preset_text(f"map_{name}.json"))


def preset_config(name: str = "drone") -> dict:
    """Shipped run configs: 'drone' (single drone on the mixed map), 'swarm3d'."""
    return json.loads(_preset_text(f"run_{name}.json"))


def _q_index(cfg):
    dyn = cfg["dynamics"]
    return tuple(dyn.get("q_index", range(len(cfg["workspace"]))))


def _h_index(cfg):
    dyn = cfg["dynamics"]
    if "h_index" in dyn:
        return dyn["h_index"]
    order = 2 if dyn["model"] == "double_integrator" else 1
    dof = dyn["n"] // order
    return len(cfg["workspace"]) if dof > len(cfg["workspace"]) else None


def build_map(cfg: dict):
    ws = Workspace(tuple(cfg["workspace"]))
    if cfg["footprint"]["variant"] == "cone":
        cloud = build_cloud(cfg, ws)
        return infomap.normalize_map(infomap.DeltaCloud(ws, cloud.points, cloud.weights)), None
    block = cfg.get("map", {"preset": "uniform"})
    quad = block.get("quadrature")
    if "preset" in block:
        d = preset_map_dict(block["preset"])
    elif "path" in block:
        d = json.loads(Path(block["path"]).read_text())
    else:
        d = {k: v for k, v in block.items() if k != "quadrature"}
        d.setdefault("workspace", cfg["workspace"])
    if list(d.get("workspace", cfg["workspace"])) != list(cfg["workspace"]):
        raise ConfigError("map workspace differs from the run workspace")
    d["workspace"] = cfg["workspace"]
    return infomap.normalize_map(infomap.map_from_dict(d), quad), quad


def build_cloud(cfg: dict, ws: Workspace) -> PointCloud:
    block = cfg["cloud"]
    if "preset" in block:
        c = np.asarray(ws.lengths) / 2.0
        return PointCloud(sphere_with_handle(center=c))
    return load_cloud(block["path"], ws)


def build_footprint(fp: dict):
    v = fp["variant"]
    if v == "point":
        return Point()
    if v == "fixed":
        return FixedDisk(fp["r"], fp.get("k_d"), fp.get("M"))
    if v == "altitude":
        return AltitudeDisk(fp["k_h"], fp.get("k_d"), fp.get("M"))
    return Cone(fp["k_h"], fp.get("M", 25), fp.get("axis_policy", "object"))


def build_problem(cfg: dict) -> ProblemSpec:
    cfg = validate(copy.deepcopy(cfg))
    ws = Workspace(tuple(cfg["workspace"]))
    basis = SpectralBasis(ws, tuple(cfg["basis"]))
    footprint = build_footprint(cfg["footprint"])
    cloud, hit_radius = None, None
    if isinstance(footprint, Cone):
        cloud = build_cloud(cfg, ws)
        hit_radius = cfg["cloud"].get("hit_radius", cloud.default_hit_radius())
    m, quad = build_map(cfg)
    phi = infomap.map_coeffs(m, basis, quad)
    dyn = cfg["dynamics"]
    order = 2 if dyn["model"] == "double_integrator" else 1
    dof = dyn["n"] // order
    proj = StateProjection(_q_index(cfg), _h_index(cfg))
    cb = dyn.get("control_bounds")
    sb = dyn.get("state_bounds")
    model = DynamicsModel(dof, order,
                          None if cb is None else (np.array(cb[0]), np.array(cb[1])),
                          None if sb is None else (np.array(sb[0]), np.array(sb[1])),
                          proj)
    robots = [Robot(model, np.asarray(x0, dtype=float)) for x0 in dyn["x0"]]
    solver = dict(cfg.get("solver", {}))
    spec = ProblemSpec(
        robots=robots, footprint=footprint, basis=basis, phi=phi, dt=dyn["dt"], N=dyn["N"],
        R=np.asarray(cfg.get("control_weight", 1e-3), dtype=float),
        settings=SolverSettings(**solver), cloud=cloud, hit_radius=hit_radius,
        seed=cfg.get("seed", 0))
    cons = cfg.get("constraints", {})
    spec.constraints = default_constraints(
        spec, interior=cons.get("footprint_interior", True),
        h1=cons.get("h1"), h2=cons.get("h2"), h3=cons.get("h3"))
    return spec
