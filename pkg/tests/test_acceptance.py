"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the terminal
summary (see conftest.py), then asserts. Solver-heavy checks are marked slow.
"""
import copy
import json
import math
import time

import numpy as np
import pytest

from footprint_ergodic import metric
from footprint_ergodic.cli import main
from footprint_ergodic.config import build_problem, preset_config
from footprint_ergodic.dynamics import StateProjection
from footprint_ergodic.footprint import AltitudeDisk, Point, realize_samples, sample_pattern
from footprint_ergodic.optimize import al_value_and_grad, evaluate_trajectories, solve
from footprint_ergodic.optimize.solver import (evaluate_terms, freeze_surfaces,
                                               initial_controls, zero_control_ergodicity)
from footprint_ergodic.spectral import SpectralBasis, weight

from conftest import central_diff, rel_err

PROJ = StateProjection((0, 1), 2)
SEEDS = (0, 1, 2)
_solved = {}


def _run(cfg):
    """Solve a config, reusing the result of an identical earlier solve (runs are deterministic)."""
    key = repr(cfg)
    if key not in _solved:
        _solved[key] = solve(build_problem(cfg))
    return _solved[key]


def _drone(seed, footprint=None):
    cfg = copy.deepcopy(preset_config("drone"))
    cfg["seed"] = seed
    if footprint:
        cfg["footprint"] = footprint
    return cfg


def _median_ergodicity(cfgs):
    return float(np.median([_run(c).ergodicity for c in cfgs]))


# -- 1 ------------------------------------------------------------------------------

def test_criterion_1_spectral(verdict):
    t0 = time.perf_counter()
    basis = SpectralBasis.build((1.0, 1.0), (4, 4))
    n = 400
    g = (np.arange(n) + 0.5) / n
    W = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    F = basis.evaluate(W)                                   # (P, 16)
    gram = F.T @ F / n ** 2
    ortho = float(np.max(np.abs(gram - np.eye(basis.size))))

    big = SpectralBasis.build((1.0, 1.0), (5, 4))
    lam_err = 0.0
    for i, k in enumerate(big.indices):                     # 20 indices
        expect = (1.0 + k[0] ** 2 + k[1] ** 2) ** (-1.5)
        lam_err = max(lam_err, abs(big.weights[i] - expect), abs(weight(k, 2) - expect))
    dt = time.perf_counter() - t0
    ok = ortho < 1e-3 and lam_err == 0.0 and len(big.indices) == 20 and dt < 5
    verdict(1, ok, f"gram dev {ortho:.2e}, Lambda max err {lam_err:.1e}, {dt:.2f}s")
    assert ok


# -- 2 ------------------------------------------------------------------------------

GRAD_CFG = {
    "workspace": [1.0, 1.0],
    "map": {"preset": "mixed"},
    "basis": [10, 10],
    "dynamics": {"model": "single_integrator", "n": 3, "dt": 0.1, "N": 20,
                 "x0": [[0.5, 0.5, 0.3]],
                 "control_bounds": [[-0.5, -0.5, -0.2], [0.5, 0.5, 0.2]],
                 "state_bounds": [[0.0, 0.0, 0.1], [1.0, 1.0, 0.5]],
                 "q_index": [0, 1], "h_index": 2},
    "footprint": {"variant": "altitude", "k_h": 0.25, "M": 25},
}


def test_criterion_2_gradients(verdict):
    t0 = time.perf_counter()
    basis = SpectralBasis.build((1.0, 1.0), (10, 10))
    spec0 = build_problem(GRAD_CFG)
    phi = spec0.phi
    worst_metric = worst_al = 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        model = AltitudeDisk(float(rng.uniform(0.1, 0.4)))
        pat = sample_pattern(model)
        assert pat.offsets.shape[0] == 25
        X = np.column_stack([rng.uniform(0.25, 0.75, (21, 2)), rng.uniform(0.1, 0.5, 21)])

        def erg(v):
            s = realize_samples(model, pat, v.reshape(X.shape)[:-1], PROJ)
            return metric.ergodicity(metric.footprint_coeffs(s, basis), phi, basis)

        g = metric.metric_gradient(realize_samples(model, pat, X[:-1], PROJ), phi, basis)
        worst_metric = max(worst_metric, rel_err(g, central_diff(erg, X.reshape(-1)).reshape(X.shape)))

        cfg = copy.deepcopy(GRAD_CFG)
        cfg["footprint"]["k_h"] = model.k_h
        cfg["seed"] = seed
        spec = build_problem(cfg)
        z = initial_controls(spec) + rng.normal(scale=0.2, size=spec.n_controls)
        ro = evaluate_terms(spec, z).rollout
        mults = None if seed % 2 else [rng.uniform(0, 1, c.values(ro).shape) for c in spec.constraints]
        mu = float(rng.uniform(5.0, 100.0))
        _, ga = al_value_and_grad(spec, z, mults, mu)
        fd = central_diff(lambda v: al_value_and_grad(spec, v, mults, mu)[0], z)
        worst_al = max(worst_al, rel_err(ga, fd))
    dt = time.perf_counter() - t0
    ok = worst_metric < 1e-5 and worst_al < 1e-5 and dt < 30
    verdict(2, ok, f"metric rel {worst_metric:.1e}, AL rel {worst_al:.1e}, {dt:.1f}s")
    assert ok


# -- 3 ------------------------------------------------------------------------------

def test_criterion_3_terminal_form(verdict):
    t0 = time.perf_counter()
    basis = SpectralBasis.build((1.0, 1.0), (10, 10))
    phi = build_problem(GRAD_CFG).phi
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(1, 60))
        dt = float(rng.uniform(0.01, 1.0))
        X = np.column_stack([rng.uniform(0, 1, (N + 1, 2)), rng.uniform(0.05, 0.6, N + 1)])
        model = AltitudeDisk(float(rng.uniform(0.01, 1.0)))
        s = realize_samples(model, sample_pattern(model), X[:-1], PROJ)
        direct = metric.ergodicity(metric.footprint_coeffs(s, basis), phi, basis)
        worst = max(worst, abs(direct - metric.terminal_form_metric(s, phi, basis, dt)[1]))
    dt = time.perf_counter() - t0
    ok = worst < 1e-10 and dt < 5
    verdict(3, ok, f"max |gap| {worst:.1e}, {dt:.2f}s")
    assert ok


# -- 4 ------------------------------------------------------------------------------

def test_criterion_4_point_limit(verdict):
    t0 = time.perf_counter()
    basis = SpectralBasis.build((1.0, 1.0), (10, 10))
    phi = build_problem(GRAD_CFG).phi
    rng = np.random.default_rng(4)
    X = np.column_stack([rng.uniform(0.1, 0.9, (51, 2)), rng.uniform(0.1, 0.5, 51)])

    def erg(model):
        s = realize_samples(model, sample_pattern(model), X[:-1], PROJ)
        return metric.ergodicity(metric.footprint_coeffs(s, basis), phi, basis)

    e_point = erg(Point())
    gaps = [abs(erg(AltitudeDisk(k)) - e_point) for k in (0.2, 0.02, 0.002)]
    dt = time.perf_counter() - t0
    ok = gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-4 and dt < 10
    verdict(4, ok, "gaps " + ", ".join(f"{g:.2e}" for g in gaps) + f", {dt:.2f}s")
    assert ok


# -- 5 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_efficacy(verdict):
    t0 = time.perf_counter()
    cfg = _drone(0)
    e0 = zero_control_ergodicity(build_problem(cfg))
    res = _run(cfg)
    dt = time.perf_counter() - t0
    ratio = res.ergodicity / e0
    ok = ratio <= 0.10 and dt < 120
    verdict(5, ok, f"final/zero-control {ratio:.3f} ({res.ergodicity:.2e}/{e0:.2e}), {dt:.1f}s")
    assert ok


# -- 6 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_baselines(verdict):
    t0 = time.perf_counter()
    dynamic = _median_ergodicity([_drone(s) for s in SEEDS])
    fixed = {r: _median_ergodicity([_drone(s, {"variant": "fixed", "r": r}) for s in SEEDS])
             for r in (0.025, 0.05, 0.1)}
    dt = time.perf_counter() - t0
    best = min(fixed.values())
    ok = dynamic <= best and dt < 900
    detail = ", ".join(f"r={r} {v:.2e}" for r, v in fixed.items())
    verdict(6, ok, f"dynamic {dynamic:.2e} vs fixed [{detail}], {dt:.0f}s")
    assert ok


# -- 7 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_horizon(verdict):
    t0 = time.perf_counter()
    med = {}
    for T in (10, 50, 100):
        cfgs = []
        for s in SEEDS:
            c = _drone(s)
            c["dynamics"]["dt"] = 1.0
            c["dynamics"]["N"] = T
            cfgs.append(c)
        med[T] = _median_ergodicity(cfgs)
    dt = time.perf_counter() - t0
    ok = med[10] >= med[50] >= med[100] and dt < 900
    verdict(7, ok, ", ".join(f"T={T} {v:.2e}" for T, v in med.items()) + f", {dt:.0f}s")
    assert ok


# -- 8 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_constraints_3d(verdict):
    t0 = time.perf_counter()
    cfg = preset_config("swarm3d")
    spec = build_problem(cfg)
    res = _run(cfg)
    X = [tr.states for tr in res.trajectories]
    ev = evaluate_trajectories(spec, X, [tr.controls for tr in res.trajectories])
    tol = spec.settings.violation_tol
    h1, h2, h3 = (cfg["constraints"][k] for k in ("h1", "h2", "h3"))
    dist = float(np.min(np.linalg.norm(X[0] - X[1], axis=1)[1:]))
    lo, hi = math.inf, -math.inf
    for Xi, fr in zip(X, freeze_surfaces(spec, X)):
        d = np.linalg.norm(Xi[:, None, :] - fr.hit_points, axis=-1)[1:][fr.mask[1:]]
        lo, hi = min(lo, float(d.min())), max(hi, float(d.max()))
    dt = time.perf_counter() - t0
    ok = (ev["max_constraint_violation"] < 1e-3 and dist >= h1 - tol
          and lo >= h3 - tol and hi <= h2 + tol and dt < 600)
    verdict(8, ok, f"violation {ev['max_constraint_violation']:.1e}, min dist {dist:.3f}, "
                   f"ranges [{lo:.4f}, {hi:.4f}], {dt:.0f}s")
    assert ok


# -- 9 ------------------------------------------------------------------------------

def test_criterion_9_determinism(verdict, tmp_path):
    cfg = copy.deepcopy(GRAD_CFG)
    cfg["dynamics"]["N"] = 15
    cfg["basis"] = [6, 6]
    cfg["solver"] = {"max_outer": 4, "max_inner": 40}
    cfg["seed"] = 11
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    codes = [main(["plan", "--config", str(path), "--out", str(tmp_path / d), "--no-figures"])
             for d in ("a", "b")]
    a = (tmp_path / "a" / "trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory.csv").read_bytes()
    ok = a == b and len(a) > 0 and all(c in (0, 3) for c in codes)
    verdict(9, ok, f"{len(a)} bytes, identical={a == b}, exit codes {codes}")
    assert ok


# -- 10 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_footprint_size(verdict):
    t0 = time.perf_counter()
    med = {k: _median_ergodicity([_drone(s, {"variant": "altitude", "k_h": k, "M": 25}) for s in SEEDS])
           for k in (0.01, 0.25, 1.25)}
    dt = time.perf_counter() - t0
    ok = med[0.25] < med[0.01] and med[0.25] < med[1.25]
    verdict(10, ok, ", ".join(f"k_h={k} {v:.2e}" for k, v in med.items()) + f", {dt:.0f}s")
    assert ok
