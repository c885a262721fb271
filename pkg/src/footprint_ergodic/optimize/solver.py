"""Direct-transcription solver: controls are the decision variables.

States come from rolling the controls out, so the only constraints left are
inequalities, handled by an augmented Lagrangian

    L = J + sum_j (max(0, lambda_j + mu g_j)^2 - lambda_j^2) / (2 mu)

with L-BFGS on the inner problems. Gradients flow back to controls through a
backward sweep over the step Jacobians.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .. import metric
from ..dynamics import Trajectory, rollout, step_jacobians
from ..footprint import Cone, realize_samples
from ..surface3d import freeze_rays
from . import lbfgs
from .problem import ProblemSpec, Rollout

logger = logging.getLogger(__name__)

# height floor for footprint realization at infeasible trial points
MIN_HEIGHT = 1e-6


class SolverFailure(RuntimeError):
    pass


@dataclass
class Terms:
    """Everything one evaluation produces."""

    rollout: Rollout
    coeffs: np.ndarray
    ergodicity: float
    control_cost: float
    grad_states: list
    grad_controls: list
    samples: list


@dataclass
class SolveResult:
    trajectories: list
    ergodicity: float
    control_cost: float
    violation: float
    log: list
    success: bool
    coeffs: np.ndarray
    armijo_ok: list = field(default_factory=list)
    al_values: list = field(default_factory=list)
    message: str = ""
    wall_time: float = 0.0


def freeze_surfaces(spec: ProblemSpec, states):
    if not isinstance(spec.footprint, Cone):
        return None
    return [freeze_rays(X, spec.cloud, spec.footprint, rb.dynamics.projection, spec.hit_radius)
            for X, rb in zip(states, spec.robots)]


def robot_samples(spec: ProblemSpec, i: int, X, frozen=None):
    """Sample set of robot i over the N metric steps (left endpoints)."""
    if frozen is not None:
        return frozen[i].realize(X[:-1])
    ws = spec.basis.workspace if spec.clamp_to_workspace else None
    return realize_samples(spec.footprint, spec.pattern, X[:-1],
                           spec.robots[i].dynamics.projection, ws, min_height=MIN_HEIGHT)


def _rollouts(spec: ProblemSpec, controls):
    Us = spec.split(controls) if np.ndim(controls) == 1 else list(controls)
    Xs = [rollout(rb.dynamics, rb.x0, U, spec.dt).states for rb, U in zip(spec.robots, Us)]
    return Xs, Us


def evaluate_terms(spec: ProblemSpec, controls, frozen=None, need_frozen=True) -> Terms:
    Xs, Us = _rollouts(spec, controls)
    if frozen is None and need_frozen:
        frozen = freeze_surfaces(spec, Xs)
    ro = Rollout(Xs, Us, frozen)
    samples = [robot_samples(spec, i, X, frozen) for i, X in enumerate(Xs)]
    per_robot = [metric.footprint_coeffs(s, spec.basis) for s in samples]
    c = metric.multi_robot_coeffs(per_robot)
    erg = metric.ergodicity(c, spec.phi, spec.basis)
    a = 2.0 * spec.basis.weights * (c - spec.phi) / spec.n_robots
    gX = [metric.coeff_pullback(s, a, spec.basis) for s in samples]
    cost = 0.0
    gU = []
    for U in Us:
        RU = U @ spec.R
        cost += spec.dt * float(np.sum(RU * U))
        gU.append(2.0 * spec.dt * RU)
    return Terms(ro, c, erg, cost, gX, gU, samples)


def objective(spec: ProblemSpec, controls, frozen=None) -> float:
    """Footprint ergodicity of the (averaged) coefficients plus dt * sum u^T R u."""
    t = evaluate_terms(spec, controls, frozen)
    return t.ergodicity + t.control_cost


def backward(spec: ProblemSpec, Xs, Us, dX, dU):
    """Pull state gradients back onto controls; returns one (N, m) array per robot."""
    out = []
    for rb, X, U, gx, gu in zip(spec.robots, Xs, Us, dX, dU):
        N = len(U)
        g = gu.copy()
        delta = gx[N].copy()
        # integrator Jacobians do not depend on (x, u)
        A, B = step_jacobians(rb.dynamics, X[0], U[0], spec.dt)
        AT, BT = A.T, B.T
        for t in range(N - 1, -1, -1):
            g[t] += BT @ delta
            delta = AT @ delta + gx[t]
        out.append(g)
    return out


def _al_terms(values, lam, mu):
    shifted = np.maximum(0.0, lam + mu * np.where(np.isfinite(values), values, -np.inf))
    shifted = np.where(np.isfinite(shifted), shifted, 0.0)
    return float(np.sum(shifted ** 2 - lam ** 2) / (2.0 * mu)), shifted


def al_value_and_grad(spec: ProblemSpec, controls, multipliers=None, mu=10.0, frozen=None,
                      need_frozen=True):
    """Augmented Lagrangian value and its exact gradient over the flat control vector."""
    if mu <= 0:
        raise ValueError("penalty mu must be positive")
    t = evaluate_terms(spec, controls, frozen, need_frozen)
    ro = t.rollout
    value = t.ergodicity + t.control_cost
    dX = [g.copy() for g in t.grad_states]
    dU = [g.copy() for g in t.grad_controls]
    for j, con in enumerate(spec.constraints):
        vals = con.values(ro)
        lam = np.zeros_like(vals) if multipliers is None else multipliers[j]
        extra, w = _al_terms(vals, lam, mu)
        value += extra
        con.pullback(ro, w, dX, dU)
    gU = backward(spec, ro.states, ro.controls, dX, dU)
    return value, np.concatenate([g.reshape(-1) for g in gU])


def max_violation(spec: ProblemSpec, ro: Rollout) -> float:
    worst = 0.0
    for con in spec.constraints:
        v = con.values(ro)
        if v.size:
            worst = max(worst, float(np.max(np.where(np.isfinite(v), v, 0.0), initial=0.0)))
    return worst


def initial_controls(spec: ProblemSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    parts = []
    for rb in spec.robots:
        lo, hi = rb.dynamics.control_bounds
        span = np.where(np.isfinite(hi - lo), hi - lo, 2.0)
        mid = np.where(np.isfinite(hi + lo), 0.5 * (hi + lo), 0.0)
        amp = spec.settings.init_amplitude * span
        parts.append((mid + rng.uniform(-1.0, 1.0, (spec.N, len(span))) * amp).reshape(-1))
    return np.concatenate(parts)


def zero_control_ergodicity(spec: ProblemSpec) -> float:
    return evaluate_terms(spec, np.zeros(spec.n_controls)).ergodicity


def solve(spec: ProblemSpec, controls0=None) -> SolveResult:
    st = spec.settings
    start = time.perf_counter()
    z = initial_controls(spec) if controls0 is None else np.asarray(controls0, dtype=float).copy()
    Xs, _ = _rollouts(spec, z)
    frozen = freeze_surfaces(spec, Xs)
    ro = Rollout(Xs, spec.split(z), frozen)
    mults = [np.zeros_like(c.values(ro)) for c in spec.constraints]
    mu = st.mu0
    log, armijo, al_values = [], [], []
    prev_violation = np.inf
    prev_obj = np.inf
    success, message = False, "outer iteration cap"

    for outer in range(st.max_outer):
        def fun(u):
            return al_value_and_grad(spec, u, mults, mu, frozen)

        res = lbfgs.minimize(fun, z, memory=st.memory, max_iter=st.max_inner, gtol=st.grad_tol)
        if not np.isfinite(res.f):
            raise SolverFailure(f"non-finite augmented Lagrangian at outer iteration {outer}")
        z = res.x
        armijo.extend(res.armijo_ok)
        al_values.append(res.f)

        terms = evaluate_terms(spec, z, frozen)
        viol_frozen = max_violation(spec, terms.rollout)
        # multiplier update on the hits the inner problem saw
        for j, con in enumerate(spec.constraints):
            v = con.values(terms.rollout)
            upd = np.maximum(0.0, mults[j] + mu * np.where(np.isfinite(v), v, -np.inf))
            mults[j] = np.clip(np.where(np.isfinite(upd), upd, 0.0), 0.0, st.lambda_max)

        # refresh the surface hits at the new iterate
        if frozen is not None:
            old = frozen
            frozen = freeze_surfaces(spec, terms.rollout.states)
            mults = _remap_multipliers(spec, mults, old, frozen)
            terms = evaluate_terms(spec, z, frozen)
        violation = max_violation(spec, terms.rollout)
        log.append({"iteration": outer, "ergodicity": terms.ergodicity,
                    "control_cost": terms.control_cost,
                    "max_constraint_violation": violation})
        logger.info("outer %d: erg=%.6g cost=%.3g viol=%.3g mu=%.3g inner=%d (%s)",
                    outer, terms.ergodicity, terms.control_cost, violation, mu,
                    res.iterations, res.message)

        gnorm = float(np.max(np.abs(res.g), initial=0.0))
        obj = terms.ergodicity + terms.control_cost
        settled = abs(prev_obj - obj) <= st.outer_rtol * max(abs(obj), 1e-300)
        prev_obj = obj
        if violation < st.violation_tol and (gnorm < st.grad_tol or res.message != "iteration cap"
                                             or settled):
            success, message = True, "converged"
            break
        if max(viol_frozen, violation) > st.progress_ratio * prev_violation:
            mu = min(mu * st.mu_growth, st.mu_max)
        prev_violation = max(viol_frozen, violation)

    terms = evaluate_terms(spec, z, frozen)
    violation = max_violation(spec, terms.rollout)
    if not success and violation < st.violation_tol:
        success, message = True, "feasible at iteration cap"
    if not np.isfinite(terms.ergodicity):
        raise SolverFailure("non-finite ergodicity at the final iterate")
    trajs = [Trajectory(X, U, spec.dt) for X, U in zip(terms.rollout.states,
                                                      terms.rollout.controls)]
    return SolveResult(trajs, terms.ergodicity, terms.control_cost, violation, log, success,
                       terms.coeffs, armijo, al_values, message, time.perf_counter() - start)


def _remap_multipliers(spec, mults, old, new):
    # surface-range slots keep their multiplier only where the ray still hits
    out = []
    for con, lam in zip(spec.constraints, mults):
        if getattr(con, "name", "") == "surface_range":
            keep = (old[con.robot].mask & new[con.robot].mask)[1:]
            lam = np.where(keep[..., None], lam, 0.0)
        out.append(lam)
    return out


def evaluate_trajectories(spec: ProblemSpec, states_list, controls_list=None):
    """Metrics of given trajectories: footprint and point ergodicity, violations."""
    from ..footprint import Point, SamplePattern

    Us = controls_list if controls_list is not None else \
        [np.zeros((len(X) - 1, rb.dynamics.control_dim)) for X, rb in zip(states_list, spec.robots)]
    frozen = freeze_surfaces(spec, states_list)
    samples = [robot_samples(spec, i, np.asarray(X), frozen) for i, X in enumerate(states_list)]
    c = metric.multi_robot_coeffs([metric.footprint_coeffs(s, spec.basis) for s in samples])
    pat = SamplePattern(np.zeros((1, 2)), np.ones(1))
    pc = metric.multi_robot_coeffs([
        metric.footprint_coeffs(
            realize_samples(Point(), pat, np.asarray(X)[:-1], rb.dynamics.projection), spec.basis)
        for X, rb in zip(states_list, spec.robots)])
    ro = Rollout([np.asarray(X) for X in states_list], [np.asarray(U) for U in Us], frozen)
    cost = sum(spec.dt * float(np.sum((U @ spec.R) * U)) for U in ro.controls)
    per = {}
    for con in spec.constraints:
        v = con.values(ro)
        worst = float(np.max(np.where(np.isfinite(v), v, 0.0), initial=0.0)) if v.size else 0.0
        per[con.name] = max(per.get(con.name, 0.0), worst)
    return {
        "footprint_ergodicity": metric.ergodicity(c, spec.phi, spec.basis),
        "point_ergodicity": metric.ergodicity(pc, spec.phi, spec.basis),
        "control_cost": cost,
        "max_constraint_violation": max(per.values(), default=0.0),
        "violations": per,
    }
