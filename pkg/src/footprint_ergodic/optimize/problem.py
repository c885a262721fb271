"""Problem instances and inequality constraints g(X, U) <= 0.

Constraints see a ``Rollout``: per-robot states (N+1, n) and controls (N, m),
plus the frozen surface hits when the footprint is a cone. Each constraint
returns an array of values (``-inf`` marks an inactive slot) and pulls a
same-shaped weight array back onto state and control gradients.

The initial state x_0 is fixed, so state constraints apply to x_1..x_N.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..dynamics import DynamicsModel
from ..footprint import AltitudeDisk, Cone, FixedDisk, SamplePattern, sample_pattern
from ..spectral import SpectralBasis
from ..surface3d import PointCloud


@dataclass
class Rollout:
    states: list
    controls: list
    frozen: list | None = None

    def zero_grads(self):
        return [np.zeros_like(X) for X in self.states], [np.zeros_like(U) for U in self.controls]


def _box_values(A, lo, hi):
    with np.errstate(invalid="ignore"):
        below = np.where(np.isfinite(lo), lo - A, -np.inf)
        above = np.where(np.isfinite(hi), A - hi, -np.inf)
    return np.stack([below, above], axis=-1)


def _weights(w):
    return np.where(np.isfinite(w), w, 0.0)


@dataclass(frozen=True, eq=False)
class StateBox:
    robot: int
    lower: np.ndarray
    upper: np.ndarray
    name: str = "state_box"

    def values(self, r: Rollout):
        return _box_values(r.states[self.robot][1:], self.lower, self.upper)

    def pullback(self, r: Rollout, w, dX, dU):
        w = _weights(w)
        dX[self.robot][1:] += w[..., 1] - w[..., 0]


@dataclass(frozen=True, eq=False)
class ControlBox:
    robot: int
    lower: np.ndarray
    upper: np.ndarray
    name: str = "control_box"

    def values(self, r: Rollout):
        return _box_values(r.controls[self.robot], self.lower, self.upper)

    def pullback(self, r: Rollout, w, dX, dU):
        w = _weights(w)
        dU[self.robot] += w[..., 1] - w[..., 0]


@dataclass(frozen=True, eq=False)
class FootprintInterior:
    """Keep the whole planar footprint inside the workspace: r(x) <= q_o <= L_o - r(x)."""

    robot: int
    model: object
    q_index: tuple
    h_index: int | None
    lengths: tuple
    name: str = "footprint_interior"

    def _radius(self, X):
        if isinstance(self.model, AltitudeDisk):
            return self.model.k_h * X[:, self.h_index]
        if isinstance(self.model, FixedDisk):
            return np.full(len(X), self.model.radius)
        return np.zeros(len(X))

    def values(self, r: Rollout):
        X = r.states[self.robot][1:]
        q = X[:, list(self.q_index)]
        rad = self._radius(X)[:, None]
        L = np.asarray(self.lengths)
        return np.stack([rad - q, q + rad - L], axis=-1)

    def pullback(self, r: Rollout, w, dX, dU):
        w = _weights(w)
        g = dX[self.robot][1:]
        for o, idx in enumerate(self.q_index):
            g[:, idx] += w[:, o, 1] - w[:, o, 0]
        if isinstance(self.model, AltitudeDisk):
            g[:, self.h_index] += self.model.k_h * (w[:, :, 0] + w[:, :, 1]).sum(axis=1)


def _pairwise(r: Rollout, i, j, q_index):
    d = r.states[i][1:, list(q_index)] - r.states[j][1:, list(q_index)]
    dist = np.linalg.norm(d, axis=1)
    unit = np.zeros_like(d)
    ok = dist > 1e-12
    unit[ok] = d[ok] / dist[ok, None]
    # coincident robots: push apart along the first axis
    unit[~ok, 0] = 1.0
    return dist, unit


@dataclass(frozen=True, eq=False)
class InterRobotDistance:
    """h1 - ||p_i - p_j|| <= 0 for every robot pair and step."""

    h1: float
    n_robots: int
    q_index: tuple
    name: str = "inter_robot"

    def values(self, r: Rollout):
        out = [self.h1 - _pairwise(r, i, j, self.q_index)[0]
               for i, j in combinations(range(self.n_robots), 2)]
        return np.stack(out) if out else np.zeros((0, len(r.states[0]) - 1))

    def pullback(self, r: Rollout, w, dX, dU):
        w = _weights(w)
        q = list(self.q_index)
        for pair, (i, j) in enumerate(combinations(range(self.n_robots), 2)):
            _, unit = _pairwise(r, i, j, self.q_index)
            g = -w[pair][:, None] * unit
            dX[i][1:, q] += g
            dX[j][1:, q] -= g


@dataclass(frozen=True, eq=False)
class SurfaceRange:
    """h3 <= ||p_i(t) - r|| <= h2 for every frozen surface hit r of robot i at step t."""

    robot: int
    h2: float
    h3: float
    q_index: tuple
    name: str = "surface_range"

    def _geometry(self, r: Rollout):
        hits = r.frozen[self.robot].hit_points[1:]          # (N, M, 3)
        p = r.states[self.robot][1:, list(self.q_index)]    # (N, 3)
        d = p[:, None, :] - hits
        dist = np.linalg.norm(d, axis=-1)
        mask = np.isfinite(dist)
        unit = np.zeros_like(d)
        ok = mask & (dist > 1e-12)
        unit[ok] = d[ok] / dist[ok][:, None]
        return dist, unit, mask

    def values(self, r: Rollout):
        dist, _, mask = self._geometry(r)
        far = np.where(mask, dist - self.h2, -np.inf)
        near = np.where(mask, self.h3 - dist, -np.inf)
        return np.stack([far, near], axis=-1)

    def pullback(self, r: Rollout, w, dX, dU):
        w = _weights(w)
        _, unit, _ = self._geometry(r)
        coef = w[..., 0] - w[..., 1]
        dX[self.robot][1:, list(self.q_index)] += np.einsum("tm,tmc->tc", coef, unit)


def constraint_eval(constraint, rollout: Rollout) -> np.ndarray:
    return constraint.values(rollout)


@dataclass
class SolverSettings:
    max_outer: int = 15
    max_inner: int = 300
    memory: int = 10
    mu0: float = 10.0
    mu_growth: float = 5.0
    mu_max: float = 1e6
    lambda_max: float = 1e8
    grad_tol: float = 1e-6
    violation_tol: float = 1e-3
    init_amplitude: float = 0.05
    # violation must shrink by this factor per outer iteration or mu grows
    progress_ratio: float = 0.25
    # feasible iterates whose objective moves less than this (relative) end the run
    outer_rtol: float = 1e-3


@dataclass(frozen=True, eq=False)
class Robot:
    dynamics: DynamicsModel
    x0: np.ndarray


@dataclass(eq=False)
class ProblemSpec:
    robots: list
    footprint: object
    basis: SpectralBasis
    phi: np.ndarray
    dt: float
    N: int
    R: np.ndarray
    constraints: list = field(default_factory=list)
    settings: SolverSettings = field(default_factory=SolverSettings)
    clamp_to_workspace: bool = True
    cloud: PointCloud | None = None
    hit_radius: float | None = None
    seed: int = 0
    pattern: SamplePattern | None = None

    def __post_init__(self):
        if self.dt <= 0 or self.N < 1:
            raise ValueError("horizon must be positive: need dt > 0 and N >= 1")
        if not self.robots:
            raise ValueError("need at least one robot")
        m = self.robots[0].dynamics.control_dim
        R = np.asarray(self.R, dtype=float)
        if R.ndim == 0:
            R = R * np.eye(m)
        elif R.ndim == 1:
            R = np.diag(R)
        if R.shape != (m, m) or not np.allclose(R, R.T):
            raise ValueError(f"R must be a symmetric {m}x{m} matrix")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        self.R = R
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != (self.basis.size,):
            raise ValueError("phi does not match the basis")
        if isinstance(self.footprint, Cone) and self.cloud is None:
            raise ValueError("cone footprints need a point cloud to sample from")
        if self.pattern is None:
            self.pattern = sample_pattern(self.footprint)
        for rb in self.robots:
            if np.asarray(rb.x0).shape != (rb.dynamics.n,):
                raise ValueError("x0 does not match the robot state dimension")

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def horizon(self) -> float:
        return self.N * self.dt

    @property
    def n_controls(self) -> int:
        return sum(rb.dynamics.control_dim for rb in self.robots) * self.N

    def split(self, z):
        out, k = [], 0
        for rb in self.robots:
            m = rb.dynamics.control_dim
            out.append(np.asarray(z[k:k + self.N * m]).reshape(self.N, m))
            k += self.N * m
        return out


def default_constraints(spec: ProblemSpec, interior=True, h1=None, h2=None, h3=None):
    """State/control boxes per robot, plus the optional footprint, pair and range terms."""
    cons = []
    for i, rb in enumerate(spec.robots):
        dyn = rb.dynamics
        cons.append(StateBox(i, *dyn.state_bounds))
        cons.append(ControlBox(i, *dyn.control_bounds))
        if interior and not isinstance(spec.footprint, Cone):
            proj = dyn.projection
            cons.append(FootprintInterior(i, spec.footprint, proj.q_index, proj.h_index,
                                          spec.basis.workspace.lengths))
    q_index = spec.robots[0].dynamics.projection.q_index
    if h1 is not None and spec.n_robots > 1:
        cons.append(InterRobotDistance(h1, spec.n_robots, q_index))
    if h2 is not None or h3 is not None:
        if not isinstance(spec.footprint, Cone):
            raise ValueError("surface range constraints need a cone footprint")
        for i in range(spec.n_robots):
            cons.append(SurfaceRange(i, np.inf if h2 is None else h2,
                                     -np.inf if h3 is None else h3, q_index))
    return cons

