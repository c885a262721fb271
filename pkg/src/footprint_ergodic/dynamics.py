"""Discrete-time integrator models, rollouts and step Jacobians."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StateProjection:
    """Coordinate projections of the robot state.

    ``q_index`` picks the workspace position f_q(x); ``h_index`` picks the
    sensor height f_h(x) (None when the footprint does not depend on height).
    """

    q_index: tuple[int, ...]
    h_index: int | None = None

    def q(self, states) -> np.ndarray:
        return np.asarray(states)[..., list(self.q_index)]

    def h(self, states) -> np.ndarray:
        if self.h_index is None:
            raise ValueError("projection has no height coordinate")
        return np.asarray(states)[..., self.h_index]

    def q_jacobian(self, n: int) -> np.ndarray:
        J = np.zeros((len(self.q_index), n))
        J[np.arange(len(self.q_index)), list(self.q_index)] = 1.0
        return J

    def h_jacobian(self, n: int) -> np.ndarray:
        e = np.zeros(n)
        e[self.h_index] = 1.0
        return e


@dataclass(frozen=True, eq=False)
class DynamicsModel:
    """Integrator in ``dof`` position coordinates.

    order 1 (single integrator): x = p, u = dp/dt.
    order 2 (double integrator): x = (p, v), u = dv/dt.

    Bounds are (lower, upper) arrays; +-inf means unbounded.
    """

    dof: int
    order: int = 1
    control_bounds: tuple[np.ndarray, np.ndarray] | None = None
    state_bounds: tuple[np.ndarray, np.ndarray] | None = None
    projection: StateProjection | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("only single (1) and double (2) integrators are supported")
        if self.dof < 1:
            raise ValueError("need at least one position coordinate")
        for name, size in (("control_bounds", self.control_dim), ("state_bounds", self.n)):
            b = getattr(self, name)
            if b is None:
                b = (np.full(size, -np.inf), np.full(size, np.inf))
            lo = np.broadcast_to(np.asarray(b[0], dtype=float), (size,)).copy()
            hi = np.broadcast_to(np.asarray(b[1], dtype=float), (size,)).copy()
            if np.any(lo > hi):
                raise ValueError(f"{name}: empty box, lower > upper")
            object.__setattr__(self, name, (lo, hi))
        if self.projection is None:
            object.__setattr__(self, "projection", StateProjection(tuple(range(self.dof))))

    @property
    def n(self) -> int:
        return self.dof * self.order

    @property
    def control_dim(self) -> int:
        return self.dof

    def f(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.order == 1:
            return u.copy()
        return np.concatenate([x[..., self.dof:], u], axis=-1)


def step(model: DynamicsModel, x, u, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    return x + model.f(x, u) * dt


def step_jacobians(model: DynamicsModel, x, u, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(dx'/dx, dx'/du) of the explicit Euler step. Constant for integrators."""
    n, m = model.n, model.control_dim
    A = np.eye(n)
    B = np.zeros((n, m))
    if model.order == 1:
        B[:] = dt * np.eye(m)
    else:
        d = model.dof
        A[:d, d:] = dt * np.eye(d)
        B[d:, :] = dt * np.eye(d)
    return A, B


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    controls: np.ndarray
    dt: float

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.states, dtype=float))
        U = np.asarray(self.controls, dtype=float)
        if U.ndim != 2:
            U = U.reshape(len(U), -1) if U.size else np.zeros((0, 0))
        if len(X) != len(U) + 1:
            raise ValueError(f"need len(states) == len(controls) + 1, got {len(X)}, {len(U)}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "controls", U)

    @property
    def N(self) -> int:
        return len(self.controls)

    @property
    def horizon(self) -> float:
        return self.N * self.dt


def rollout(model: DynamicsModel, x0, controls, dt: float) -> Trajectory:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,):
        raise ValueError(f"x0 must have shape ({model.n},), got {x0.shape}")
    U = np.asarray(controls, dtype=float).reshape(-1, model.control_dim)
    X = np.empty((len(U) + 1, model.n))
    X[0] = x0
    for t in range(len(U)):
        X[t + 1] = step(model, X[t], U[t], dt)
    return Trajectory(X, U, dt)
