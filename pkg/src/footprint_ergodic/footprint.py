"""Sensor footprint models and their deterministic sample patterns.

A footprint is a state-dependent density over the workspace. For the metric
it is replaced by M weighted samples per time step whose positions are smooth
functions of the state, so every sample carries a Jacobian dw_m/dx.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import StateProjection
from .spectral import Workspace

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
# grid units per footprint radius for the default 5x5 pattern (M = 25)
DEFAULT_GRID_RATIO = 2.9


@dataclass(frozen=True)
class Point:
    """Dirac footprint at f_q(x)."""


@dataclass(frozen=True)
class FixedDisk:
    radius: float
    k_d: float | None = None
    M: int | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")


@dataclass(frozen=True)
class AltitudeDisk:
    """Uniform disk of radius k_h * f_h(x) centered at f_q(x).

    Sampling resolution is d(x) = k_d * f_h(x); by default k_d = k_h / 2.9,
    which gives a full 5x5 grid inside the disk. Alternatively give ``M``
    (an odd square) to get an n x n grid with its corners just inside the rim.
    """

    k_h: float
    k_d: float | None = None
    M: int | None = None

    def __post_init__(self):
        if self.k_h <= 0:
            raise ValueError("k_h must be positive")
        if self.k_d is not None and self.k_d <= 0:
            raise ValueError("k_d must be positive")


@dataclass(frozen=True)
class Cone:
    """Viewing cone of half-angle arctan(k_h); realized by ray casting in surface3d."""

    k_h: float
    M: int = 25
    axis_policy: str = "object"

    def __post_init__(self):
        if self.k_h <= 0:
            raise ValueError("k_h must be positive")
        if self.M < 1:
            raise ValueError("cone needs at least one ray")
        if self.axis_policy not in ("object", "down"):
            raise ValueError(f"unknown axis policy {self.axis_policy!r}")


FootprintModel = Point | FixedDisk | AltitudeDisk | Cone


@dataclass(frozen=True, eq=False)
class SamplePattern:
    """State-independent offsets (unit-disk coordinates or unit directions) and weights."""

    offsets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        off = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(off) < 1 or len(w) != len(off):
            raise ValueError("pattern needs M >= 1 offsets with one weight each")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError("pattern weights must be nonnegative and sum to 1")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Realized samples for N time steps.

    points   (N, M, nu)     sample positions in the workspace
    weights  (N, M)         per-step weights (sum to 1, or all zero for an empty step)
    jac      (N, M, nu, n)  d points / d state
    clamped  (N, M)         True where a sample was pulled back into the workspace
    """

    points: np.ndarray
    weights: np.ndarray
    jac: np.ndarray
    clamped: np.ndarray

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def M(self) -> int:
        return self.points.shape[1]


def footprint_radius(model, x, projection: StateProjection) -> float:
    if isinstance(model, Point):
        return 0.0
    if isinstance(model, FixedDisk):
        return model.radius
    if isinstance(model, AltitudeDisk):
        h = float(projection.h(x))
        if h <= 0:
            raise ValueError(f"sensor height must be positive, got {h}")
        return model.k_h * h
    raise TypeError(f"no planar radius for {type(model).__name__}")


def footprint_density(model, w, x, projection: StateProjection) -> float:
    """Density of the footprint at workspace point w for state x.

    The point footprint is a Dirac delta: inf at f_q(x), 0 elsewhere.
    """
    q = projection.q(x)
    d = float(np.linalg.norm(np.asarray(w, dtype=float) - q))
    if isinstance(model, Point):
        return math.inf if d == 0.0 else 0.0
    r = footprint_radius(model, x, projection)
    return 1.0 / (math.pi * r * r) if d <= r else 0.0


def _grid_pattern(spacing: float) -> np.ndarray:
    # spacing in units of the radius; keep every grid node inside the unit disk
    j_max = int(math.floor(1.0 / spacing + 1e-12))
    j = np.arange(-j_max, j_max + 1)
    g = np.stack(np.meshgrid(j, j, indexing="ij"), axis=-1).reshape(-1, 2) * spacing
    return g[np.linalg.norm(g, axis=1) <= 1.0 + 1e-12]


def _square_pattern(M: int) -> np.ndarray:
    n = math.isqrt(M)
    if n * n != M or n % 2 == 0:
        raise ValueError(f"grid patterns need M to be an odd square, got {M}")
    if n == 1:
        return np.zeros((1, 2))
    half = (n - 1) // 2
    spacing = 1.0 / (half * DEFAULT_GRID_RATIO / 2.0)
    j = np.arange(-half, half + 1)
    return np.stack(np.meshgrid(j, j, indexing="ij"), axis=-1).reshape(-1, 2) * spacing


def cap_directions(half_angle: float, M: int) -> np.ndarray:
    """M unit vectors about +z within ``half_angle``, Fibonacci spiral on the cap."""
    if M == 1:
        return np.array([[0.0, 0.0, 1.0]])
    i = np.arange(M)
    z = 1.0 - (1.0 - math.cos(half_angle)) * (i + 0.5) / M
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def sample_pattern(model) -> SamplePattern:
    if isinstance(model, Point):
        offsets = np.zeros((1, 2))
    elif isinstance(model, Cone):
        offsets = cap_directions(math.atan(model.k_h), model.M)
    elif isinstance(model, (FixedDisk, AltitudeDisk)):
        if model.M is not None and model.k_d is not None:
            raise ValueError("give either M or k_d, not both")
        if model.M is not None:
            offsets = _square_pattern(model.M)
        else:
            scale = model.k_h if isinstance(model, AltitudeDisk) else model.radius
            k_d = model.k_d if model.k_d is not None else scale / DEFAULT_GRID_RATIO
            offsets = _grid_pattern(k_d / scale)
    else:
        raise TypeError(f"unknown footprint model {model!r}")
    M = len(offsets)
    return SamplePattern(offsets, np.full(M, 1.0 / M))


def realize_samples(model, pattern: SamplePattern, states, projection: StateProjection,
                    workspace: Workspace | None = None,
                    min_height: float | None = None) -> SampleSet:
    """Sample positions and Jacobians for every state in ``states`` (shape (N, n)).

    With a workspace given, samples outside it are clamped and the clamped
    coordinates get zero Jacobian rows (the derivative of the clamp).
    ``min_height`` floors f_h(x) instead of raising on nonpositive heights;
    the optimizer uses it so line-search trial points stay evaluable.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    N, n = X.shape
    q = projection.q(X)                             # (N, nu)
    nu = q.shape[1]
    Jq = projection.q_jacobian(n)                   # (nu, n)
    M = pattern.M
    if isinstance(model, Cone):
        raise TypeError("cone footprints are realized against a surface, see surface3d")
    if isinstance(model, Point):
        pts = q[:, None, :].copy()
        jac = np.broadcast_to(Jq, (N, 1, nu, n)).copy()
    else:
        g = pattern.offsets[:, :nu]                 # (M, nu)
        if isinstance(model, FixedDisk):
            pts = q[:, None, :] + model.radius * g[None]
            jac = np.broadcast_to(Jq, (N, M, nu, n)).copy()
        else:
            h = projection.h(X)
            floored = np.zeros(N, dtype=bool)
            if min_height is not None:
                floored = h < min_height
                h = np.maximum(h, min_height)
            if np.any(h <= 0):
                raise ValueError("sensor height must be positive at every step")
            r = model.k_h * h                       # (N,)
            pts = q[:, None, :] + r[:, None, None] * g[None]
            eh = projection.h_jacobian(n)
            jac = Jq[None, None] + model.k_h * g[None, :, :, None] * eh[None, None, None, :]
            jac = np.broadcast_to(jac, (N, M, nu, n)).copy()
            jac[floored] = Jq
    clamped = np.zeros(pts.shape[:2], dtype=bool)
    if workspace is not None:
        L = np.asarray(workspace.lengths)
        out = (pts < 0.0) | (pts > L)
        if out.any():
            pts = np.clip(pts, 0.0, L)
            jac[out] = 0.0
            clamped = out.any(axis=-1)
    weights = np.broadcast_to(pattern.weights, (N, len(pattern.weights))).copy()
    return SampleSet(pts, weights, jac, clamped)
