"""Ergodic and footprint-ergodic metrics with exact gradients.

Time integrals use the left-endpoint rule over the N control intervals, so
``c_k = (1/N) sum_{t<N} ...`` and the final state never enters the metric.
Gradients are those of this discrete objective.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import StateProjection, Trajectory
from .footprint import SampleSet
from .spectral import SpectralBasis


@dataclass(frozen=True, eq=False)
class ErgodicEval:
    coeffs: np.ndarray
    value: float
    grad: np.ndarray


@dataclass(frozen=True, eq=False)
class AuxiliaryState:
    """Per-coefficient accumulator s(t) and the terminal weight Q = (2/T^2) diag(Lambda)."""

    s: np.ndarray       # (N+1, |K|), s[0] = 0
    Q: np.ndarray       # (|K|,) diagonal

    @property
    def terminal(self) -> np.ndarray:
        return self.s[-1]


def point_coeffs(traj: Trajectory, basis: SpectralBasis, projection: StateProjection) -> np.ndarray:
    if traj.N < 1:
        raise ValueError("need at least one control interval")
    q = projection.q(traj.states[:-1])
    return basis.project(q, np.full(len(q), 1.0 / len(q)))


def footprint_coeffs(samples: SampleSet, basis: SpectralBasis) -> np.ndarray:
    """Time-averaged sample coefficients, normalized by the total sample weight."""
    total = samples.weights.sum()
    if total <= 0:
        return np.zeros(basis.size)
    pts = samples.points.reshape(-1, basis.dim)
    return basis.project(pts, samples.weights.reshape(-1) / total)


def _check(c, phi, basis):
    c = np.asarray(c, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if c.shape != (basis.size,) or phi.shape != (basis.size,):
        raise ValueError(
            f"coefficient vectors must match the basis size {basis.size}, "
            f"got {c.shape} and {phi.shape}")
    return c, phi


def ergodicity(c, phi, basis: SpectralBasis, weights=None) -> float:
    """sum_k Lambda_k (c_k - phi_k)^2; ``weights`` overrides the basis Lambda."""
    c, phi = _check(c, phi, basis)
    lam = basis.weights if weights is None else np.asarray(weights, dtype=float)
    d = c - phi
    return float(np.sum(lam * d * d))


def coeff_pullback(samples: SampleSet, a, basis: SpectralBasis) -> np.ndarray:
    """sum_k a_k dc_k/dx_t for every step; returns shape (N+1, n), last row zero."""
    N, M, nu, n = samples.jac.shape
    total = samples.weights.sum()
    out = np.zeros((N + 1, n))
    if total <= 0:
        return out
    g = basis.contract_gradient(samples.points.reshape(-1, nu), a).reshape(N, M, nu)
    g *= (samples.weights / total)[..., None]
    out[:N] = np.einsum("tmo,tmon->tn", g, samples.jac)
    return out


def metric_gradient(samples: SampleSet, phi, basis: SpectralBasis,
                    coeffs=None) -> np.ndarray:
    """d/dx_t of sum_k Lambda_k (c'_k - phi_k)^2, shape (N+1, n)."""
    c = footprint_coeffs(samples, basis) if coeffs is None else coeffs
    c, phi = _check(c, phi, basis)
    return coeff_pullback(samples, 2.0 * basis.weights * (c - phi), basis)


def evaluate(samples: SampleSet, phi, basis: SpectralBasis) -> ErgodicEval:
    c = footprint_coeffs(samples, basis)
    return ErgodicEval(c, ergodicity(c, phi, basis), metric_gradient(samples, phi, basis, c))


def auxiliary_state(samples: SampleSet, phi, basis: SpectralBasis, dt: float) -> AuxiliaryState:
    """Integrate ds/dt = sum_m w_m F(w_m(t)) - phi with s(0) = 0 (explicit Euler)."""
    N = samples.N
    per_step = basis.evaluate(samples.points.reshape(-1, basis.dim)).reshape(N, samples.M, -1)
    step_w = samples.weights.sum(axis=1)
    rate = np.einsum("tm,tmk->tk", samples.weights, per_step) - step_w[:, None] * phi
    s = np.zeros((N + 1, basis.size))
    s[1:] = np.cumsum(rate * dt, axis=0)
    T = dt * step_w.sum()
    return AuxiliaryState(s, (2.0 / T ** 2) * basis.weights)


def terminal_form_metric(samples: SampleSet, phi, basis: SpectralBasis,
                         dt: float) -> tuple[np.ndarray, float]:
    """(s(T), 1/2 s(T)^T Q s(T)); equals the footprint ergodicity identically."""
    aux = auxiliary_state(samples, np.asarray(phi, dtype=float), basis, dt)
    sT = aux.terminal
    return sT, float(0.5 * np.sum(aux.Q * sT * sT))


def multi_robot_coeffs(per_robot: Sequence[np.ndarray]) -> np.ndarray:
    if len(per_robot) == 0:
        raise ValueError("need coefficients for at least one robot")
    stacked = np.stack([np.asarray(c, dtype=float) for c in per_robot])
    return stacked.mean(axis=0)
