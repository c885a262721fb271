"""Cosine Fourier basis over a box workspace [0, L_1] x ... x [0, L_nu].

The basis functions are

    F_k(w) = (1 / h_k) * prod_o cos(k_o * pi * w_o / L_o)

with h_k chosen so every F_k has unit L2 norm over the workspace, and the
coefficient weights are Lambda_k = (1 + |k|^2)^(-(nu + 1) / 2).

The index set is always a full grid enumerated row-major, which lets the
vectorized routines below evaluate all basis functions as outer products of
per-dimension cosine tables instead of looping over k.
"""
from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned box [0, L_1] x ... x [0, L_nu] with nu in {2, 3}."""

    lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        if len(lengths) not in (2, 3):
            raise ValueError(f"workspace must be 2D or 3D, got {len(lengths)} lengths")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ValueError(f"workspace lengths must be positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def contains(self, points, tol=0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        L = np.asarray(self.lengths)
        return np.all((p >= -tol) & (p <= L + tol), axis=-1)

    def clamp(self, points) -> np.ndarray:
        return np.clip(np.asarray(points, dtype=float), 0.0, np.asarray(self.lengths))


def index_set(per_dim_counts: Sequence[int]) -> list[tuple[int, ...]]:
    """Row-major enumeration of {0..K_1-1} x ... x {0..K_nu-1}, zero index first."""
    counts = [int(c) for c in per_dim_counts]
    if not counts or any(c < 1 for c in counts):
        raise ValueError(f"index counts must be >= 1, got {list(per_dim_counts)}")
    return list(itertools.product(*(range(c) for c in counts)))


def normalizer(k: Sequence[int], workspace: Workspace) -> float:
    """Closed-form L2 norm of prod_o cos(k_o pi w_o / L_o) over the workspace."""
    sq = 1.0
    for ko, Lo in zip(k, workspace.lengths):
        sq *= Lo if ko == 0 else Lo / 2.0
    return float(np.sqrt(sq))


def weight(k: Sequence[int], dim: int) -> float:
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    k = np.asarray(k, dtype=float)
    return float((1.0 + k @ k) ** (-(dim + 1) / 2.0))


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    workspace: Workspace
    counts: tuple[int, ...]
    indices: np.ndarray = field(init=False, repr=False)
    normalizers: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.workspace.dim:
            raise ValueError(
                f"need one count per workspace dimension ({self.workspace.dim}), got {counts}")
        object.__setattr__(self, "counts", counts)
        idx = np.array(index_set(counts), dtype=int)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(
            self, "normalizers",
            np.array([normalizer(k, self.workspace) for k in idx]))
        object.__setattr__(
            self, "weights",
            np.array([weight(k, self.workspace.dim) for k in idx]))

    @classmethod
    def build(cls, lengths, counts) -> "SpectralBasis":
        return cls(Workspace(tuple(lengths)), tuple(counts))

    @property
    def dim(self) -> int:
        return self.workspace.dim

    @property
    def size(self) -> int:
        return len(self.indices)

    def same_as(self, other: "SpectralBasis") -> bool:
        return self is other or (
            self.counts == other.counts and self.workspace == other.workspace)

    # -- per-dimension tables ------------------------------------------------

    def _tables(self, points):
        """cos and d/dw cos tables, one (P, K_o) pair per dimension."""
        p = np.asarray(points, dtype=float).reshape(-1, self.dim)
        cos_t, dcos_t = [], []
        for o, (Ko, Lo) in enumerate(zip(self.counts, self.workspace.lengths)):
            freq = np.arange(Ko) * np.pi / Lo
            arg = p[:, o:o + 1] * freq
            cos_t.append(np.cos(arg))
            dcos_t.append(-freq * np.sin(arg))
        return p, cos_t, dcos_t

    def _inv_h_grid(self):
        return (1.0 / self.normalizers).reshape(self.counts)

    # -- vectorized evaluation -----------------------------------------------

    def evaluate(self, points) -> np.ndarray:
        """F_k at every point: array of shape (P, |K|)."""
        p, cos_t, _ = self._tables(points)
        letters = string.ascii_lowercase[:self.dim]
        expr = ",".join(f"p{c}" for c in letters) + "->p" + letters
        vals = np.einsum(expr, *cos_t).reshape(len(p), -1)
        return vals / self.normalizers

    def gradient(self, points) -> np.ndarray:
        """dF_k/dw at every point: array of shape (P, |K|, nu)."""
        p, cos_t, dcos_t = self._tables(points)
        letters = string.ascii_lowercase[:self.dim]
        expr = ",".join(f"p{c}" for c in letters) + "->p" + letters
        out = np.empty((len(p), self.size, self.dim))
        for o in range(self.dim):
            tabs = [dcos_t[j] if j == o else cos_t[j] for j in range(self.dim)]
            out[:, :, o] = np.einsum(expr, *tabs).reshape(len(p), -1)
        return out / self.normalizers[None, :, None]

    def project(self, points, weights) -> np.ndarray:
        """sum_p weights_p F_k(points_p) for every k, without forming (P, |K|)."""
        p, cos_t, _ = self._tables(points)
        wts = np.asarray(weights, dtype=float).reshape(-1)
        letters = string.ascii_lowercase[:self.dim]
        expr = "p," + ",".join(f"p{c}" for c in letters) + "->" + letters
        grid = np.einsum(expr, wts, *cos_t, optimize=True)
        return grid.reshape(-1) / self.normalizers

    def contract_gradient(self, points, coeff_weights) -> np.ndarray:
        """sum_k a_k grad F_k(points_p) for every point: shape (P, nu)."""
        p, cos_t, dcos_t = self._tables(points)
        a = np.asarray(coeff_weights, dtype=float).reshape(self.counts) * self._inv_h_grid()
        letters = string.ascii_lowercase[:self.dim]
        expr = letters + "," + ",".join(f"p{c}" for c in letters) + "->p"
        out = np.empty((len(p), self.dim))
        for o in range(self.dim):
            tabs = [dcos_t[j] if j == o else cos_t[j] for j in range(self.dim)]
            out[:, o] = np.einsum(expr, a, *tabs, optimize=True)
        return out

    def synthesize(self, coeffs, points) -> np.ndarray:
        """sum_k coeffs_k F_k(points_p) for every point: shape (P,)."""
        p, cos_t, _ = self._tables(points)
        a = np.asarray(coeffs, dtype=float).reshape(self.counts) * self._inv_h_grid()
        letters = string.ascii_lowercase[:self.dim]
        expr = letters + "," + ",".join(f"p{c}" for c in letters) + "->p"
        return np.einsum(expr, a, *cos_t, optimize=True)


def basis_eval(basis: SpectralBasis, k, w) -> float:
    """F_k(w) for a single index and point."""
    k = np.asarray(k, dtype=int)
    w = np.asarray(w, dtype=float)
    L = np.asarray(basis.workspace.lengths)
    h = normalizer(k, basis.workspace)
    return float(np.prod(np.cos(k * np.pi * w / L)) / h)


def basis_grad(basis: SpectralBasis, k, w) -> np.ndarray:
    k = np.asarray(k, dtype=int)
    w = np.asarray(w, dtype=float)
    L = np.asarray(basis.workspace.lengths)
    h = normalizer(k, basis.workspace)
    arg = k * np.pi * w / L
    c, s = np.cos(arg), np.sin(arg)
    g = np.empty(len(k))
    for o in range(len(k)):
        g[o] = -(k[o] * np.pi / L[o]) * s[o] * np.prod(np.delete(c, o)) / h
    return g
