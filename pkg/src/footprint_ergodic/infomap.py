"""Information maps: Gaussian mixtures, gridded densities and point-cloud deltas.

All three kinds are densities over a box workspace. ``map_coeffs`` projects a
map onto a ``SpectralBasis``; ``reconstruct`` goes the other way.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np
from scipy.integrate import trapezoid

from .spectral import SpectralBasis, Workspace

MIN_QUADRATURE = 32


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Diagonal-covariance mixture, truncated to the workspace.

    ``scale`` is the renormalization factor applied after truncation; it is
    1.0 until ``normalize_map`` computes it.
    """

    workspace: Workspace
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        mu = np.asarray(self.means, dtype=float).reshape(len(w), -1)
        var = np.asarray(self.variances, dtype=float).reshape(len(w), -1)
        if mu.shape[1] != self.workspace.dim or var.shape != mu.shape:
            raise ValueError("means/variances must be (components, workspace dim)")
        if np.any(w < 0) or np.any(var <= 0):
            raise ValueError("mixture weights must be >= 0 and variances > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    def density(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        d = p[..., None, :] - self.means
        expo = -0.5 * np.sum(d * d / self.variances, axis=-1)
        norm = np.sqrt(np.prod(2.0 * np.pi * self.variances, axis=-1))
        return self.scale * np.sum(self.weights * np.exp(expo) / norm, axis=-1)


@dataclass(frozen=True, eq=False)
class GridMap:
    """Piecewise density sampled at cell centers of a regular grid.

    ``cells`` is indexed ``cells[i_1, ..., i_nu]`` with i_o along axis o.
    """

    workspace: Workspace
    cells: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=float)
        if c.ndim != self.workspace.dim:
            raise ValueError(f"cells must be {self.workspace.dim}-D, got {c.ndim}-D")
        if np.any(c < 0):
            raise ValueError("grid cells must be nonnegative")
        object.__setattr__(self, "cells", c)

    @property
    def resolution(self) -> tuple[int, ...]:
        return self.cells.shape

    @property
    def cell_volume(self) -> float:
        return float(np.prod(np.asarray(self.workspace.lengths) / np.asarray(self.cells.shape)))

    def centers(self) -> list[np.ndarray]:
        return [(np.arange(n) + 0.5) * L / n
                for n, L in zip(self.cells.shape, self.workspace.lengths)]

    def center_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.workspace.dim)

    def density(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        L = np.asarray(self.workspace.lengths)
        shape = np.asarray(self.cells.shape)
        idx = np.clip((p / L * shape).astype(int), 0, shape - 1)
        return self.cells[tuple(np.moveaxis(idx, -1, 0))]


@dataclass(frozen=True, eq=False)
class DeltaCloud:
    """Weighted Dirac deltas at points (surface samples of a 3D object, usually)."""

    workspace: Workspace
    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, self.workspace.dim)
        if len(p) == 0:
            raise ValueError("delta cloud needs at least one point")
        w = np.ones(len(p)) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (len(p),) or np.any(w < 0):
            raise ValueError("cloud weights must be nonnegative, one per point")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)


InfoMap = Union[GaussianMixture, GridMap, DeltaCloud]


def _default_quadrature(dim: int) -> int:
    return 200 if dim == 2 else 64


def _quadrature_grid(workspace: Workspace, n: int):
    axes = [np.linspace(0.0, L, n) for L in workspace.lengths]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack(mesh, axis=-1)


def _integrate(values, axes):
    out = values
    for ax in reversed(axes):
        out = trapezoid(out, ax, axis=-1)
    return float(out)


def total_mass(m: InfoMap, quadrature: int | None = None) -> float:
    if isinstance(m, DeltaCloud):
        return float(m.weights.sum())
    if isinstance(m, GridMap):
        return float(m.cells.sum() * m.cell_volume)
    n = quadrature or _default_quadrature(m.workspace.dim)
    axes, pts = _quadrature_grid(m.workspace, n)
    return _integrate(m.density(pts), axes)


def normalize_map(m: InfoMap, quadrature: int | None = None) -> InfoMap:
    """Rescale so the density integrates to 1 over the workspace."""
    mass = total_mass(m, quadrature)
    if not np.isfinite(mass) or mass <= 0:
        raise ValueError(f"cannot normalize a map with total mass {mass}")
    if isinstance(m, DeltaCloud):
        return replace(m, weights=m.weights / mass)
    if isinstance(m, GridMap):
        return replace(m, cells=m.cells / mass)
    # fold the mixture weights into unit sum, truncation loss into scale
    wsum = m.weights.sum()
    rescaled = replace(m, weights=m.weights / wsum, scale=1.0)
    return replace(rescaled, scale=1.0 / total_mass(rescaled, quadrature))


def map_coeffs(m: InfoMap, basis: SpectralBasis, quadrature: int | None = None) -> np.ndarray:
    """Fourier coefficients phi_k = integral of phi * F_k over the workspace."""
    if m.workspace != basis.workspace:
        raise ValueError("map and basis live on different workspaces")
    if isinstance(m, DeltaCloud):
        return basis.project(m.points, m.weights)
    if isinstance(m, GridMap):
        return _grid_coeffs(m, basis)
    n = quadrature or _default_quadrature(m.workspace.dim)
    if n < MIN_QUADRATURE:
        raise ValueError(f"quadrature grid needs >= {MIN_QUADRATURE} points per dim, got {n}")
    axes, pts = _quadrature_grid(m.workspace, n)
    # trapezoid weights factor per axis
    tw = []
    for ax in axes:
        w = np.full(len(ax), ax[1] - ax[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        tw.append(w)
    wq = tw[0]
    for w in tw[1:]:
        wq = np.multiply.outer(wq, w)
    flat = pts.reshape(-1, m.workspace.dim)
    return basis.project(flat, (m.density(flat) * wq.reshape(-1)))


def _grid_coeffs(m: GridMap, basis: SpectralBasis) -> np.ndarray:
    # midpoint rule at cell centers: discrete-orthogonal for k < resolution
    if min(m.cells.shape) < MIN_QUADRATURE:
        raise ValueError(
            f"grid maps need >= {MIN_QUADRATURE} cells per dim, got {m.cells.shape}")
    out = m.cells * m.cell_volume
    for n, L, K in zip(m.cells.shape, m.workspace.lengths, basis.counts):
        c = (np.arange(n) + 0.5) * L / n
        t = np.cos(np.outer(c, np.arange(K) * np.pi / L))
        # contract the leading cell axis, append the k axis at the end
        out = np.tensordot(out, t, axes=([0], [0]))
    return out.reshape(-1) / basis.normalizers


def reconstruct(coeffs, basis: SpectralBasis, resolution) -> GridMap:
    """Evaluate sum_k coeffs_k F_k at cell centers. No clipping of ringing."""
    res = (int(resolution),) * basis.dim if np.isscalar(resolution) else tuple(resolution)
    if any(r < 2 for r in res):
        raise ValueError("reconstruction needs resolution >= 2 per dimension")
    centers = [(np.arange(n) + 0.5) * L / n for n, L in zip(res, basis.workspace.lengths)]
    pts = np.stack(np.meshgrid(*centers, indexing="ij"), axis=-1).reshape(-1, basis.dim)
    vals = basis.synthesize(coeffs, pts).reshape(res)
    return _UncheckedGrid(basis.workspace, vals)


class _UncheckedGrid(GridMap):
    # reconstructions can dip below zero, skip the nonnegativity check
    def __post_init__(self):
        object.__setattr__(self, "cells", np.asarray(self.cells, dtype=float))


# -- config files --------------------------------------------------------------


def map_from_dict(cfg: dict) -> InfoMap:
    ws = Workspace(tuple(cfg["workspace"]))
    kind = cfg["type"]
    if kind == "gmm":
        comps = cfg["components"]
        if not comps:
            raise ValueError("gmm map needs at least one component")
        return GaussianMixture(
            ws,
            weights=[c["weight"] for c in comps],
            means=[c["mean"] for c in comps],
            variances=[np.broadcast_to(np.square(c["std"]), (ws.dim,)) for c in comps],
        )
    if kind == "grid":
        return GridMap(ws, np.asarray(cfg["cells"], dtype=float))
    if kind == "cloud":
        return DeltaCloud(ws, np.asarray(cfg["points"], dtype=float), cfg.get("weights"))
    raise ValueError(f"unknown map type {kind!r}")


def load_map(path) -> InfoMap:
    with open(path) as fh:
        return map_from_dict(json.load(fh))


def uniform_map(lengths, resolution=100) -> GridMap:
    ws = Workspace(tuple(lengths))
    return normalize_map(GridMap(ws, np.ones((resolution,) * ws.dim)))


def write_pgm(path, values, comment: str = "") -> None:
    """Write a 2D array as an ASCII P2 image, min-max scaled to 0..255.

    ``values[i, j]`` is indexed (axis-1 cell, axis-2 cell); the image is
    flipped so that pixel (0, 0) is the workspace corner w = (0, L_2).
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ValueError("PGM export needs a 2D array")
    img = a.T[::-1]
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros(img.shape, dtype=int) if hi <= lo else \
        np.rint((img - lo) / (hi - lo) * 255).astype(int)
    lines = ["P2"]
    lines.append("# row 0 is w2 = L2 (top), column 0 is w1 = 0; values min-max scaled")
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{img.shape[1]} {img.shape[0]}")
    lines.append("255")
    lines.extend(" ".join(str(v) for v in row) for row in scaled)
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Inverse of ``write_pgm`` up to scaling: returns the pixel rows."""
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not an ASCII PGM file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    px = np.array(tokens[4:4 + w * h], dtype=int)
    if len(px) != w * h or px.max(initial=0) > maxval:
        raise ValueError("truncated or invalid PGM payload")
    return px.reshape(h, w)
