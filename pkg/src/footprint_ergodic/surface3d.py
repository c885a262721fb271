"""Point-cloud targets and cone-footprint ray sampling in 3D.

Rays are cast from the robot position inside a viewing cone; each ray snaps
to the cloud point nearest along it within ``hit_radius`` of the ray line.

For optimization the hit set is frozen: which rays hit and at what range
rho_m. The sample of a hit ray then moves with the state as
r_m(x) = p(x) + rho_m * d_m(x), which is smooth and has the Jacobian below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import StateProjection
from .footprint import Cone, SampleSet, cap_directions
from .spectral import Workspace

# pattern flip (rotation by pi about x) used when the axis points mostly down
_FLIP = np.diag([1.0, -1.0, -1.0])
_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or len(p) == 0:
            raise ValueError("point cloud must be a nonempty (P, 3) array")
        object.__setattr__(self, "points", p)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(p),) or np.any(w < 0):
                raise ValueError("cloud weights must be nonnegative, one per point")
            object.__setattr__(self, "weights", w)

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def spacing(self) -> float:
        """Median nearest-neighbour distance."""
        if len(self.points) < 2:
            return 0.0
        d, _ = cKDTree(self.points).query(self.points, k=2)
        return float(np.median(d[:, 1]))

    def default_hit_radius(self) -> float:
        s = self.spacing()
        return 2.0 * s if s > 0 else 1e-3


def _parse_xyz(lines):
    pts = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'x y z', got {raw.strip()!r}")
        try:
            pts.append([float(v) for v in parts])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric coordinate in {raw.strip()!r}") from None
    return pts


def _parse_ply(lines):
    if not lines or lines[0].strip() != "ply":
        raise ValueError("line 1: missing 'ply' magic")
    n_vertex, props, in_vertex, end = None, [], False, None
    for lineno, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise ValueError(f"line {lineno}: only ASCII PLY is supported")
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n_vertex = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            end = lineno
            break
    if end is None or n_vertex is None:
        raise ValueError("PLY header without vertex element or end_header")
    try:
        cols = [props.index(c) for c in "xyz"]
    except ValueError:
        raise ValueError("PLY vertex element lacks x, y, z properties") from None
    pts = []
    for i in range(n_vertex):
        lineno = end + 1 + i
        if lineno > len(lines):
            raise ValueError(f"line {lineno}: PLY ended after {i} of {n_vertex} vertices")
        tok = lines[lineno - 1].split()
        try:
            pts.append([float(tok[c]) for c in cols])
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: malformed vertex {lines[lineno - 1]!r}") from None
    return pts


def load_cloud(path, workspace: Workspace | None = None) -> PointCloud:
    """Read an ASCII XYZ or ASCII PLY file."""
    lines = Path(path).read_text().splitlines()
    first = next((ln.strip() for ln in lines if ln.strip()), "")
    pts = _parse_ply(lines) if first == "ply" else _parse_xyz(lines)
    if not pts:
        raise ValueError(f"{path}: no points")
    cloud = PointCloud(np.array(pts))
    if workspace is not None:
        inside = workspace.contains(cloud.points)
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            raise ValueError(f"{path}: point {bad} {cloud.points[bad]} lies outside the workspace")
    return cloud


def write_xyz(path, points) -> None:
    lines = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in np.asarray(points)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_ply(path, points) -> None:
    pts = np.asarray(points)
    header = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
              "property float x", "property float y", "property float z", "end_header"]
    body = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in pts]
    Path(path).write_text("\n".join(header + body) + "\n")


# -- cone geometry ---------------------------------------------------------------


def _skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _skew_batch(v):
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _rotate(axis, ref, g):
    """Rodrigues rotation taking ``ref`` to ``axis``, applied to rows of g.

    Batched: axis and ref are (..., 3), g is (..., M, 3).
    """
    v = np.cross(ref, axis)[..., None, :]
    c = np.einsum("...c,...c->...", ref, axis)[..., None, None]
    vg = np.cross(v, g)
    return g + vg + np.cross(v, vg) / (1.0 + c)


def _rotate_jac(axis, ref, g):
    """d(_rotate(axis, ref, g_m))/d axis for each row: shape (..., M, 3, 3)."""
    S = _skew_batch(ref)[..., None, :, :]                   # (..., 1, 3, 3)
    v = np.cross(ref, axis)[..., None, :]                   # (..., 1, 3)
    c = np.einsum("...c,...c->...", ref, axis)[..., None, None, None]
    vg = np.einsum("...mc,...mc->...m", np.broadcast_to(v, g.shape), g)
    vv = np.einsum("...c,...c->...", v, v)
    u = v * vg[..., None] - g * vv[..., None]
    eye = np.eye(3)
    outer_vg = v[..., :, None] * g[..., None, :]
    outer_gv = g[..., :, None] * v[..., None, :]
    du = (outer_vg + vg[..., None, None] * eye - 2.0 * outer_gv) @ S
    refb = ref[..., None, None, :]
    return -_skew_batch(g) @ S + du / (1.0 + c) - u[..., :, None] * refb / (1.0 + c) ** 2


def _axis(p, policy, target):
    if policy == "down":
        return -_Z, np.zeros((3, 3))
    diff = np.asarray(target, dtype=float) - p
    dist = float(np.linalg.norm(diff))
    if dist < 1e-12:
        raise ValueError("robot position coincides with the cone axis target")
    a = diff / dist
    return a, -(np.eye(3) - np.outer(a, a)) / dist


def _axes(P, policy, target):
    """Batched ``_axis`` over positions P (T, 3)."""
    T = len(P)
    if policy == "down":
        return np.broadcast_to(-_Z, (T, 3)).copy(), np.zeros((T, 3, 3))
    diff = np.asarray(target, dtype=float) - P
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist < 1e-12):
        raise ValueError("robot position coincides with the cone axis target")
    a = diff / dist[:, None]
    proj = np.eye(3) - a[:, :, None] * a[:, None, :]
    return a, -proj / dist[:, None, None]


def _reference(axis):
    # rotate from +z unless the axis points nearly straight down
    return (-_Z, True) if axis[2] < -0.9 else (_Z, False)


def cone_rays(p, cone: Cone, target=None, flipped: bool | None = None):
    """Unit ray directions (M, 3) inside the cone at position p."""
    p = np.asarray(p, dtype=float)
    a, _ = _axis(p, cone.axis_policy, target)
    ref, flip = _reference(a)
    if flipped is not None:
        flip = flipped
        ref = -_Z if flip else _Z
    g = cap_directions(math.atan(cone.k_h), cone.M)
    if flip:
        g = g @ _FLIP.T
    d = _rotate(a, ref, g)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def ray_hit(cloud: PointCloud, origin, direction, hit_radius: float):
    """Nearest cloud point along the ray within ``hit_radius`` of it, or None.

    Returns (point index, range along the ray).
    """
    idx, rng = ray_hits(cloud, np.asarray(origin, dtype=float)[None],
                        np.asarray(direction, dtype=float)[None], hit_radius)
    return None if idx[0] < 0 else (int(idx[0]), float(rng[0]))


def ray_hits(cloud: PointCloud, origins, directions, hit_radius: float, chunk: int = 256):
    """Batched ``ray_hit``: index (-1 for a miss) and range for every ray."""
    if hit_radius <= 0:
        raise ValueError("hit radius must be positive")
    O = np.atleast_2d(origins)
    D = np.atleast_2d(directions)
    P = cloud.points
    idx = np.full(len(O), -1, dtype=int)
    rng = np.full(len(O), np.nan)
    r2 = hit_radius * hit_radius
    for s in range(0, len(O), chunk):
        o, d = O[s:s + chunk], D[s:s + chunk]
        v = P[None, :, :] - o[:, None, :]                  # (R, P, 3)
        proj = np.einsum("rpc,rc->rp", v, d)
        perp2 = np.einsum("rpc,rpc->rp", v, v) - proj * proj
        ok = (proj > 0) & (perp2 <= r2)
        key = np.where(ok, proj, np.inf)
        best = np.argmin(key, axis=1)                       # lowest index wins ties
        hit = np.isfinite(key[np.arange(len(o)), best])
        idx[s:s + chunk] = np.where(hit, best, -1)
        rng[s:s + chunk] = np.where(hit, key[np.arange(len(o)), best], np.nan)
    return idx, rng


@dataclass(frozen=True, eq=False)
class SurfaceEntry:
    """Ray-cast result at one state."""

    directions: np.ndarray      # (M, 3)
    hit_index: np.ndarray       # (M,), -1 where the ray missed
    ranges: np.ndarray          # (M,), nan on misses
    flipped: bool

    @property
    def mask(self) -> np.ndarray:
        return self.hit_index >= 0

    @property
    def n_hits(self) -> int:
        return int(self.mask.sum())


def surface_samples(x, cloud: PointCloud, cone: Cone, projection: StateProjection,
                    hit_radius: float | None = None, target=None):
    """Hits, weights and frozen-range Jacobians for a single state.

    Returns (entry, hit points (H, 3), weights (H,), jac (H, 3, n)).
    """
    X = np.asarray(x, dtype=float)[None]
    frozen = freeze_rays(X, cloud, cone, projection, hit_radius, target)
    samples = frozen.realize(X)
    m = frozen.entries[0].mask
    return (frozen.entries[0], cloud.points[frozen.entries[0].hit_index[m]],
            samples.weights[0, m], samples.jac[0, m])


@dataclass(frozen=True, eq=False)
class FrozenRays:
    """Per-step ray hits frozen at some iterate; ``realize`` moves them with the state."""

    cone: Cone
    projection: StateProjection
    target: np.ndarray
    entries: list
    hit_points: np.ndarray      # (N, M, 3), nan on misses

    @property
    def mask(self) -> np.ndarray:
        return np.stack([e.mask for e in self.entries])

    def realize(self, states) -> SampleSet:
        X = np.atleast_2d(np.asarray(states, dtype=float))
        N, n = X.shape
        M = self.cone.M
        Jq = self.projection.q_jacobian(n)
        g0 = cap_directions(math.atan(self.cone.k_h), M)
        entries = self.entries[:N]
        pts = np.zeros((N, M, 3))
        jac = np.zeros((N, M, 3, n))
        weights = np.zeros((N, M))
        live = np.array([e.n_hits > 0 for e in entries] + [False] * (N - len(entries)))
        if not live.any():
            return SampleSet(pts, weights, jac, np.zeros((N, M), dtype=bool))
        t_idx = np.flatnonzero(live)
        P = self.projection.q(X[t_idx])                         # (T, 3)
        flipped = np.array([entries[t].flipped for t in t_idx])
        A, dA = _axes(P, self.cone.axis_policy, self.target)    # (T, 3), (T, 3, 3)
        ref = np.where(flipped[:, None], -_Z, _Z)
        g = np.where(flipped[:, None, None], (g0 @ _FLIP.T)[None], g0[None])
        d = _rotate(A, ref, g)                                  # (T, M, 3)
        dd = _rotate_jac(A, ref, g) @ dA[:, None]               # (T, M, 3, 3)
        mask = np.stack([entries[t].mask for t in t_idx])
        rho = np.where(mask, np.stack([entries[t].ranges for t in t_idx]), 0.0)
        p_pts = P[:, None, :] + rho[..., None] * d
        p_jac = (np.eye(3) + rho[..., None, None] * dd) @ Jq
        nh = mask.sum(axis=1, keepdims=True)
        pts[t_idx] = np.where(mask[..., None], p_pts, 0.0)
        jac[t_idx] = np.where(mask[..., None, None], p_jac, 0.0)
        weights[t_idx] = np.where(mask, 1.0 / nh, 0.0)
        return SampleSet(pts, weights, jac, np.zeros((N, M), dtype=bool))


def freeze_rays(states, cloud: PointCloud, cone: Cone, projection: StateProjection,
                hit_radius: float | None = None, target=None) -> FrozenRays:
    X = np.atleast_2d(np.asarray(states, dtype=float))
    r = cloud.default_hit_radius() if hit_radius is None else hit_radius
    tgt = cloud.centroid if target is None else np.asarray(target, dtype=float)
    origins, dirs, flips = [], [], []
    for x in X:
        p = projection.q(x)
        a, _ = _axis(p, cone.axis_policy, tgt)
        _, flip = _reference(a)
        d = cone_rays(p, cone, tgt, flipped=flip)
        origins.append(np.broadcast_to(p, d.shape))
        dirs.append(d)
        flips.append(flip)
    M = cone.M
    idx, rng = ray_hits(cloud, np.concatenate(origins), np.concatenate(dirs), r)
    idx = idx.reshape(len(X), M)
    rng = rng.reshape(len(X), M)
    entries = [SurfaceEntry(dirs[t], idx[t], rng[t], flips[t]) for t in range(len(X))]
    hits = np.full((len(X), M, 3), np.nan)
    ok = idx >= 0
    hits[ok] = cloud.points[idx[ok]]
    return FrozenRays(cone, projection, tgt, entries, hits)


def sphere_with_handle(center=(0.5, 0.5, 0.5), radius=0.18, handle_radius=0.06,
                       tube_radius=0.025, n_sphere=1500, n_handle=400) -> np.ndarray:
    """Synthetic test object: Fibonacci-sampled sphere plus a torus handle on its side."""
    c = np.asarray(center, dtype=float)
    i = np.arange(n_sphere) + 0.5
    z = 1.0 - 2.0 * i / n_sphere
    rho = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    sphere = c + radius * np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    # torus in the x-z plane, centered just outside the sphere along +x
    n_u = max(int(round(math.sqrt(n_handle * 4))), 8)
    n_v = max(n_handle // n_u, 4)
    u, v = np.meshgrid(np.linspace(0, 2 * math.pi, n_u, endpoint=False),
                       np.linspace(0, 2 * math.pi, n_v, endpoint=False), indexing="ij")
    R0 = handle_radius
    tc = c + np.array([radius + R0 * 0.6, 0.0, 0.0])
    x = (R0 + tube_radius * np.cos(v)) * np.cos(u)
    zt = (R0 + tube_radius * np.cos(v)) * np.sin(u)
    y = tube_radius * np.sin(v)
    torus = tc + np.stack([x, y, zt], axis=-1).reshape(-1, 3)
    # drop torus points buried inside the sphere
    torus = torus[np.linalg.norm(torus - c, axis=1) > radius]
    return np.concatenate([sphere, torus])
