"""Convex hulls, Minkowski sums, stacked intersections and ellipsoids in 1-3 dimensions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vertex_search import (SearchOptions, TorqueBox, VertexSet, canonicalize, decompose,
                            force_polytope_vertices)

COPLANAR_RTOL = 1e-9


class Degenerate(ValueError):
    """The point set does not span its ambient dimension."""


@dataclass(frozen=True)
class Polytope:
    dim: int
    vertices: np.ndarray
    facets: tuple[tuple[int, ...], ...] | None = None
    halfspaces: tuple[np.ndarray, np.ndarray] | None = None  # (normals k x dim, offsets k)
    degenerate: bool = False

    @property
    def vertex_set(self) -> VertexSet:
        return VertexSet(self.dim, self.vertices)


@dataclass(frozen=True)
class Ellipsoid:
    """``{x : (x - center)^T shape (x - center) <= 1}``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self) -> None:
        E = np.asarray(self.shape, dtype=float)
        if not np.allclose(E, E.T, atol=1e-12 * max(1.0, np.abs(E).max())):
            raise ValueError("ellipsoid shape matrix must be symmetric")
        E = 0.5 * (E + E.T)
        if np.linalg.eigvalsh(E).min() <= 0:
            raise ValueError("ellipsoid shape matrix must be positive definite")
        object.__setattr__(self, "shape", E)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(E.shape[0]))

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    @property
    def semi_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axis lengths (descending) and the matching unit directions as columns."""
        w, V = np.linalg.eigh(self.shape)
        order = np.argsort(w)
        return 1.0 / np.sqrt(w[order]), V[:, order]

    def boundary_points(self, count: int) -> np.ndarray:
        """``count`` points on the ellipsoid surface (uniform angles in 2-D, Fibonacci sphere in 3-D)."""
        d = self.dim
        if d == 1:
            u = np.array([[-1.0], [1.0]])
        elif d == 2:
            t = 2 * np.pi * np.arange(count) / count
            u = np.column_stack([np.cos(t), np.sin(t)])
        else:
            u = _sphere_points(count, d)
        w, V = np.linalg.eigh(self.shape)
        root_inv = V @ np.diag(1.0 / np.sqrt(w)) @ V.T
        return self.center + u @ root_inv.T


def _sphere_points(count: int, d: int) -> np.ndarray:
    if d == 3:
        i = np.arange(count) + 0.5
        phi = np.arccos(1 - 2 * i / count)
        theta = np.pi * (1 + 5 ** 0.5) * i
        return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    u = np.random.default_rng(0).normal(size=(count, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


# --- hulls ------------------------------------------------------------------

def _cross2(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull2(pts: np.ndarray, tol: float) -> list[int]:
    """Monotone chain; returns indices in counterclockwise order, collinear points dropped."""
    order = sorted(range(len(pts)), key=lambda i: (pts[i][0], pts[i][1]))

    def chain(idx):
        out: list[int] = []
        for i in idx:
            while len(out) >= 2 and _cross2(pts[out[-2]], pts[out[-1]], pts[i]) <= tol:
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(order[::-1])
    return lower[:-1] + upper[:-1]


def _hull3(pts: np.ndarray, tol: float) -> list[tuple[int, int, int]]:
    """Incremental 3-D hull; triangles oriented counterclockwise seen from outside."""
    n = len(pts)
    # initial tetrahedron from extreme, well-spread points
    i0 = int(np.lexsort(pts.T[::-1])[0])
    i1 = int(np.argmax(np.linalg.norm(pts - pts[i0], axis=1)))
    line = pts[i1] - pts[i0]
    dist_line = np.linalg.norm(np.cross(pts - pts[i0], line), axis=1) / np.linalg.norm(line)
    i2 = int(np.argmax(dist_line))
    normal = np.cross(pts[i1] - pts[i0], pts[i2] - pts[i0])
    normal = normal / np.linalg.norm(normal)
    dist_plane = (pts - pts[i0]) @ normal
    i3 = int(np.argmax(np.abs(dist_plane)))
    if abs(dist_plane[i3]) <= tol:
        raise Degenerate("points are coplanar")

    faces: dict[tuple[int, int, int], tuple[np.ndarray, float]] = {}

    def add(a, b, c):
        nrm = np.cross(pts[b] - pts[a], pts[c] - pts[a])
        nrm = nrm / np.linalg.norm(nrm)
        faces[(a, b, c)] = (nrm, float(nrm @ pts[a]))

    base = (i0, i1, i2) if dist_plane[i3] < 0 else (i0, i2, i1)
    a, b, c = base
    add(a, b, c)
    add(a, i3, b)
    add(b, i3, c)
    add(c, i3, a)

    for p in range(n):
        if p in (i0, i1, i2, i3):
            continue
        x = pts[p]
        visible = [f for f, (nrm, off) in faces.items() if nrm @ x - off > tol]
        if not visible:
            continue
        edges = {}
        for f in visible:
            for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                edges[e] = edges.get(e, 0) + 1
        horizon = [e for e in edges if (e[1], e[0]) not in edges]
        for f in visible:
            del faces[f]
        for u, v in horizon:
            add(u, v, p)
    return list(faces)


def hull(points) -> Polytope:
    """Convex hull with boundary facets and outward halfspaces.

    Fewer than ``dim + 1`` affinely independent points give a polytope
    flagged ``degenerate`` without facets or halfspaces.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 1:
        raise ValueError("hull needs at least one point")
    dim = pts.shape[1]
    if dim not in (1, 2, 3):
        raise ValueError(f"hull supports dimensions 1-3, got {dim}")
    diam = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tol = COPLANAR_RTOL * max(diam, 1e-300)
    centered = pts - pts.mean(axis=0)
    rank = int(np.linalg.matrix_rank(centered, tol=tol)) if pts.shape[0] > 1 else 0
    if rank < dim:
        vs = canonicalize(pts, task_dim=dim, check_extreme=False)
        verts = _degenerate_extremes(vs.vertices, tol)
        return Polytope(dim, verts, degenerate=True)

    if dim == 1:
        x = pts[:, 0]
        verts = np.array([[x.min()], [x.max()]])
        facets = ((0,), (1,))
        normals = np.array([[-1.0], [1.0]])
        offsets = np.array([-x.min(), x.max()])
        return Polytope(1, verts, facets, (normals, offsets))

    if dim == 2:
        cycle = _hull2(pts, tol * diam)
        verts = pts[cycle]
        k = len(cycle)
        facets = tuple((i, (i + 1) % k) for i in range(k))
        edges = np.roll(verts, -1, axis=0) - verts
        normals = np.column_stack([edges[:, 1], -edges[:, 0]])
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        offsets = np.einsum("ij,ij->i", normals, verts)
        return Polytope(2, verts, facets, (normals, offsets))

    tris = _hull3(pts, tol)
    used = sorted({i for t in tris for i in t}, key=lambda i: tuple(pts[i]))
    remap = {old: new for new, old in enumerate(used)}
    verts = pts[used]
    facets = sorted(_rotate_min_first(tuple(remap[i] for i in t)) for t in tris)
    normals = []
    offsets = []
    for a, b, c in facets:
        nrm = np.cross(verts[b] - verts[a], verts[c] - verts[a])
        nrm /= np.linalg.norm(nrm)
        normals.append(nrm)
        offsets.append(nrm @ verts[a])
    return Polytope(3, verts, tuple(facets), (np.array(normals), np.array(offsets)))


def _rotate_min_first(t: tuple[int, ...]) -> tuple[int, ...]:
    k = t.index(min(t))
    return t[k:] + t[:k]


def _degenerate_extremes(pts: np.ndarray, tol: float) -> np.ndarray:
    """Extreme points of a point set lying in a lower-dimensional affine subspace."""
    if pts.shape[0] <= 2:
        return pts
    center = pts.mean(axis=0)
    _, s, Vt = np.linalg.svd(pts - center)
    r = int(np.count_nonzero(s > tol))
    if r == 0:
        return pts[:1]
    local = (pts - center) @ Vt[:r].T
    sub = hull(local)
    keep = [int(np.argmin(np.linalg.norm(local - v, axis=1))) for v in sub.vertices]
    return canonicalize(pts[sorted(set(keep))], task_dim=pts.shape[1], check_extreme=False).vertices


def polytope_from_vertices(vs: VertexSet | np.ndarray) -> Polytope:
    pts = vs.vertices if isinstance(vs, VertexSet) else np.asarray(vs, dtype=float)
    return hull(pts)


# --- queries ----------------------------------------------------------------

def support(P: Polytope, d) -> float:
    d = np.asarray(d, dtype=float).reshape(P.dim)
    if not np.any(d):
        raise ValueError("support direction must be non-zero")
    return float(np.max(P.vertices @ d))


def contains(P: Polytope, x, tol: float = 1e-9) -> bool:
    if P.halfspaces is None:
        if P.degenerate:
            raise Degenerate("polytope is lower-dimensional; no halfspace description")
        P = hull(P.vertices)
    normals, offsets = P.halfspaces
    x = np.asarray(x, dtype=float)
    return bool(np.all(normals @ x <= offsets + tol))


def contains_many(P: Polytope, xs, tol: float = 1e-9) -> np.ndarray:
    if P.halfspaces is None:
        if P.degenerate:
            raise Degenerate("polytope is lower-dimensional; no halfspace description")
        P = hull(P.vertices)
    normals, offsets = P.halfspaces
    return np.all(np.asarray(xs, dtype=float) @ normals.T <= offsets + tol, axis=1)


# --- composition ------------------------------------------------------------

def minkowski_sum(P: Polytope, Q: Polytope) -> Polytope:
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    sums = (P.vertices[:, None, :] + Q.vertices[None, :, :]).reshape(-1, P.dim)
    return hull(sums)


def intersection_stacked(J1, J2, box1: TorqueBox, box2: TorqueBox,
                         opts: SearchOptions = SearchOptions()) -> tuple[Polytope, VertexSet]:
    """Intersection of two force polytopes via the stacked system ``[J1 J2]^T f = [tau1; tau2]``."""
    J1 = np.asarray(J1, dtype=float)
    J2 = np.asarray(J2, dtype=float)
    if J1.shape[0] != J2.shape[0]:
        raise ValueError("both Jacobians must have the same task dimension")
    decompose(J1)
    decompose(J2)
    J = np.hstack([J1, J2])
    box = TorqueBox(np.concatenate([box1.lo, box2.lo]), np.concatenate([box1.hi, box2.hi]))
    vs = force_polytope_vertices(J, box, opts)
    return hull(vs.vertices), vs


# --- ellipsoids -------------------------------------------------------------

def ellipsoid(J, limits: TorqueBox, kind: str) -> Ellipsoid:
    """Manipulability ellipsoid scaled by the half-range of the joint limits.

    velocity: ``{J qd : ||W^-1 (qd - qd_mid)|| <= 1}`` with ``W = diag(span / 2)``.
    force:    ``{f : ||W^-1 (J^T f - tau_mid)|| <= 1}`` for symmetric limits; the
    center is the weighted least-squares preimage of the torque midpoint.
    """
    J = np.asarray(J, dtype=float)
    decompose(J)
    half = limits.span / 2.0
    mid = (limits.hi + limits.lo) / 2.0
    if kind == "velocity":
        shape = np.linalg.inv(J @ np.diag(half ** 2) @ J.T)
        center = J @ mid
    elif kind == "force":
        W2 = np.diag(1.0 / half ** 2)
        shape = J @ W2 @ J.T
        center = np.linalg.solve(shape, J @ W2 @ mid)
    else:
        raise ValueError(f"unknown ellipsoid kind {kind!r}")
    return Ellipsoid(center, 0.5 * (shape + shape.T))


def support_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Evenly spaced unit directions in 2-D, seeded random ones otherwise."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        t = 2 * math.pi * np.arange(count) / count
        return np.column_stack([np.cos(t), np.sin(t)])
    u = np.random.default_rng(seed).normal(size=(count, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)
