"""Vertex search for task-space force and velocity polytopes.

The joint torque box ``lo <= tau <= hi`` is written as
``tau = lo + sum_i alpha_i * tau_i`` with ``tau_i = (hi_i - lo_i) e_i`` and
``alpha in [0, 1]^n``. Force polytope vertices lie on the (n-m)-dimensional
faces of that box, reached by fixing m of the alphas to 0 or 1. Each face is
intersected with the image of J^T through the reduced (n-m)x(n-m) system
``T alpha_free = V2^T tau_o`` where ``V2`` spans ker(J).
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

SV_TOL = 1e-8
ALPHA_TOL = 1e-9
DEDUP_RTOL = 1e-7
# T (and Z) are singular when the smallest singular value falls below this
# fraction of the problem scale; T's scale is the largest free torque span
T_RCOND = 1e-10
MAX_CORNER_JOINTS = 24


class RankDeficient(ValueError):
    """The Jacobian does not have full row rank."""

    def __init__(self, singular_values, message: str = "rank-deficient Jacobian"):
        self.singular_values = np.asarray(singular_values, dtype=float)
        super().__init__(f"{message}; singular values {np.array2string(self.singular_values, precision=3)}")


class CapacityError(RuntimeError):
    """A request exceeds what the enumeration can handle."""


@dataclass(frozen=True)
class SvdFactors:
    U: np.ndarray
    S: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    JT_pinv: np.ndarray
    rank: int

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.V1.shape[0]


@dataclass(frozen=True)
class TorqueBox:
    """Per-joint interval bounds; used for torques and joint velocities alike."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.array(self.lo, dtype=float).reshape(-1)
        hi = np.array(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def symmetric(cls, limit) -> "TorqueBox":
        limit = np.asarray(limit, dtype=float)
        return cls(-limit, limit)

    @property
    def n(self) -> int:
        return self.lo.size

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def base_vectors(self) -> np.ndarray:
        """Rows are the axis-aligned edge vectors tau_i."""
        return np.diag(self.span)

    def point(self, alpha) -> np.ndarray:
        return self.lo + np.asarray(alpha, dtype=float) * self.span

    def scaled(self, c: float) -> "TorqueBox":
        return TorqueBox(self.lo * c, self.hi * c)

    def permuted(self, perm) -> "TorqueBox":
        return TorqueBox(self.lo[list(perm)], self.hi[list(perm)])


@dataclass(frozen=True)
class AlphaPartition:
    fixed_idx: tuple[int, ...]
    fixed_vals: tuple[int, ...]
    free_idx: tuple[int, ...]

    def __post_init__(self) -> None:
        if list(self.fixed_idx) != sorted(self.fixed_idx):
            raise ValueError("fixed indices must be sorted")
        if len(self.fixed_vals) != len(self.fixed_idx) or any(v not in (0, 1) for v in self.fixed_vals):
            raise ValueError("fixed values must be one 0/1 bit per fixed index")
        if set(self.fixed_idx) & set(self.free_idx):
            raise ValueError("fixed and free indices overlap")
        n = len(self.fixed_idx) + len(self.free_idx)
        if sorted(self.fixed_idx + self.free_idx) != list(range(n)):
            raise ValueError("fixed and free indices must cover 0..n-1")

    @classmethod
    def of(cls, n: int, fixed_idx, fixed_vals=None) -> "AlphaPartition":
        fixed_idx = tuple(sorted(int(i) for i in fixed_idx))
        if fixed_vals is None:
            fixed_vals = (0,) * len(fixed_idx)
        free = tuple(i for i in range(n) if i not in fixed_idx)
        return cls(fixed_idx, tuple(int(v) for v in fixed_vals), free)


def partitions(n: int, m: int) -> list[tuple[int, ...]]:
    """The C(n, m) fixed-index sets, in lexicographic order."""
    return list(itertools.combinations(range(n), m))


@dataclass(frozen=True)
class SearchStats:
    faces_total: int = 0
    faces_pruned_bounds: int = 0
    faces_singular: int = 0
    systems_solved: int = 0
    raw_hits: int = 0
    runtime_ns: int = 0

    def __add__(self, other: "SearchStats") -> "SearchStats":
        return SearchStats(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self) -> tuple[int, ...]:
        return (self.faces_total, self.faces_pruned_bounds, self.faces_singular,
                self.systems_solved, self.raw_hits, self.runtime_ns)

    def as_dict(self) -> dict[str, int]:
        return {
            "faces_total": self.faces_total,
            "faces_pruned_bounds": self.faces_pruned_bounds,
            "faces_singular": self.faces_singular,
            "systems_solved": self.systems_solved,
            "raw_hits": self.raw_hits,
            "runtime_ns": self.runtime_ns,
        }


@dataclass(frozen=True)
class VertexSet:
    task_dim: int
    vertices: np.ndarray
    stats: SearchStats = field(default_factory=SearchStats)

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float).reshape(-1, self.task_dim)
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    @property
    def diameter(self) -> float:
        return _diameter(self.vertices)


@dataclass(frozen=True)
class FaceHit:
    alpha2: np.ndarray
    tau_vert: np.ndarray
    f_vert: np.ndarray


@dataclass(frozen=True)
class SearchOptions:
    prune: bool = True
    sv_tol: float = SV_TOL
    alpha_tol: float = ALPHA_TOL
    dedup_rtol: float = DEDUP_RTOL
    workers: int = 1


# --- SVD and bounds ---------------------------------------------------------

def decompose(J, sv_tol: float = SV_TOL) -> SvdFactors:
    J = np.asarray(J, dtype=float)
    if J.ndim != 2:
        raise ValueError("Jacobian must be a 2-D matrix")
    m, n = J.shape
    if m > n:
        raise ValueError(f"task dimension m={m} exceeds joint count n={n}")
    U, S, Vt = np.linalg.svd(J, full_matrices=True)
    rank = int(np.count_nonzero(S > sv_tol * S[0])) if S[0] > 0 else 0
    if rank < m:
        raise RankDeficient(S)
    V1 = Vt[:m].T
    V2 = Vt[m:].T
    # (J^T)^+ = U S^-1 V1^T
    JT_pinv = (U / S) @ V1.T
    return SvdFactors(U=U, S=S, V1=V1, V2=V2, JT_pinv=JT_pinv, rank=rank)


def face_bounds(T) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise bounds on ``T @ a`` over ``a in [0, 1]^k``.

    Works on a single square matrix or a stack of them.
    """
    T = np.asarray(T, dtype=float)
    return np.minimum(T, 0.0).sum(axis=-1), np.maximum(T, 0.0).sum(axis=-1)


# --- face solves ------------------------------------------------------------

def _origin_bits(m: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=float).reshape(2 ** m, m)


def _search_faces(f: SvdFactors, box: TorqueBox, fixed: np.ndarray, opts: SearchOptions,
                  bits: np.ndarray | None = None):
    """Run the reduced face solves for a batch of fixed-index sets.

    ``fixed`` is (P, m). ``bits`` restricts the origins (default: all 2^m).
    Returns ``(alpha, counts)`` where ``alpha`` is an (h, n) array of full
    alpha vectors for accepted hits, ordered by (partition, origin).
    """
    n, m = f.n, f.m
    k = n - m
    P = fixed.shape[0]
    if bits is None:
        bits = _origin_bits(m)
    B = bits.shape[0]
    lo, span = box.lo, box.span
    free = np.array([[i for i in range(n) if i not in row] for row in fixed.tolist()],
                    dtype=int).reshape(P, k)

    V2T = f.V2.T  # k x n
    # T[p] = V2^T [-tau_free]
    T = -(V2T[:, free] * span[free]).transpose(1, 0, 2)  # P x k x k
    t_lb, t_ub = face_bounds(T)
    # V2^T tau_o for every partition and origin
    C = (V2T[:, fixed] * span[fixed]).transpose(1, 2, 0)  # P x m x k
    rhs = (V2T @ lo)[None, None, :] + np.einsum("bm,pmk->pbk", bits, C)  # P x B x k

    if opts.prune and k > 0:
        slack = 1e-9 * (np.abs(T).sum(axis=-1) + np.abs(rhs).max(axis=1) + 1e-300)
        inside = np.all((rhs >= (t_lb - slack)[:, None, :]) & (rhs <= (t_ub + slack)[:, None, :]), axis=-1)
    else:
        inside = np.ones((P, B), dtype=bool)
    live = inside.any(axis=1)
    n_pruned = int(P - np.count_nonzero(live))

    if k == 0:
        solvable = live
        n_singular = 0
        alpha2 = np.zeros((P, B, 0))
    else:
        sv = np.linalg.svd(T, compute_uv=False)
        scale = span[free].max(axis=1)
        singular = ~(sv[:, -1] > T_RCOND * scale)
        solvable = live & ~singular
        n_singular = int(np.count_nonzero(live & singular))
        alpha2 = np.full((P, B, k), np.nan)
        idx = np.flatnonzero(solvable)
        if idx.size:
            sol = np.linalg.solve(T[idx], rhs[idx].transpose(0, 2, 1))  # P' x k x B
            alpha2[idx] = sol.transpose(0, 2, 1)

    tol = opts.alpha_tol
    ok = inside & solvable[:, None]
    if k:
        with np.errstate(invalid="ignore"):
            ok &= np.all((alpha2 >= -tol) & (alpha2 <= 1.0 + tol), axis=-1)
    p_idx, b_idx = np.nonzero(ok)
    alpha = np.empty((p_idx.size, n))
    alpha[np.arange(p_idx.size)[:, None], fixed[p_idx]] = bits[b_idx]
    alpha[np.arange(p_idx.size)[:, None], free[p_idx]] = alpha2[p_idx, b_idx]
    counts = (P, n_pruned, n_singular, int(np.count_nonzero(solvable)))
    return alpha, counts


def solve_face(f: SvdFactors, box: TorqueBox, part: AlphaPartition,
               opts: SearchOptions = SearchOptions()) -> list[FaceHit]:
    """Vertices found on the faces parallel to ``part``'s free directions.

    All 2^m origins of the face family are tried; ``part.fixed_vals`` only
    identifies the family member and is not a filter.
    """
    if box.n != f.n:
        raise ValueError("torque box and Jacobian disagree on the joint count")
    fixed = np.array([part.fixed_idx], dtype=int).reshape(1, f.m)
    alpha, _ = _search_faces(f, box, fixed, opts)
    hits = []
    for a in alpha:
        tau = box.point(a)
        hits.append(FaceHit(alpha2=a[list(part.free_idx)], tau_vert=tau, f_vert=f.JT_pinv @ tau))
    return hits


# --- canonical vertex sets --------------------------------------------------

def _diameter(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


def _lexsort(points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 0:
        return points
    order = np.lexsort(points.T[::-1])
    return points[order]


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if kept and np.min(np.linalg.norm(np.asarray(kept) - p, axis=1)) <= tol:
            continue
        kept.append(p)
    return np.asarray(kept).reshape(-1, points.shape[1])


def _extreme_mask(points: np.ndarray) -> np.ndarray:
    """True where a point is not a convex combination of the other points."""
    k, d = points.shape
    if k <= 2:
        return np.ones(k, dtype=bool)
    center = points.mean(axis=0)
    scale = _diameter(points) or 1.0
    X = (points - center) / scale
    keep = np.ones(k, dtype=bool)
    for i in range(k):
        others = np.delete(X, i, axis=0)
        A_eq = np.vstack([others.T, np.ones(k - 1)])
        b_eq = np.append(X[i], 1.0)
        res = linprog(np.zeros(k - 1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        keep[i] = res.status != 0
    return keep


def canonicalize(raw, dedup_tol: float | None = None, *, task_dim: int | None = None,
                 check_extreme: bool = True, stats: SearchStats | None = None) -> VertexSet:
    """Sort, merge near-duplicates and drop non-extreme points.

    ``dedup_tol`` defaults to ``1e-7`` times the point-cloud diameter. Points
    are sorted before merging so the result does not depend on input order.
    """
    pts = np.asarray(raw, dtype=float)
    if task_dim is None:
        task_dim = pts.shape[1] if pts.ndim == 2 else 1
    pts = pts.reshape(-1, task_dim)
    if dedup_tol is None:
        dedup_tol = DEDUP_RTOL * max(_diameter(pts), 1.0)
    pts = _dedup(_lexsort(pts), dedup_tol)
    if check_extreme and pts.shape[0] > task_dim + 1:
        pts = pts[_extreme_mask(pts)]
    return VertexSet(task_dim, pts, stats or SearchStats())


# --- polytopes --------------------------------------------------------------

def _fixed_array(n: int, m: int) -> np.ndarray:
    return np.array(partitions(n, m), dtype=int).reshape(-1, m)


def _check_dims(J: np.ndarray, box: TorqueBox) -> None:
    if J.ndim != 2:
        raise ValueError("Jacobian must be a 2-D matrix")
    if J.shape[1] != box.n:
        raise ValueError(f"Jacobian has {J.shape[1]} columns, limits have {box.n} joints")


def force_polytope_vertices(J, box: TorqueBox, opts: SearchOptions = SearchOptions(),
                            factors: SvdFactors | None = None) -> VertexSet:
    """Vertices of ``{f : lo <= J^T f <= hi}`` by reduced face enumeration."""
    start = time.perf_counter_ns()
    J = np.asarray(J, dtype=float)
    _check_dims(J, box)
    f = factors if factors is not None else decompose(J, opts.sv_tol)
    n, m = f.n, f.m
    fixed = _fixed_array(n, m)
    if opts.workers > 1 and fixed.shape[0] > 1:
        chunks = np.array_split(fixed, min(opts.workers, fixed.shape[0]))
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            results = list(pool.map(lambda c: _search_faces(f, box, c, opts), chunks))
        alpha = np.vstack([r[0] for r in results])
        counts = tuple(int(sum(r[1][i] for r in results)) for i in range(4))
    else:
        alpha, counts = _search_faces(f, box, fixed, opts)
    tau = box.lo + alpha * box.span
    raw = tau @ f.JT_pinv.T
    # every hit has m independent active constraints (T invertible), so it is
    # already a vertex; only duplicates need merging
    out = canonicalize(raw, task_dim=m, check_extreme=False)
    stats = SearchStats(*counts, raw_hits=int(raw.shape[0]),
                        runtime_ns=time.perf_counter_ns() - start)
    return replace(out, stats=stats)


def full_system_solve(J, box: TorqueBox) -> VertexSet:
    """Baseline: solve the unreduced n x n system ``[J^T, -tau_free] x = tau_o`` per face."""
    start = time.perf_counter_ns()
    J = np.asarray(J, dtype=float)
    _check_dims(J, box)
    decompose(J)  # rank check only
    m, n = J.shape
    k = n - m
    fixed = _fixed_array(n, m)
    P = fixed.shape[0]
    free = np.array([[i for i in range(n) if i not in row] for row in fixed.tolist()],
                    dtype=int).reshape(P, k)
    bits = _origin_bits(m)
    lo, span = box.lo, box.span
    Z = np.zeros((P, n, n))
    Z[:, :, :m] = J.T
    cols = np.zeros((P, n, k))
    cols[np.arange(P)[:, None], free, np.arange(k)[None, :]] = -span[free]
    Z[:, :, m:] = cols
    tau_o = np.broadcast_to(lo, (P, bits.shape[0], n)).copy()
    for j in range(m):
        idx = fixed[:, j]
        tau_o[np.arange(P), :, idx] += bits[None, :, j] * span[idx][:, None]
    sv = np.linalg.svd(Z, compute_uv=False)
    ok_sys = sv[:, -1] > T_RCOND * max(float(np.max(span)), np.linalg.norm(J, 2))
    raw = []
    idx = np.flatnonzero(ok_sys)
    if idx.size:
        x = np.linalg.solve(Z[idx], tau_o[idx].transpose(0, 2, 1)).transpose(0, 2, 1)
        a2 = x[..., m:]
        ok = np.all((a2 >= -ALPHA_TOL) & (a2 <= 1 + ALPHA_TOL), axis=-1)
        raw = x[..., :m][ok]
    out = canonicalize(np.asarray(raw).reshape(-1, m), task_dim=m, check_extreme=False)
    stats = SearchStats(faces_total=P, faces_singular=int(P - idx.size), systems_solved=int(idx.size),
                        raw_hits=int(len(raw)), runtime_ns=time.perf_counter_ns() - start)
    return replace(out, stats=stats)


def velocity_polytope_vertices(J, qdot_box: TorqueBox, sv_tol: float = SV_TOL) -> VertexSet:
    """Convex hull extreme points of the 2^n joint-velocity box corners mapped by J."""
    start = time.perf_counter_ns()
    J = np.asarray(J, dtype=float)
    _check_dims(J, qdot_box)
    m, n = J.shape
    if n > MAX_CORNER_JOINTS:
        raise CapacityError(f"corner mapping needs 2^{n} points; refusing above n={MAX_CORNER_JOINTS}")
    decompose(J, sv_tol)
    corners = qdot_box.point(_origin_bits(n))
    out = canonicalize(corners @ J.T, task_dim=m)
    return replace(out, stats=SearchStats(raw_hits=2 ** n, runtime_ns=time.perf_counter_ns() - start))


def oracle_halfspace_enum(J, box: TorqueBox) -> VertexSet:
    """Brute-force vertex enumeration of ``{f : lo <= J^T f <= hi}``.

    Every choice of m of the 2n constraint hyperplanes is intersected and the
    feasible intersection points are kept. No pruning, no face structure.
    """
    J = np.asarray(J, dtype=float)
    _check_dims(J, box)
    decompose(J)
    m, n = J.shape
    A = np.vstack([J.T, J.T])  # 2n x m
    b = np.concatenate([box.lo, box.hi])
    combos = np.array(list(itertools.combinations(range(2 * n), m)), dtype=int)
    As = A[combos]  # K x m x m
    bs = b[combos]
    sv = np.linalg.svd(As, compute_uv=False)
    good = sv[:, -1] > 1e-12 * sv[:, 0]
    pts = np.linalg.solve(As[good], bs[good][..., None])[..., 0]
    eps = 1e-7 * float(np.max(box.span))
    tau = pts @ J
    feasible = np.all((tau >= box.lo - eps) & (tau <= box.hi + eps), axis=1)
    return canonicalize(pts[feasible], task_dim=m, check_extreme=False)


def match_vertex_sets(a, b, tol: float, *, relative: bool = True) -> bool:
    """True if every point of each set has a partner in the other within ``tol``.

    With ``relative`` the tolerance is scaled by ``max(1, diameter)``.
    """
    A = np.asarray(getattr(a, "vertices", a), dtype=float)
    B = np.asarray(getattr(b, "vertices", b), dtype=float)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return A.shape[0] == B.shape[0]
    if A.shape[1] != B.shape[1]:
        return False
    scale = max(1.0, _diameter(np.vstack([A, B]))) if relative else 1.0
    d = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    return bool(np.all(d.min(axis=1) <= tol * scale) and np.all(d.min(axis=0) <= tol * scale))


def faces_total(n: int, m: int) -> int:
    return math.comb(n, m)
