"""Convex polytope kernel.

Halfspace intersection by exhaustive vertex enumeration, face identification
through active-constraint sets, Hausdorff measures of faces, total face
contents ``L_r`` and parallelepiped volumes.

Polytopes are carried in vertex form (:class:`VPolytope`); every vertex keeps
the indices of the constraints that are active at it, which is all the face
lattice information the rest of the package needs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import linprog, nnls
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .tolerances import TOL

__all__ = [
    "GeometryError",
    "Unbounded",
    "DegenerateInput",
    "EmptySection",
    "Halfspace",
    "Hyperplane",
    "VPolytope",
    "intersect_halfspaces",
    "polytope_from_inequalities",
    "faces",
    "face_content",
    "face_contents",
    "hausdorff_measure",
    "convex_hull_volume",
    "parallelepiped_volume",
    "parallelepiped_volumes",
    "null_space",
    "section",
    "section_inequalities",
]


class GeometryError(Exception):
    """Base class for polytope computation failures."""


class Unbounded(GeometryError):
    """The halfspace intersection has a nontrivial recession cone."""


class DegenerateInput(GeometryError):
    """Constraints are too far from general position to resolve."""


class EmptySection(GeometryError):
    """A halfspace parallel to the section subspace excludes it entirely."""


def _unit(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} has non-finite entries")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"{what} must be a unit vector, got norm {np.linalg.norm(v)}")
    return v


@dataclass(frozen=True, eq=False)
class Halfspace:
    """The closed halfspace ``{x : <x, normal> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal, "halfspace normal"))
        object.__setattr__(self, "offset", float(self.offset))
        if not math.isfinite(self.offset):
            raise ValueError("halfspace offset must be finite")

    @classmethod
    def from_inequality(cls, a, b: float) -> "Halfspace":
        """Build from ``<a, x> <= b`` with an arbitrary nonzero ``a``."""
        a = np.asarray(a, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("zero normal")
        return cls(a / n, b / n)

    def contains(self, x, tol: float = 0.0) -> bool:
        return float(np.dot(self.normal, x)) <= self.offset + tol


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """The hyperplane ``{x : <x, normal> = offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        object.__setattr__(self, "normal", _unit(self.normal, "hyperplane normal"))
        object.__setattr__(self, "offset", float(self.offset))

    def halfspace_containing_origin(self) -> Halfspace:
        sign = 1.0 if self.offset >= 0 else -1.0
        return Halfspace(sign * self.normal, abs(self.offset))


@dataclass(frozen=True, eq=False)
class VPolytope:
    """Vertex representation of a bounded convex polytope.

    Attributes
    ----------
    vertices : ndarray, shape (m, n)
        Extreme points in ambient coordinates.
    dim : int
        Dimension of the affine hull (``-1`` for the empty polytope).
    facet_incidence : tuple of frozenset
        For each vertex, the indices of the generating constraints active at it.
    constraint_dim : int
        Dimension of the space in which the generating constraints live. It
        differs from the ambient dimension when a polytope computed inside a
        subspace is reported in ambient coordinates.
    """

    vertices: np.ndarray
    dim: int
    facet_incidence: tuple
    constraint_dim: int

    @classmethod
    def empty(cls, n: int) -> "VPolytope":
        return cls(np.zeros((0, n)), -1, (), n)

    @classmethod
    def point(cls, x) -> "VPolytope":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return cls(x, 0, (frozenset(),), x.shape[1])

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.dim < 0

    def mapped(self, basis: np.ndarray, origin=None) -> "VPolytope":
        """Embed coordinates ``y`` as ``origin + y @ basis`` (basis rows orthonormal)."""
        verts = self.vertices @ np.asarray(basis, dtype=float)
        if origin is not None:
            verts = verts + origin
        return VPolytope(verts, self.dim, self.facet_incidence, self.constraint_dim)


# --------------------------------------------------------------------------
# linear algebra helpers


@lru_cache(maxsize=256)
def _combinations(n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.intp)
    if k > n:
        return np.zeros((0, k), dtype=np.intp)
    out = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), k)),
        dtype=np.intp,
        count=math.comb(n, k) * k,
    )
    out = out.reshape(-1, k)
    out.setflags(write=False)
    return out


def parallelepiped_volumes(m: np.ndarray) -> np.ndarray:
    """Batched ``∇_j``: ``m`` has shape ``(..., j, n)``; returns shape ``(...)``."""
    m = np.asarray(m, dtype=float)
    j, n = m.shape[-2], m.shape[-1]
    if j == 0:
        return np.ones(m.shape[:-2])
    if j == n:
        return np.abs(np.linalg.det(m))
    if j == 1:
        return np.linalg.norm(m[..., 0, :], axis=-1)
    gram = m @ np.swapaxes(m, -1, -2)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


def parallelepiped_volume(vectors: Sequence) -> float:
    """j-volume of the parallelepiped spanned by ``vectors`` (``sqrt det Gram``)."""
    m = np.asarray(vectors, dtype=float)
    if m.size == 0:
        return 1.0
    m = np.atleast_2d(m)
    if m.shape[0] > m.shape[1]:
        return 0.0
    return float(parallelepiped_volumes(m))


def null_space(rows: np.ndarray, n: int | None = None) -> np.ndarray:
    """Orthonormal basis (as rows) of the orthogonal complement of ``span(rows)``.

    Raises :class:`DegenerateInput` if ``rows`` are linearly dependent.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        if n is None:
            raise ValueError("dimension required for an empty row set")
        return np.eye(n)
    rows = np.atleast_2d(rows)
    p, n = rows.shape
    _, sv, vt = np.linalg.svd(rows, full_matrices=True)
    if p > n or sv[-1] <= TOL.rank * max(sv[0], 1e-300):
        raise DegenerateInput("directions are linearly dependent")
    return vt[p:]


def _affine_rank(points: np.ndarray) -> int:
    if points.shape[0] <= 1:
        return 0 if points.shape[0] == 1 else -1
    diff = points[1:] - points[0]
    sv = np.linalg.svd(diff, compute_uv=False)
    scale = max(sv[0], np.abs(points).max(), 1.0)
    return int(np.sum(sv > 1e-9 * scale))


def _affine_frame(points: np.ndarray, dim: int):
    """Centroid and orthonormal rows spanning the affine hull of ``points``."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    return c, vt[:dim]


# --------------------------------------------------------------------------
# halfspace intersection


def _merge(points: np.ndarray) -> np.ndarray:
    """Cluster representatives of points closer than ``merge * (1 + |v|)``."""
    if len(points) <= 1:
        return points
    order = np.lexsort(points.T[::-1])
    points = points[order]
    tol = TOL.merge * (1.0 + np.abs(points).max(axis=1))
    pairs = cKDTree(points).query_pairs(r=float(tol.max()), p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return points
    i, j = pairs.min(axis=1), pairs.max(axis=1)
    gap = np.abs(points[i] - points[j]).max(axis=1)
    close = gap <= tol[j]
    i, j = i[close], j[close]
    keep = np.ones(len(points), dtype=bool)
    # greedy in sorted order: a point goes if an earlier kept point is close
    for a, b in sorted(zip(i.tolist(), j.tolist()), key=lambda t: (t[1], t[0])):
        if keep[a]:
            keep[b] = False
    return points[keep]


def _active_sets(A: np.ndarray, b: np.ndarray, verts: np.ndarray) -> tuple:
    resid = verts @ A.T - b
    scale = 1.0 + np.abs(b)[None, :] + np.abs(verts).max(axis=1, keepdims=True)
    act = np.abs(resid) <= 10 * TOL.feasibility * scale
    return tuple(frozenset(np.flatnonzero(row).tolist()) for row in act)


def _enumerate_vertices(A: np.ndarray, b: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    m, d = A.shape
    if m < d:
        return np.zeros((0, d))
    combos = _combinations(m, d)
    norms = np.linalg.norm(A, axis=1)
    found = []
    for start in range(0, len(combos), chunk):
        c = combos[start:start + chunk]
        M = A[c]
        det = np.linalg.det(M)
        ok = np.abs(det) > TOL.pivot * np.prod(norms[c], axis=1)
        if not np.any(ok):
            continue
        X = np.linalg.solve(M[ok], b[c[ok]][..., None])[..., 0]
        resid = X @ A.T - b
        slack = TOL.feasibility * (1.0 + np.abs(b)[None, :] + np.abs(X).max(axis=1, keepdims=True))
        feas = np.all(resid <= slack, axis=1)
        if np.any(feas):
            found.append(X[feas])
    if not found:
        return np.zeros((0, d))
    return _merge(np.concatenate(found))


def _dual_vertices(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vertices via the convex hull of the polar points ``a_i / b_i`` (needs ``b > 0``)."""
    pts = A / b[:, None]
    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError) as exc:
        raise Unbounded("constraint normals do not positively span the space") from exc
    offs = hull.equations[:, -1]
    if np.any(offs >= -TOL.feasibility):
        raise Unbounded("origin is not interior to the polar hull")
    verts = hull.equations[:, :-1] / (-offs)[:, None]
    return _merge(verts)


def _recession_trivial(A: np.ndarray) -> bool:
    """True iff ``{y : A y <= 0} = {0}``, i.e. the rows positively span the space."""
    d = A.shape[1]
    targets = np.vstack([np.eye(d), -np.ones((1, d))])
    for t in targets:
        _, res = nnls(A.T, t)
        if res > 1e-9 * (1.0 + np.linalg.norm(t)):
            return False
    return True


def _feasible(A: np.ndarray, b: np.ndarray) -> bool:
    d = A.shape[1]
    res = linprog(np.zeros(d), A_ub=A, b_ub=b, bounds=[(None, None)] * d, method="highs")
    return res.status == 0


def polytope_from_inequalities(
    A, b, method: str = "enumerate", check_bounded: bool = True
) -> VPolytope:
    """Vertex representation of ``{x : A x <= b}``.

    ``method="enumerate"`` solves every d x d subsystem (the reference path);
    ``method="dual"`` takes the convex hull of the polar points and requires
    every offset to be strictly positive (the origin strictly inside).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    m, d = A.shape
    if m == 0:
        raise Unbounded("no constraints")
    if method == "dual":
        if np.any(b <= 0):
            raise ValueError("dual method needs the origin strictly inside every halfspace")
        if d == 1:
            method = "enumerate"
        else:
            verts = _dual_vertices(A, b)
            active = _active_sets(A, b, verts)
            return VPolytope(verts, _affine_rank(verts), active, d)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    verts = _enumerate_vertices(A, b)
    if len(verts) == 0:
        if _recession_trivial(A) or not _feasible(A, b):
            return VPolytope.empty(d)
        raise Unbounded("feasible region contains a line or ray")
    if check_bounded and not _recession_trivial(A):
        raise Unbounded("feasible region has a nontrivial recession cone")
    active = _active_sets(A, b, verts)
    return VPolytope(verts, _affine_rank(verts), active, d)


def intersect_halfspaces(
    halfspaces: Sequence[Halfspace], d: int, method: str = "enumerate"
) -> VPolytope:
    """Vertex representation of the intersection of closed halfspaces in ``R^d``.

    Returns an empty polytope (``dim == -1``) when infeasible and raises
    :class:`Unbounded` when the intersection is not bounded.
    """
    if not halfspaces:
        raise ValueError("need at least one halfspace")
    if d < 1:
        raise ValueError("dimension must be positive")
    A = np.array([h.normal for h in halfspaces], dtype=float).reshape(-1, d)
    b = np.array([h.offset for h in halfspaces], dtype=float)
    return polytope_from_inequalities(A, b, method=method)


# --------------------------------------------------------------------------
# faces and contents


def _face_vertex_sets(p: VPolytope, r: int) -> list[tuple]:
    need = p.constraint_dim - r
    groups: dict[tuple, set] = {}
    for idx, act in enumerate(p.facet_incidence):
        if len(act) < need:
            continue
        for key in itertools.combinations(sorted(act), need):
            groups.setdefault(key, set()).add(idx)
    seen = set()
    out = []
    for members in groups.values():
        key = tuple(sorted(members))
        if key in seen or len(key) < r + 1:
            continue
        seen.add(key)
        if r == 1 and len(key) == 2:
            out.append(key)
        elif _affine_rank(p.vertices[list(key)]) == r:
            out.append(key)
    # drop non-maximal clusters (only possible under degeneracy)
    sets = [frozenset(k) for k in out]
    return [k for k, s in zip(out, sets) if not any(s < t for t in sets)]


def faces(p: VPolytope, r: int) -> list[VPolytope]:
    """All ``r``-dimensional faces of ``p``, each as its own :class:`VPolytope`."""
    if p.is_empty:
        return []
    if not 0 <= r <= p.dim:
        raise ValueError(f"face dimension {r} outside 0..{p.dim}")
    if r == p.dim:
        return [p]
    if r == 0:
        return [
            VPolytope(p.vertices[i:i + 1], 0, (p.facet_incidence[i],), p.constraint_dim)
            for i in range(p.n_vertices)
        ]
    result = []
    for key in _face_vertex_sets(p, r):
        idx = list(key)
        result.append(
            VPolytope(p.vertices[idx], r, tuple(p.facet_incidence[i] for i in idx), p.constraint_dim)
        )
    return result


def _polygon_area(y: np.ndarray) -> float:
    c = y.mean(axis=0)
    ang = np.arctan2(y[:, 1] - c[1], y[:, 0] - c[0])
    q = y[np.argsort(ang)]
    x0, y0 = q[:, 0], q[:, 1]
    x1 = np.concatenate([x0[1:], x0[:1]])
    y1 = np.concatenate([y0[1:], y0[:1]])
    return 0.5 * abs(float(np.dot(x0, y1) - np.dot(x1, y0)))


def convex_hull_volume(points: np.ndarray, apex: int = 0) -> float:
    """Volume of the convex hull of full-dimensional ``points`` (m >= 2 columns).

    The hull boundary is triangulated and coned from the hull vertex
    ``apex`` (an index into the hull's own vertex list), giving a fan of
    simplices whose volumes are absolute determinants over ``m!``.
    """
    points = np.asarray(points, dtype=float)
    m = points.shape[1]
    hull = ConvexHull(points)
    a = hull.vertices[apex % len(hull.vertices)]
    simp = hull.simplices[~np.any(hull.simplices == a, axis=1)]
    edges = points[simp] - points[a]
    return float(np.abs(np.linalg.det(edges)).sum() / math.factorial(m))


def hausdorff_measure(face: VPolytope, apex: int | None = None) -> float:
    """``dim``-dimensional Hausdorff measure of a polytope (a point has measure 1)."""
    if face.is_empty:
        return 0.0
    m = face.dim
    V = face.vertices
    if m == 0:
        return 1.0
    if m == face.ambient_dim:
        y = V
    else:
        c, frame = _affine_frame(V, m)
        y = (V - c) @ frame.T
    if m == 1:
        return float(y[:, 0].max() - y[:, 0].min())
    if m == 2 and apex is None:
        return _polygon_area(y)
    return convex_hull_volume(y, apex=apex or 0)


def _edge_lengths(p: VPolytope) -> float:
    total = 0.0
    for key in _face_vertex_sets(p, 1):
        total += float(np.linalg.norm(p.vertices[key[0]] - p.vertices[key[-1]]))
    return total


def face_content(p: VPolytope, r: int) -> float:
    """Total ``r``-face content ``L_r(p)``: sum of ``H^r`` over the ``r``-faces."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if p.is_empty or r > p.dim:
        return 0.0
    if r == 0:
        return float(p.n_vertices)
    if r == p.dim:
        return hausdorff_measure(p)
    if r == 1:
        return _edge_lengths(p)
    return float(sum(hausdorff_measure(f) for f in faces(p, r)))


def face_contents(p: VPolytope, upto: int | None = None) -> np.ndarray:
    """Vector ``(L_0(p), ..., L_upto(p))`` (zeros above ``dim``)."""
    upto = p.ambient_dim if upto is None else upto
    return np.array([face_content(p, r) for r in range(upto + 1)])


# --------------------------------------------------------------------------
# sections


def section_inequalities(A, b, basis):
    """Restrict ``{A x <= b}`` to the linear subspace spanned by ``basis`` rows.

    Returns ``(A_L, b_L)`` in the subspace coordinates with unit normals.
    Constraints whose normal is orthogonal to the subspace are dropped when
    they contain it and raise :class:`EmptySection` otherwise.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    Q = np.atleast_2d(np.asarray(basis, dtype=float))
    P = A @ Q.T
    norms = np.linalg.norm(P, axis=1)
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    keep = norms > TOL.rank * 1e2 * scale
    if np.any(b[~keep] < 0):
        raise EmptySection("a halfspace parallel to the subspace excludes it")
    return P[keep] / norms[keep, None], b[keep] / norms[keep]


def section(halfspaces: Sequence[Halfspace], basis) -> list[Halfspace]:
    """Halfspaces in subspace coordinates cutting out ``(∩ halfspaces) ∩ span(basis)``."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    A = np.array([h.normal for h in halfspaces], dtype=float).reshape(-1, basis.shape[1])
    b = np.array([h.offset for h in halfspaces], dtype=float)
    A_L, b_L = section_inequalities(A, b, basis)
    return [Halfspace(a, c) for a, c in zip(A_L, b_L)]
