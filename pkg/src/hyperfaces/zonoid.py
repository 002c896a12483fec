"""Directional distributions, associated zonotopes and volume products.

A stationary Poisson hyperplane process with a discrete even directional
distribution is stored as one representative direction per antipodal pair,
each carrying the full mass of the pair. Its associated zonoid is then the
zonotope with generators ``intensity * weight_i / 2 * direction_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import geometry
from .geometry import Halfspace, _combinations, parallelepiped_volumes
from .tolerances import TOL

__all__ = [
    "InvalidDistribution",
    "TooManyGenerators",
    "DegenerateZonotope",
    "kappa",
    "DirectionalDistribution",
    "Isotropic",
    "Zonotope",
    "PolarBody",
    "cuboid",
    "isotropic_discretized",
    "random_atoms",
    "hemisphere_points",
    "associated_zonotope",
    "project",
    "intrinsic_volume",
    "intrinsic_volumes",
    "polar",
    "polar_volume",
    "volume_product",
    "nabla_moment",
    "inradius",
]


class InvalidDistribution(ValueError):
    pass


class TooManyGenerators(ValueError):
    pass


class DegenerateZonotope(ValueError):
    pass


def kappa(j: int) -> float:
    """Volume of the j-dimensional unit ball."""
    if j < 0:
        raise ValueError("dimension must be nonnegative")
    return math.exp(0.5 * j * math.log(math.pi) - math.lgamma(0.5 * j + 1.0))


@dataclass(frozen=True, eq=False)
class DirectionalDistribution:
    """Discrete even directional distribution together with the process intensity.

    Parameters
    ----------
    directions : array (n, d)
        One unit vector per antipodal pair ``{±v}``.
    weights : array (n,)
        Probability mass of each pair; positive, summing to one.
    intensity : float
        Hyperplane intensity ``γ̂``.
    """

    directions: np.ndarray
    weights: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.directions, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if v.shape[0] != w.shape[0]:
            raise InvalidDistribution("one weight per direction required")
        n, d = v.shape
        if d < 2:
            raise InvalidDistribution("dimension must be at least 2")
        if not (math.isfinite(self.intensity) and self.intensity > 0):
            raise InvalidDistribution("intensity must be positive")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(w)):
            raise InvalidDistribution("non-finite atoms")
        if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > 1e-9):
            raise InvalidDistribution("directions must be unit vectors")
        if np.any(w <= 0):
            raise InvalidDistribution("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidDistribution(f"weights sum to {float(w.sum()):.17g}, not 1")
        cos = np.abs(v @ v.T)[np.triu_indices(n, 1)]
        if np.any(cos > 1.0 - 1e-12):
            raise InvalidDistribution("directions must be pairwise distinct and non-antipodal")
        if np.linalg.matrix_rank(v) < d:
            raise InvalidDistribution("directions do not span the space (degenerate process)")
        v.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "directions", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intensity", float(self.intensity))

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.directions.shape[0]

    @cached_property
    def zonotope(self) -> "Zonotope":
        return associated_zonotope(self)

    def scaled(self, lam: float) -> "DirectionalDistribution":
        return DirectionalDistribution(self.directions, self.weights, self.intensity * lam)

    def rotated(self, rotation) -> "DirectionalDistribution":
        return DirectionalDistribution(self.directions @ np.asarray(rotation).T, self.weights, self.intensity)

    def sample_directions(self, rng: np.random.Generator, size: int):
        """Draw ``size`` unit normals: atom by weight, then a fair sign."""
        idx = rng.choice(self.n_atoms, size=size, p=self.weights)
        signs = rng.choice((-1.0, 1.0), size=size)
        return self.directions[idx] * signs[:, None], idx

    def to_dict(self) -> dict:
        return {
            "kind": "atoms",
            "directions": self.directions.tolist(),
            "weights": self.weights.tolist(),
            "intensity": self.intensity,
        }


@dataclass(frozen=True, eq=False)
class Isotropic:
    """Exactly rotation-invariant directional distribution (uniform on the sphere)."""

    d: int
    intensity: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise InvalidDistribution("dimension must be at least 2")
        if not self.intensity > 0:
            raise InvalidDistribution("intensity must be positive")

    @property
    def radius(self) -> float:
        """Radius of the associated zonoid, which is a ball."""
        return self.intensity * kappa(self.d - 1) / (self.d * kappa(self.d))

    def scaled(self, lam: float) -> "Isotropic":
        return Isotropic(self.d, self.intensity * lam)

    def sample_directions(self, rng: np.random.Generator, size: int):
        g = rng.standard_normal((size, self.d))
        return g / np.linalg.norm(g, axis=1, keepdims=True), None

    def to_dict(self) -> dict:
        return {"kind": "isotropic-closed-form", "d": self.d, "intensity": self.intensity}


# --------------------------------------------------------------------------
# constructors


def cuboid(d: int, intensity: float = 1.0) -> DirectionalDistribution:
    """Quasi-isotropic cuboid process: mass ``1/d`` on each pair ``±e_i``."""
    if d < 2:
        raise InvalidDistribution("cuboid process needs d >= 2")
    return DirectionalDistribution(np.eye(d), np.full(d, 1.0 / d), intensity)


def hemisphere_points(d: int, n: int) -> np.ndarray:
    """``n`` near-uniform representatives of antipodal pairs on ``S^{d-1}``.

    d=2: equally spaced angles on the half circle. d=3: a Fibonacci spiral on
    the upper hemisphere, uniform in height (hence in area).
    """
    if d == 2:
        t = np.pi * np.arange(n) / n
        return np.column_stack([np.cos(t), np.sin(t)])
    if d == 3:
        golden = np.pi * (3.0 - math.sqrt(5.0))
        z = (np.arange(n) + 0.5) / n
        rho = np.sqrt(1.0 - z**2)
        phi = golden * np.arange(n)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    raise ValueError("near-uniform point sets are provided for d = 2, 3 only")


def isotropic_discretized(d: int, n: int, intensity: float = 1.0) -> DirectionalDistribution:
    """Equal-weight discretization of the isotropic distribution with ``n`` atoms."""
    return DirectionalDistribution(hemisphere_points(d, n), np.full(n, 1.0 / n), intensity)


def random_atoms(d: int, n: int, rng: np.random.Generator, intensity: float = 1.0) -> DirectionalDistribution:
    """Random directions (Gaussian, normalized) with Dirichlet(1) weights."""
    v = rng.standard_normal((n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    w = rng.dirichlet(np.ones(n))
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return DirectionalDistribution(v, w, intensity)


# --------------------------------------------------------------------------
# zonotopes


@dataclass(frozen=True, eq=False)
class Zonotope:
    """Centered zonotope ``Σ_i [-z_i, z_i]`` in ``R^ambient_dim``."""

    generators: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        g = np.asarray(self.generators, dtype=float).reshape(-1, self.ambient_dim)
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite generators")
        object.__setattr__(self, "generators", g)

    def support(self, u) -> np.ndarray:
        """Support function ``Σ_i |<u, z_i>|`` (``u`` may be a stack of vectors)."""
        return np.abs(np.asarray(u, dtype=float) @ self.generators.T).sum(axis=-1)

    def nonzero_generators(self) -> np.ndarray:
        g = self.generators
        if len(g) == 0:
            return g
        n = np.linalg.norm(g, axis=1)
        return g[n > 1e-14 * max(n.max(), 1e-300)]

    def dim(self) -> int:
        g = self.nonzero_generators()
        return 0 if len(g) == 0 else int(np.linalg.matrix_rank(g, tol=TOL.rank * np.abs(g).max()))

    def vertices(self) -> np.ndarray:
        """Extreme points, from all ``2^m`` sign patterns (deduplicated)."""
        g = self.nonzero_generators()
        m, j = g.shape
        if m > TOL.generator_cap:
            raise TooManyGenerators(f"{m} generators exceed the cap {TOL.generator_cap}")
        if m == 0:
            return np.zeros((1, j))
        if self.dim() < j:
            raise DegenerateZonotope("zonotope is lower-dimensional in these coordinates")
        signs = 1.0 - 2.0 * ((np.arange(2**m)[:, None] >> np.arange(m)) & 1)
        pts = geometry._merge(signs @ g)
        if j == 1:
            return np.array([[pts.min()], [pts.max()]])
        return pts[ConvexHull(pts).vertices]


@dataclass(frozen=True, eq=False)
class PolarBody:
    """Polar body ``{x : <x, v> <= 1 for every vertex v}`` in the zonotope's coordinates."""

    halfspaces: tuple
    dim: int

    def polytope(self) -> geometry.VPolytope:
        return geometry.intersect_halfspaces(list(self.halfspaces), self.dim)

    def volume(self) -> float:
        return geometry.hausdorff_measure(self.polytope())


def associated_zonotope(dist: DirectionalDistribution) -> Zonotope:
    g = (0.5 * dist.intensity * dist.weights)[:, None] * dist.directions
    return Zonotope(g, dist.d)


def project(z: Zonotope, basis) -> Zonotope:
    """Orthogonal projection onto ``span(basis)``, expressed in basis coordinates."""
    basis = np.asarray(basis, dtype=float).reshape(-1, z.ambient_dim)
    return Zonotope(z.generators @ basis.T, basis.shape[0])


def _subset_nabla_sum(vectors: np.ndarray, j: int, weights=None, chunk: int = 250_000) -> float:
    """``Σ_{i_1<...<i_j} Π w · ∇_j(v_{i_1}, ..., v_{i_j})``."""
    n = len(vectors)
    if j == 0:
        return 1.0
    if j > n:
        return 0.0
    combos = _combinations(n, j)
    total = 0.0
    for start in range(0, len(combos), chunk):
        c = combos[start:start + chunk]
        vols = parallelepiped_volumes(vectors[c])
        if weights is not None:
            vols = vols * np.prod(weights[c], axis=1)
        total += float(vols.sum())
    return total


def intrinsic_volume(z: Zonotope, j: int) -> float:
    """``V_j(z) = 2^j Σ_{j-subsets} ∇_j`` of the generators."""
    if not 0 <= j <= z.ambient_dim:
        raise ValueError(f"j={j} outside 0..{z.ambient_dim}")
    if j == 0:
        return 1.0
    return 2.0**j * _subset_nabla_sum(z.nonzero_generators(), j)


def intrinsic_volumes(z: Zonotope) -> np.ndarray:
    return np.array([intrinsic_volume(z, j) for j in range(z.ambient_dim + 1)])


def polar(z: Zonotope) -> PolarBody:
    """H-representation of the polar body, from the zonotope's vertices."""
    j = z.ambient_dim
    if j < 1:
        raise DegenerateZonotope("polar of a point is not represented")
    verts = z.vertices()
    hs = tuple(Halfspace.from_inequality(v, 1.0) for v in verts)
    return PolarBody(hs, j)


def _facet_normals(g: np.ndarray) -> np.ndarray:
    """Unit normals of hyperplanes spanned by (j-1)-subsets of generators."""
    m, j = g.shape
    if j == 2:
        n = np.column_stack([-g[:, 1], g[:, 0]])
    elif j == 3:
        c = _combinations(m, 2)
        n = np.cross(g[c[:, 0]], g[c[:, 1]])
    else:
        c = _combinations(m, j - 1)
        n = np.empty((len(c), j))
        for i, rows in enumerate(g[c]):
            _, sv, vt = np.linalg.svd(rows, full_matrices=True)
            n[i] = vt[-1] if sv[-1] > TOL.rank * sv[0] else 0.0
    norms = np.linalg.norm(n, axis=1)
    keep = norms > TOL.rank * max(norms.max(initial=0.0), 1e-300)
    return n[keep] / norms[keep, None]


def inradius(z: Zonotope) -> float:
    """Radius of the largest centred ball in a full-dimensional zonotope, ``min_u h(z, u)``."""
    g = z.nonzero_generators()
    if len(g) == 0 or z.dim() < z.ambient_dim:
        raise DegenerateZonotope("zonotope is lower-dimensional in these coordinates")
    if z.ambient_dim == 1:
        return float(np.abs(g).sum())
    return float(z.support(_facet_normals(g)).min())


def polar_volume(z: Zonotope, method: str = "dual") -> float:
    """Volume of the polar body inside the zonotope's coordinate space.

    ``"dual"`` takes the convex hull of ``±n/h(z, n)`` over facet normals
    ``n`` (every hyperplane spanned by generators carries a facet);
    ``"hrep"`` intersects the halfspaces of :func:`polar`.
    """
    j = z.ambient_dim
    if j == 0:
        return 1.0
    g = z.nonzero_generators()
    if len(g) == 0 or z.dim() < j:
        raise DegenerateZonotope("zonotope is lower-dimensional in these coordinates")
    if j == 1:
        return 2.0 / float(np.abs(g).sum())
    if method == "hrep":
        return polar(z).volume()
    if method != "dual":
        raise ValueError(f"unknown method {method!r}")
    n = _facet_normals(g)
    pts = n / z.support(n)[:, None]
    try:
        return geometry.convex_hull_volume(np.vstack([pts, -pts]))
    except QhullError as exc:
        raise DegenerateZonotope(str(exc)) from exc


def volume_product(z: Zonotope, method: str = "dual") -> float:
    """``vp(z) = V_j(z) V_j(z°)`` with ``j`` the coordinate dimension (1 for a point)."""
    j = z.ambient_dim
    if j == 0:
        return 1.0
    return intrinsic_volume(z, j) * polar_volume(z, method=method)


def nabla_moment(dist: DirectionalDistribution, m: int, ordered: bool = True) -> float:
    """``∫ ∇_m(u_1..u_m) φ̂^m(du)`` for the discrete measure.

    With ``ordered=True`` the sum runs literally over all ``n^m`` ordered atom
    tuples (sign choices are irrelevant to ``∇``); otherwise over unordered
    subsets times ``m!``, which is the same number when tuples with repeated
    atoms vanish.
    """
    v, w = dist.directions, dist.weights
    n = len(w)
    if m == 0:
        return 1.0
    if ordered and n**m <= 2_000_000:
        idx = np.indices((n,) * m).reshape(m, -1).T
        return float((parallelepiped_volumes(v[idx]) * np.prod(w[idx], axis=1)).sum())
    return math.factorial(m) * _subset_nabla_sum(v, m, weights=w)
