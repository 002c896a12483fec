import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from hyperfaces import geometry as G


def cube_inequalities(d, half=1.0):
    A = np.vstack([np.eye(d), -np.eye(d)])
    return A, np.full(2 * d, half)


def random_polytope(seed, d, m=None):
    """Random bounded polytope containing the origin: tangent halfspaces of a ball cloud."""
    rng = np.random.default_rng(seed)
    m = m or rng.integers(d + 2, 4 * d + 4)
    A = rng.standard_normal((m, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = rng.uniform(0.5, 2.0, m)
    # a bounding cross-polytope keeps it bounded whatever the random normals are
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
    A = np.vstack([A, signs / math.sqrt(d)])
    b = np.concatenate([b, np.full(len(signs), 3.0)])
    return A, b


def rotation(seed, d):
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, d)))
    return q * np.sign(np.diag(r))


# --------------------------------------------------------------------------
# basic types


def test_halfspace_requires_unit_normal():
    with pytest.raises(ValueError):
        G.Halfspace(np.array([1.0, 1.0]), 1.0)
    h = G.Halfspace.from_inequality([3.0, 4.0], 10.0)
    assert h.offset == pytest.approx(2.0)
    assert h.contains([0.0, 0.0]) and not h.contains([3.0, 4.0])


def test_hyperplane_halfspace_containing_origin():
    h = G.Hyperplane(np.array([0.0, 1.0]), -2.0).halfspace_containing_origin()
    assert h.contains([0.0, 0.0])
    np.testing.assert_allclose(h.normal, [0.0, -1.0])
    assert h.offset == 2.0


def test_parallelepiped_volume_matches_determinant_and_gram():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((3, 3))
    assert G.parallelepiped_volume(M) == pytest.approx(abs(np.linalg.det(M)))
    v = rng.standard_normal((2, 4))
    assert G.parallelepiped_volume(v) == pytest.approx(math.sqrt(np.linalg.det(v @ v.T)))
    assert G.parallelepiped_volume([]) == 1.0
    assert G.parallelepiped_volume(np.eye(3)[:2] * 2.0) == pytest.approx(4.0)


def test_null_space_is_orthonormal_complement():
    rng = np.random.default_rng(2)
    U = rng.standard_normal((2, 5))
    Q = G.null_space(U)
    assert Q.shape == (3, 5)
    np.testing.assert_allclose(Q @ Q.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(U @ Q.T, 0.0, atol=1e-12)
    with pytest.raises(G.DegenerateInput):
        G.null_space(np.array([[1.0, 0, 0], [2.0, 0, 0]]))


# --------------------------------------------------------------------------
# halfspace intersection


@pytest.mark.parametrize("d", [2, 3, 4])
def test_cube_face_counts_and_contents(d):
    A, b = cube_inequalities(d)
    P = G.polytope_from_inequalities(A, b)
    assert P.dim == d
    for r in range(d + 1):
        n_faces = math.comb(d, r) * 2 ** (d - r)
        assert len(G.faces(P, r)) == n_faces
        # each r-face of [-1,1]^d is an r-cube of side 2
        assert G.face_content(P, r) == pytest.approx(n_faces * 2.0**r)


def test_methods_agree_on_random_polytopes():
    for seed in range(10):
        for d in (2, 3):
            A, b = random_polytope(seed, d)
            P = G.polytope_from_inequalities(A, b)
            Q = G.polytope_from_inequalities(A, b, method="dual")
            assert P.n_vertices == Q.n_vertices
            np.testing.assert_allclose(G.face_contents(P), G.face_contents(Q), rtol=1e-10)


def test_volume_matches_qhull():
    for seed in range(5):
        A, b = random_polytope(seed, 3)
        P = G.polytope_from_inequalities(A, b)
        assert G.hausdorff_measure(P) == pytest.approx(ConvexHull(P.vertices).volume, rel=1e-10)
        # the fan apex does not matter
        assert G.convex_hull_volume(P.vertices, apex=3) == pytest.approx(ConvexHull(P.vertices).volume, rel=1e-10)


def test_surface_area_matches_qhull():
    A, b = random_polytope(7, 3)
    P = G.polytope_from_inequalities(A, b)
    assert G.face_content(P, 2) == pytest.approx(ConvexHull(P.vertices).area, rel=1e-10)


def test_unbounded_and_empty():
    with pytest.raises(G.Unbounded):
        G.polytope_from_inequalities(np.array([[1.0, 0.0]]), np.array([1.0]))
    with pytest.raises(G.Unbounded):
        G.polytope_from_inequalities(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))
    # x <= -1 and -x <= -1 cannot both hold
    A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    P = G.polytope_from_inequalities(A, np.array([-1.0, -1.0, 1.0, 1.0]))
    assert P.is_empty and G.face_content(P, 0) == 0.0
    with pytest.raises(G.Unbounded):
        G.polytope_from_inequalities(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]), method="dual")


def test_redundant_constraint_is_not_a_facet():
    A, b = cube_inequalities(2)
    A = np.vstack([A, [[1 / math.sqrt(2), 1 / math.sqrt(2)]]])
    b = np.append(b, 5.0)
    P = G.polytope_from_inequalities(A, b)
    assert P.n_vertices == 4
    assert all(4 not in act for act in P.facet_incidence)


def test_intersect_halfspaces_square():
    hs = [G.Halfspace(n, 1.0) for n in ([1.0, 0], [-1.0, 0], [0, 1.0], [0, -1.0])]
    P = G.intersect_halfspaces(hs, 2)
    assert G.face_contents(P).tolist() == pytest.approx([4.0, 8.0, 4.0])


# --------------------------------------------------------------------------
# properties


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.sampled_from([2, 3]))
def test_euler_relation(seed, d):
    A, b = random_polytope(seed, d)
    P = G.polytope_from_inequalities(A, b)
    f = [len(G.faces(P, r)) for r in range(d + 1)]
    assert sum((-1) ** r * fr for r, fr in enumerate(f)) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), d=st.sampled_from([2, 3]), shift=st.floats(-0.3, 0.3))
def test_rigid_motion_invariance(seed, d, shift):
    A, b = random_polytope(seed, d)
    P = G.polytope_from_inequalities(A, b)
    R = rotation(seed + 1, d)
    t = np.full(d, shift)
    # x in P iff y = R x + t satisfies (A R^T) y <= b + A R^T t
    Q = G.polytope_from_inequalities(A @ R.T, b + A @ R.T @ t)
    np.testing.assert_allclose(G.face_contents(P), G.face_contents(Q), rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.sampled_from([0.5, 2.0, 7.0]))
def test_face_content_homogeneity(seed, lam):
    A, b = random_polytope(seed, 3)
    base = G.face_contents(G.polytope_from_inequalities(A, b))
    scaled = G.face_contents(G.polytope_from_inequalities(A, lam * b))
    np.testing.assert_allclose(scaled, base * lam ** np.arange(4), rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_parallelepiped_volume_permutation_and_homogeneity(seed):
    rng = np.random.default_rng(seed)
    j, n = rng.integers(1, 4), 4
    M = rng.standard_normal((j, n))
    base = G.parallelepiped_volume(M)
    assert G.parallelepiped_volume(M[rng.permutation(j)]) == pytest.approx(base, rel=1e-10)
    c = rng.uniform(0.1, 3.0, j)
    assert G.parallelepiped_volume(M * c[:, None]) == pytest.approx(base * c.prod(), rel=1e-10)


# --------------------------------------------------------------------------
# sections


def test_section_of_cube_through_diagonal_plane():
    A, b = cube_inequalities(3)
    Q = G.null_space(np.array([[1.0, 1.0, 1.0]]) / math.sqrt(3))
    A_L, b_L = G.section_inequalities(A, b, Q)
    P = G.polytope_from_inequalities(A_L, b_L)
    # the central hexagon of the cube [-1,1]^3 has side sqrt(2)
    assert P.n_vertices == 6
    assert G.hausdorff_measure(P) == pytest.approx(3 * math.sqrt(3) / 2 * 2.0)


def test_section_drops_parallel_halfspaces_and_detects_empty():
    A = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    Q = np.eye(3)[:2]
    A_L, b_L = G.section_inequalities(A, np.array([1.0, 1.0, 1.0]), Q)
    assert len(A_L) == 2
    with pytest.raises(G.EmptySection):
        G.section_inequalities(A, np.array([-1.0, 1.0, 1.0]), Q)
    hs = G.section([G.Halfspace(a, 1.0) for a in A], Q)
    assert len(hs) == 2


def test_mapped_faces_keep_contents():
    A, b = random_polytope(3, 2)
    P = G.polytope_from_inequalities(A, b)
    Q = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 2)))[0].T
    M = P.mapped(Q)
    assert M.ambient_dim == 4 and M.dim == 2
    np.testing.assert_allclose(G.face_contents(M, 2), G.face_contents(P), rtol=1e-10)


def test_hausdorff_measure_of_point_and_segment():
    assert G.hausdorff_measure(G.VPolytope.point([1.0, 2.0])) == 1.0
    seg = G.VPolytope(np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]]), 1, (frozenset(), frozenset()), 3)
    assert G.hausdorff_measure(seg) == pytest.approx(3.0)
    assert G.hausdorff_measure(G.VPolytope.empty(3)) == 0.0
