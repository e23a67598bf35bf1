"""H-representation polytopes: membership, emptiness, vertices, preimages."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from cvpmpc.geometry import (
    Halfspace,
    Polytope,
    contains,
    enumerate_vertices,
    halfspace_preimage,
    intersect,
    is_bounded,
    is_empty,
)

UNIT_SQUARE = Polytope.from_bounds([(0.0, 1.0), (0.0, 1.0)])


def brute_force_vertices_2d(A, b, feas_tol=1e-8):
    """Independent 2-D vertex oracle: solve every facet pair by Cramer's rule."""
    pts = []
    k = len(b)
    for i in range(k):
        for j in range(i + 1, k):
            det = A[i, 0] * A[j, 1] - A[i, 1] * A[j, 0]
            if abs(det) < 1e-10:
                continue
            x = (b[i] * A[j, 1] - b[j] * A[i, 1]) / det
            y = (A[i, 0] * b[j] - A[j, 0] * b[i]) / det
            v = np.array([x, y])
            if np.all(A @ v <= b + feas_tol):
                pts.append(v)
    out = []
    for v in sorted(pts, key=tuple):
        if not any(np.max(np.abs(v - w)) <= 1e-8 for w in out):
            out.append(v)
    return out


class TestConstruction:
    def test_zero_normal_rejected(self):
        with pytest.raises(ValueError):
            Halfspace(np.zeros(2), 1.0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Polytope((Halfspace(np.ones(3), 1.0),), 2)

    def test_from_bounds_round_trip(self):
        box = Polytope.from_bounds([(-1.0, 2.0), (0.5, 3.0)])
        assert box.dim == 2
        assert len(box.halfspaces) == 4
        assert contains(box, [0.0, 1.0])
        assert not contains(box, [2.1, 1.0])
        assert not contains(box, [0.0, 0.4])

    def test_from_inequalities_matches_stacked_arrays(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        b = np.array([1.0, 2.0, 0.0])
        P = Polytope.from_inequalities(A, b)
        assert np.array_equal(P.A, A)
        assert np.array_equal(P.b, b)

    def test_equality_is_by_content(self):
        assert UNIT_SQUARE == Polytope.from_bounds([(0.0, 1.0), (0.0, 1.0)])
        assert UNIT_SQUARE != Polytope.from_bounds([(0.0, 1.0), (0.0, 2.0)])


class TestMembership:
    def test_empty_halfspace_list_is_whole_space(self):
        free = Polytope((), 2)
        assert contains(free, [1e9, -1e9])
        assert not is_empty(free)

    def test_tolerance_is_respected(self):
        assert contains(UNIT_SQUARE, [1.0 + 1e-10, 0.5])
        assert not contains(UNIT_SQUARE, [1.0 + 1e-8, 0.5])
        assert contains(UNIT_SQUARE, [1.0 + 1e-8, 0.5], tol=1e-6)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            contains(UNIT_SQUARE, [0.5])

    def test_intersect_appends_halfspace(self):
        cut = intersect(UNIT_SQUARE, Halfspace(np.array([1.0, 1.0]), 1.0))
        assert len(cut.halfspaces) == 5
        assert contains(cut, [0.25, 0.25])
        assert not contains(cut, [0.9, 0.9])
        with pytest.raises(ValueError):
            intersect(UNIT_SQUARE, Halfspace(np.ones(3), 1.0))


class TestEmptiness:
    def test_box_is_nonempty(self):
        assert not is_empty(UNIT_SQUARE)

    def test_contradictory_pair_is_empty(self):
        e = np.array([1.0, 0.0])
        P = Polytope((Halfspace(e, -1.0), Halfspace(-e, -1.0)), 2)
        assert is_empty(P)

    def test_measure_zero_slab_is_nonempty(self):
        # {u : u1 <= 0, -u1 <= 0} is the line u1 = 0, not the empty set.
        e = np.array([1.0, 0.0])
        P = Polytope((Halfspace(e, 0.0), Halfspace(-e, 0.0)), 2)
        assert not is_empty(P)

    def test_box_squeezed_past_empty(self):
        P = Polytope.from_bounds([(0.0, 1.0), (2.0, 1.5)])
        assert is_empty(P)


class TestBoundedness:
    def test_box_bounded(self):
        assert is_bounded(UNIT_SQUARE)

    def test_slab_unbounded(self):
        P = Polytope.from_inequalities(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, 1.0]))
        assert not is_bounded(P)

    def test_empty_counts_as_bounded(self):
        e = np.array([1.0, 0.0])
        P = Polytope((Halfspace(e, -1.0), Halfspace(-e, -1.0)), 2)
        assert is_bounded(P)


class TestVertexEnumeration:
    def test_unit_square_lexicographic(self):
        verts = enumerate_vertices(UNIT_SQUARE)
        expected = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        assert [tuple(v) for v in verts] == expected

    def test_triangle(self):
        P = Polytope.from_inequalities(
            np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]),
            np.array([0.0, 0.0, 2.0]),
        )
        verts = enumerate_vertices(P)
        assert [tuple(v) for v in verts] == [(0.0, 0.0), (0.0, 2.0), (2.0, 0.0)]

    def test_redundant_facets_are_harmless(self):
        P = Polytope(
            UNIT_SQUARE.halfspaces + (Halfspace(np.array([1.0, 0.0]), 5.0),),
            2,
        )
        assert len(enumerate_vertices(P)) == 4

    def test_duplicate_facets_merge_vertices(self):
        P = Polytope(UNIT_SQUARE.halfspaces + UNIT_SQUARE.halfspaces, 2)
        assert len(enumerate_vertices(P)) == 4

    def test_degenerate_interval_in_2d(self):
        # A segment: the y-coordinate is pinned to 0.
        P = Polytope.from_bounds([(1.0, 2.0), (0.0, 0.0)])
        verts = enumerate_vertices(P)
        assert [tuple(v) for v in verts] == [(1.0, 0.0), (2.0, 0.0)]

    def test_3d_box(self):
        P = Polytope.from_bounds([(0.0, 1.0)] * 3)
        assert len(enumerate_vertices(P)) == 8

    def test_dim_4_rejected(self):
        P = Polytope.from_bounds([(0.0, 1.0)] * 4)
        with pytest.raises(ValueError):
            enumerate_vertices(P)

    def test_unbounded_rejected(self):
        P = Polytope.from_inequalities(np.array([[1.0, 0.0]]), np.array([1.0]))
        with pytest.raises(ValueError):
            enumerate_vertices(P)

    def test_empty_gives_no_vertices(self):
        e = np.array([1.0, 0.0])
        P = Polytope(
            Polytope.from_bounds([(0.0, 1.0), (0.0, 1.0)]).halfspaces
            + (Halfspace(e, -1.0),),
            2,
        )
        assert enumerate_vertices(P) == []

    @pytest.mark.parametrize("seed", range(12))
    def test_random_polytopes_match_pairwise_oracle(self, seed):
        """Cross-check against an independent Cramer's-rule facet-pair solve."""
        rng = np.random.default_rng(seed)
        k = int(rng.integers(3, 8))
        normals = rng.normal(size=(k, 2))
        offsets = rng.uniform(0.2, 1.5, size=k)  # all contain the origin
        A = np.vstack([normals, np.eye(2), -np.eye(2)])
        b = np.concatenate([offsets, np.full(4, 3.0)])  # bounding box keeps it finite
        P = Polytope.from_inequalities(A, b)
        got = enumerate_vertices(P)
        want = brute_force_vertices_2d(A, b)
        assert len(got) == len(want)
        for g, w in zip(got, want):
            assert np.allclose(g, w, atol=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_vertices_span_the_feasible_set(self, seed):
        """Sampled feasible points must lie inside the hull of the vertices."""
        rng = np.random.default_rng(100 + seed)
        normals = rng.normal(size=(6, 2))
        offsets = rng.uniform(0.3, 1.2, size=6)
        A = np.vstack([normals, np.eye(2), -np.eye(2)])
        b = np.concatenate([offsets, np.full(4, 2.0)])
        P = Polytope.from_inequalities(A, b)
        verts = enumerate_vertices(P)
        assert len(verts) >= 3
        hull = ConvexHull(np.vstack(verts), qhull_options="QJ")
        # Rejection-sample feasible points inside the bounding box.
        pts = rng.uniform(-2.0, 2.0, size=(4000, 2))
        feas = pts[np.all(pts @ A.T <= b + 1e-12, axis=1)]
        assert len(feas) > 50
        eqs = hull.equations
        inside = np.all(feas @ eqs[:, :2].T + eqs[:, 2] <= 1e-6, axis=1)
        assert np.all(inside)


class TestHalfspacePreimage:
    def test_regular_transform(self):
        hs = Halfspace(np.array([1.0, 0.0]), 8.0)  # x1 <= 8
        M = 0.1 * np.eye(2)
        c = np.array([7.5, 0.0])
        out = halfspace_preimage(hs, M, c)
        assert len(out) == 1
        assert np.allclose(out[0].normal, [0.1, 0.0])
        assert out[0].offset == pytest.approx(0.5)

    def test_insensitive_and_satisfied_drops_out(self):
        hs = Halfspace(np.array([0.0, 1.0]), 8.0)
        M = np.array([[1.0], [0.0]])  # u does not touch coordinate 2
        c = np.array([0.0, 5.0])
        assert halfspace_preimage(hs, M, c) == []

    def test_insensitive_and_violated_encodes_empty(self):
        hs = Halfspace(np.array([0.0, 1.0]), 8.0)
        M = np.array([[1.0], [0.0]])
        c = np.array([0.0, 9.0])
        out = halfspace_preimage(hs, M, c)
        assert len(out) == 2
        P = Polytope(tuple(out), 1)
        assert is_empty(P)

    @settings(max_examples=30, deadline=None)
    @given(
        st.floats(-2.0, 2.0),
        st.floats(-2.0, 2.0),
        st.floats(-3.0, 3.0),
        st.floats(-3.0, 3.0),
    )
    def test_preimage_membership_agrees_with_image(self, u1, u2, c1, c2):
        hs = Halfspace(np.array([0.7, -0.3]), 1.1)
        M = np.array([[0.4, 0.1], [-0.2, 0.5]])
        c = np.array([c1, c2])
        u = np.array([u1, u2])
        out = halfspace_preimage(hs, M, c)
        Pu = Polytope(tuple(out), 2)
        image_ok = float(hs.normal @ (M @ u + c)) <= hs.offset + 1e-9
        assert contains(Pu, u) == image_ok
