import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stepstone.geometry import (
    EmptyFoothold,
    EmptyPointSet,
    DegenerateFit,
    FootholdPolygon,
    GeometryError,
    Line2,
    ParallelPlanes,
    Plane3,
    Transform2,
    convex_hull,
    crop_polygon,
    fit_line_weighted,
    lines_equal,
    plane_intersection,
    reduce_to_four_corners,
)

import oracles

UNIT_SQUARE = FootholdPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def ring_equal(a, b, tol=1e-9):
    """Vertex rings equal up to cyclic rotation."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return False
    n = a.shape[0]
    for s in range(n):
        if np.allclose(np.roll(a, s, axis=0), b, atol=tol):
            return True
    return False


class TestConvexHull:
    def test_triangle_already_convex(self):
        hull = convex_hull([(0, 0), (1, 0), (0, 1)])
        assert ring_equal(hull.vertices, [[0, 0], [1, 0], [0, 1]])

    def test_interior_point_dropped(self):
        hull = convex_hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
        assert hull.n_vertices == 4
        assert ring_equal(hull.vertices, UNIT_SQUARE.vertices)

    def test_random_disk_matches_brute_force(self):
        rng = np.random.default_rng(42)
        r = np.sqrt(rng.uniform(0, 1, 200))
        th = rng.uniform(0, 2 * math.pi, 200)
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        hull = convex_hull(pts)
        expected = oracles.brute_force_hull(pts)
        assert ring_equal(hull.vertices, expected, tol=1e-9)

    def test_all_inputs_within_hull(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(60, 2))
        hull = convex_hull(pts)
        for p in pts:
            assert hull.signed_distance(p) <= 1e-9

    def test_empty_raises(self):
        with pytest.raises(EmptyPointSet):
            convex_hull(np.zeros((0, 2)))

    def test_degenerate_point_and_segment(self):
        assert convex_hull([(0.5, 0.5)]).n_vertices == 1
        seg = convex_hull([(0, 0), (1, 1), (0.5, 0.5)])
        assert seg.n_vertices == 2
        assert ring_equal(seg.vertices, [[0, 0], [1, 1]])

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(30, 2))
        h1 = convex_hull(pts)
        h2 = convex_hull(h1.vertices)
        assert ring_equal(h1.vertices, h2.vertices)

    def test_ccw_and_convex(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pts = rng.normal(size=(25, 2))
            hull = convex_hull(pts)
            hull.validate()
            assert hull.area() > 0


class TestCropPolygon:
    def test_axis_aligned_cut(self):
        cut = Line2(np.array([0.5, 0.0]), np.array([0.0, 1.0]))
        out = crop_polygon(UNIT_SQUARE, cut, keep=(0, 0))
        assert out.area() == pytest.approx(0.5, abs=1e-12)
        assert ring_equal(out.vertices, [[0, 0], [0.5, 0], [0.5, 1], [0, 1]])

    def test_non_intersecting_cut_unchanged(self):
        cut = Line2(np.array([2.0, 0.0]), np.array([0.0, 1.0]))
        out = crop_polygon(UNIT_SQUARE, cut, keep=(0, 0))
        assert ring_equal(out.vertices, UNIT_SQUARE.vertices)

    def test_empty_result_raises(self):
        cut = Line2(np.array([2.0, 0.0]), np.array([0.0, 1.0]))
        with pytest.raises(EmptyFoothold):
            crop_polygon(UNIT_SQUARE, cut, keep=(3, 0))

    def test_keep_on_line_rejected(self):
        cut = Line2(np.array([0.5, 0.0]), np.array([0.0, 1.0]))
        with pytest.raises(GeometryError):
            crop_polygon(UNIT_SQUARE, cut, keep=(0.5, 0.7))

    def test_random_crops_match_edge_clipping_oracle(self):
        rng = np.random.default_rng(1234)
        for _ in range(50):
            verts = oracles.random_convex_polygon(rng, 8, radius=1.0)
            poly = FootholdPolygon(verts)
            lp = rng.normal(scale=0.5, size=2)
            ang = rng.uniform(0, 2 * math.pi)
            ld = np.array([math.cos(ang), math.sin(ang)])
            keep = rng.normal(scale=0.8, size=2)
            line = Line2(lp, ld)
            if line.distance(keep) < 1e-3:
                continue
            expected = oracles.clip_polygon_halfplane(verts, lp, ld, keep)
            try:
                got = crop_polygon(poly, line, keep)
            except EmptyFoothold:
                assert expected.shape[0] == 0 or oracles.shoelace(expected) < 1e-12
                continue
            if expected.shape[0] >= 3 and got.n_vertices >= 3:
                assert got.area() == pytest.approx(oracles.shoelace(expected), abs=1e-9)
                for q in expected:
                    assert got.signed_distance(q) <= 1e-9

    def test_crop_monotone_and_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            verts = oracles.random_convex_polygon(rng, 7, radius=0.5)
            poly = FootholdPolygon(verts)
            line = Line2(rng.normal(scale=0.2, size=2), rng.normal(size=2))
            keep = rng.normal(scale=0.4, size=2)
            if line.distance(keep) < 1e-3:
                continue
            try:
                once = crop_polygon(poly, line, keep)
            except EmptyFoothold:
                continue
            assert once.area() <= poly.area() + 1e-12
            twice = crop_polygon(once, line, keep)
            assert twice.area() == pytest.approx(once.area(), abs=1e-9)

    def test_degenerate_segment_crop(self):
        seg = FootholdPolygon(np.array([[0.0, 0.0], [1.0, 0.0]]))
        cut = Line2(np.array([0.5, 0.0]), np.array([0.0, 1.0]))
        out = crop_polygon(seg, cut, keep=(0, 0.0001))
        assert out.n_vertices == 2
        assert ring_equal(out.vertices, [[0, 0], [0.5, 0]])


class TestFitLineWeighted:
    def test_exact_collinear(self):
        pts = [(x, 2 * x) for x in np.linspace(-1, 3, 9)]
        line = fit_line_weighted(pts, np.ones(9))
        d = np.array([1.0, 2.0]) / math.sqrt(5)
        assert abs(abs(line.direction @ d) - 1.0) < 1e-12
        for p in pts:
            assert line.distance(p) < 1e-12

    def test_matches_eigen_oracle(self):
        pts = np.array([(0.0, 0.0), (1.0, 0.1), (2.0, -0.1)])
        w = np.ones(3)
        line = fit_line_weighted(pts, w)
        c, d = oracles.weighted_tls_line(pts, w)
        assert np.allclose(line.point, c, atol=1e-12)
        assert abs(abs(line.direction @ d) - 1.0) < 1e-12

    def test_heavy_weight_dominates(self):
        pts = np.array([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)])
        w = np.array([1.0, 100.0, 1.0])
        line = fit_line_weighted(pts, w)
        c, d = oracles.weighted_tls_line(pts, w)
        assert np.allclose(line.point, c, atol=1e-12)
        assert abs(abs(line.direction @ d) - 1.0) < 1e-10

    def test_coincident_raises(self):
        with pytest.raises(DegenerateFit):
            fit_line_weighted([(1.0, 1.0)] * 5, np.ones(5))

    def test_rigid_equivariance(self):
        rng = np.random.default_rng(17)
        pts = rng.normal(size=(12, 2))
        w = rng.uniform(0.1, 2.0, size=12)
        line = fit_line_weighted(pts, w)
        tf = Transform2(yaw=0.7, translation=np.array([0.3, -1.2]))
        line_t = fit_line_weighted(tf.apply_many(pts), w)
        assert lines_equal(tf.apply_line(line), line_t, tol=1e-9)


class TestPlaneIntersection:
    def test_single_axis_tilt_45deg(self):
        s = math.sin(math.radians(45))
        foot = Plane3(np.zeros(3), np.array([s, 0.0, s]))
        ground = Plane3(np.zeros(3), np.array([0.0, 0.0, 1.0]))
        axis, theta = plane_intersection(foot, ground)
        assert theta == pytest.approx(math.radians(45), abs=1e-12)
        assert abs(abs(axis.direction[1]) - 1.0) < 1e-12

    def test_parallel_raises(self):
        p = Plane3(np.zeros(3), np.array([0.0, 0.0, 1.0]))
        q = Plane3(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 1.0]))
        with pytest.raises(ParallelPlanes):
            plane_intersection(p, q)

    def test_random_pair_orthogonality(self):
        rng = np.random.default_rng(23)
        for _ in range(40):
            n1 = rng.normal(size=3)
            n1 /= np.linalg.norm(n1)
            n2 = np.array([0.0, 0.0, 1.0])
            if abs(n1 @ n2) > 0.999:
                continue
            foot = Plane3(rng.normal(size=3), n1)
            ground = Plane3(np.array([0.0, 0.0, 0.0]), n2)
            axis, theta = plane_intersection(foot, ground)
            assert theta == pytest.approx(math.acos(abs(n1 @ n2)), abs=1e-9)
            d3 = np.array([axis.direction[0], axis.direction[1], 0.0])
            assert abs(d3 @ n1) < 1e-9
            assert abs(d3 @ n2) < 1e-9
            # Line point lies on both planes.
            p3 = np.array([axis.point[0], axis.point[1], 0.0])
            assert abs((p3 - ground.point) @ n2) < 1e-9

    def test_symmetric_in_argument_order(self):
        n1 = np.array([0.2, -0.3, 0.93])
        n1 /= np.linalg.norm(n1)
        foot = Plane3(np.array([0.1, 0.0, 0.0]), n1)
        ground = Plane3(np.zeros(3), np.array([0.0, 0.0, 1.0]))
        a1, t1 = plane_intersection(foot, ground)
        a2, t2 = plane_intersection(ground, foot)
        assert t1 == pytest.approx(t2, abs=1e-12)
        assert lines_equal(a1, a2, tol=1e-9)


class TestReduceToFourCorners:
    def test_square_unchanged(self):
        out = reduce_to_four_corners(UNIT_SQUARE)
        assert ring_equal(out.vertices, UNIT_SQUARE.vertices)

    def test_segment_padded(self):
        seg = FootholdPolygon(np.array([[0.0, 0.0], [0.2, 0.0]]))
        out = reduce_to_four_corners(seg)
        assert out.n_vertices == 4
        uniq = np.unique(np.round(out.vertices, 12), axis=0)
        assert uniq.shape[0] == 2

    def test_hexagon_vs_exhaustive_subset(self):
        r = 0.1
        ang = np.arange(6) * math.pi / 3
        hexagon = FootholdPolygon(np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1))
        out = reduce_to_four_corners(hexagon)
        assert out.n_vertices == 4
        best = oracles.best_four_vertex_subset_area(hexagon.vertices)
        assert out.area() >= 0.97 * best
        # Stays within the dilated hull.
        for v in out.vertices:
            assert hexagon.signed_distance(v) <= 5e-3 + 1e-9

    def test_random_polygons_within_3pct_of_optimum(self):
        rng = np.random.default_rng(99)
        for _ in range(30):
            n = int(rng.integers(5, 13))
            verts = oracles.random_convex_polygon(rng, n, radius=0.12)
            if len(verts) < 5:
                continue
            poly = FootholdPolygon(verts)
            out = reduce_to_four_corners(poly)
            assert out.n_vertices == 4
            out.validate()
            best = oracles.best_four_vertex_subset_area(verts)
            assert out.area() >= 0.97 * best
            for v in out.vertices:
                assert poly.signed_distance(v) <= 5e-3 + 1e-9


class TestPolygonBasics:
    def test_signed_distance_square(self):
        assert UNIT_SQUARE.signed_distance((0.5, 0.5)) == pytest.approx(-0.5)
        assert UNIT_SQUARE.signed_distance((1.5, 0.5)) == pytest.approx(0.5)
        assert UNIT_SQUARE.signed_distance((0.5, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_clamp_with_margin(self):
        p = UNIT_SQUARE.clamp((2.0, 0.5), margin=0.05)
        assert np.allclose(p, [0.95, 0.5], atol=1e-9)
        inside = UNIT_SQUARE.clamp((0.5, 0.5), margin=0.05)
        assert np.allclose(inside, [0.5, 0.5])

    def test_centroid_degenerate(self):
        seg = FootholdPolygon(np.array([[0.0, 0.0], [1.0, 0.0]]))
        assert np.allclose(seg.centroid(), [0.5, 0.0])

    def test_json_roundtrip(self):
        obj = UNIT_SQUARE.to_json()
        back = FootholdPolygon.from_json(obj)
        assert ring_equal(back.vertices, UNIT_SQUARE.vertices)
        assert back.frame == UNIT_SQUARE.frame

    def test_transform_roundtrip(self):
        tf = Transform2(yaw=0.4, translation=np.array([1.0, -2.0]))
        p = np.array([0.3, 0.7])
        assert np.allclose(tf.inverse().apply(tf.apply(p)), p, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(-10, 10, allow_nan=False, allow_infinity=False),
            st.floats(-10, 10, allow_nan=False, allow_infinity=False),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_hull_conservatism_property(pts):
    hull = convex_hull(np.array(pts, dtype=float))
    for p in pts:
        assert hull.signed_distance(np.array(p)) <= 1e-9
