"""Geometry primitives checked against shapely as an independent oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Point, Polygon

from unjam.geometry import (
    OrientedRectangle,
    point_rect_signed,
    polyline_arclengths,
    poses_rect_signed,
    project_to_polyline,
    rect_corners,
    rect_rect_signed,
    resample_polyline,
    wrap_angle,
)

coords = st.floats(-10.0, 10.0)
angles = st.floats(-np.pi, np.pi)
sizes = st.floats(0.2, 5.0)


def shapely_rect(rect: OrientedRectangle) -> Polygon:
    return Polygon(rect.corners())


# -- wrap_angle ------------------------------------------------------


def test_wrap_angle_scalars():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)  # (-pi, pi] convention
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-0.5) == pytest.approx(-0.5)


def test_wrap_angle_array():
    out = wrap_angle(np.array([0.0, 2 * np.pi, -3 * np.pi / 2]))
    assert out == pytest.approx([0.0, 0.0, np.pi / 2])


@given(st.floats(-100.0, 100.0))
def test_wrap_angle_range_and_equivalence(theta):
    w = wrap_angle(theta)
    assert -np.pi < w <= np.pi + 1e-12
    assert np.cos(w) == pytest.approx(np.cos(theta), abs=1e-9)
    assert np.sin(w) == pytest.approx(np.sin(theta), abs=1e-9)


# -- rectangle corners ----------------------------------------------


def test_rect_corners_axis_aligned():
    c = rect_corners(np.array([[1.0, 2.0, 0.0]]), 4.0, 2.0)[0]
    np.testing.assert_allclose(c, [[3, 3], [-1, 3], [-1, 1], [3, 1]], atol=1e-12)


def test_rect_corners_rotation_matrix_oracle():
    heading = np.pi / 4
    c = rect_corners(np.array([[0.5, -0.25, heading]]), 3.0, 1.0)[0]
    rot = np.array(
        [[np.cos(heading), -np.sin(heading)], [np.sin(heading), np.cos(heading)]]
    )
    local = np.array([[1.5, 0.5], [-1.5, 0.5], [-1.5, -0.5], [1.5, -0.5]])
    np.testing.assert_allclose(c, local @ rot.T + [0.5, -0.25], atol=1e-12)


@given(coords, coords, angles, sizes, sizes)
def test_rect_corners_counter_clockwise(cx, cy, heading, length, width):
    c = rect_corners(np.array([[cx, cy, heading]]), length, width)[0]
    # shoelace area positive for counter-clockwise winding
    area = 0.5 * np.sum(
        c[:, 0] * np.roll(c[:, 1], -1) - np.roll(c[:, 0], -1) * c[:, 1]
    )
    assert area == pytest.approx(length * width, rel=1e-9)


# -- signed distances ------------------------------------------------


@settings(max_examples=200)
@given(coords, coords, coords, coords, angles, sizes, sizes)
def test_point_rect_signed_matches_shapely(px, py, cx, cy, heading, length, width):
    rect = OrientedRectangle(cx, cy, heading, length, width)
    poly = shapely_rect(rect)
    d = float(point_rect_signed(np.array([[px, py]]), rect)[0])
    p = Point(px, py)
    if poly.covers(p):
        assert d == pytest.approx(-p.distance(poly.exterior), abs=1e-9)
    else:
        assert d == pytest.approx(p.distance(poly), abs=1e-9)


@settings(max_examples=200)
@given(
    coords, coords, angles, sizes, sizes,
    coords, coords, angles, sizes, sizes,
)
def test_rect_rect_signed_matches_shapely_when_apart(
    ax, ay, ah, al, aw, bx, by, bh, bl, bw
):
    a = OrientedRectangle(ax, ay, ah, al, aw)
    b = OrientedRectangle(bx, by, bh, bl, bw)
    d = rect_rect_signed(a, b)
    pa, pb = shapely_rect(a), shapely_rect(b)
    if d > 1e-9:
        assert not pa.intersects(pb)
        assert d == pytest.approx(pa.distance(pb), abs=1e-9)
    elif d < -1e-9:
        assert pa.intersection(pb).area > 0.0
    # |d| <= 1e-9: touching, either verdict is acceptable


def test_rect_rect_signed_hand_values():
    a = OrientedRectangle(0.0, 0.0, 0.0, 1.0, 1.0)
    assert rect_rect_signed(a, OrientedRectangle(2.0, 0.0, 0.0, 1.0, 1.0)) == (
        pytest.approx(1.0)
    )
    # 0.4 offset of unit squares: x-overlap 0.6 is the smallest push-out
    assert rect_rect_signed(a, OrientedRectangle(0.4, 0.0, 0.0, 1.0, 1.0)) == (
        pytest.approx(-0.6)
    )
    # diagonal gap: closest corners (0.5, 0.5) and (1.0, 1.0)
    assert rect_rect_signed(a, OrientedRectangle(1.5, 1.5, 0.0, 1.0, 1.0)) == (
        pytest.approx(np.hypot(0.5, 0.5))
    )


def test_penetration_depth_is_min_face_translation():
    """-rho equals the smallest face-normal translation that separates.

    For convex polygons the minimum translation vector lies along a face
    normal of one of the bodies, so checking the 8 candidate directions
    against shapely's intersection test pins the depth exactly.
    """
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 40:
        ax, ay, bx, by = rng.uniform(-2, 2, size=4)
        ah, bh = rng.uniform(-np.pi, np.pi, size=2)
        al, aw, bl, bw = rng.uniform(0.5, 3.0, size=4)
        a = OrientedRectangle(ax, ay, ah, al, aw)
        b = OrientedRectangle(bx, by, bh, bl, bw)
        d = rect_rect_signed(a, b)
        if d > -1e-3:
            continue
        depth = -d
        axes = []
        for h in (a.heading, b.heading):
            axes += [
                (np.cos(h), np.sin(h)),
                (-np.sin(h), np.cos(h)),
            ]
        pb = shapely_rect(b)

        def moved(dist, ux, uy):
            m = OrientedRectangle(a.cx + dist * ux, a.cy + dist * uy, a.heading, a.length, a.width)
            return shapely_rect(m)

        separates_at_depth = False
        for ux, uy in axes:
            for sign in (1.0, -1.0):
                # strictly less than the depth never separates
                assert moved(sign * (depth - 1e-4), ux, uy).intersects(pb)
                if not moved(sign * (depth + 1e-4), ux, uy).intersects(pb):
                    separates_at_depth = True
        assert separates_at_depth
        checked += 1


@settings(max_examples=150)
@given(
    st.lists(st.tuples(coords, coords, angles), min_size=1, max_size=6),
    coords, coords, angles, sizes, sizes,
)
def test_poses_rect_signed_matches_scalar_path(poses_list, cx, cy, ch, cl, cw):
    poses = np.array(poses_list)
    rect = OrientedRectangle(cx, cy, ch, cl, cw)
    batch = poses_rect_signed(poses, 2.0, 1.0, rect)
    for pose, d in zip(poses, batch):
        ego = OrientedRectangle(pose[0], pose[1], pose[2], 2.0, 1.0)
        assert d == pytest.approx(rect_rect_signed(ego, rect), abs=1e-12)


# -- polylines --------------------------------------------------------


def test_polyline_arclengths():
    line = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
    assert polyline_arclengths(line) == pytest.approx([0.0, 3.0, 7.0])


def test_project_to_polyline_straight_segment():
    line = np.array([[0.0, 0.0], [10.0, 0.0]])
    s, lat, dist = project_to_polyline(np.array([[2.0, 1.5], [-3.0, -2.0]]), line)
    assert s == pytest.approx([2.0, 0.0])
    # lateral is the signed distance: positive left of travel
    assert lat == pytest.approx([1.5, -np.hypot(3.0, 2.0)])
    assert dist == pytest.approx([1.5, np.hypot(3.0, 2.0)])


def test_project_to_polyline_corner_and_clamping():
    line = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]])
    # beyond the far end clamps to the last vertex
    s, _, dist = project_to_polyline(np.array([[4.0, 9.0]]), line)
    assert s == pytest.approx([8.0])
    assert dist == pytest.approx([5.0])
    # outside the corner projects onto the vertex between segments
    s, _, dist = project_to_polyline(np.array([[5.0, -1.0]]), line)
    assert s == pytest.approx([4.0])
    assert dist == pytest.approx([np.sqrt(2.0)])


@settings(max_examples=100)
@given(
    st.lists(st.tuples(coords, coords), min_size=2, max_size=8),
    coords,
    coords,
)
def test_project_to_polyline_against_dense_sampling(verts, px, py):
    line = np.array(verts)
    if np.any(np.linalg.norm(np.diff(line, axis=0), axis=1) < 1e-6):
        return  # projection is defined, but the dense oracle gets noisy
    s, lat, dist = project_to_polyline(np.array([[px, py]]), line)
    total = polyline_arclengths(line)[-1]
    assert 0.0 <= s[0] <= total + 1e-9
    assert abs(lat[0]) == pytest.approx(dist[0], abs=1e-9)
    dense = resample_polyline(line, max(total / 4000.0, 1e-6))
    oracle = np.min(np.hypot(dense[:, 0] - px, dense[:, 1] - py))
    assert dist[0] == pytest.approx(oracle, abs=max(2e-3, total * 1e-3))


def test_resample_polyline_spacing_and_endpoints():
    line = np.array([[0.0, 0.0], [10.0, 0.0]])
    out = resample_polyline(line, 0.3)
    assert out[0] == pytest.approx([0.0, 0.0])
    assert out[-1] == pytest.approx([10.0, 0.0])
    gaps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.all(gaps <= 0.3 + 1e-9)
    assert np.ptp(gaps) < 1e-9  # uniform


def test_resample_polyline_short_line_keeps_endpoints_only():
    line = np.array([[0.0, 0.0], [0.05, 0.0], [0.1, 0.0]])
    out = resample_polyline(line, 0.5)
    assert out.shape == (2, 2)
    assert out[-1] == pytest.approx([0.1, 0.0])
