"""Planar geometry for oriented rectangles and polylines.

Everything here is plain numpy so the same routines serve both the scalar
world queries and the batched rollout kernels.  Angles are radians, wrapped
to (-pi, pi].  Signed distances are negative inside / while penetrating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    wrapped = np.mod(theta, TWO_PI)
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(wrapped - TWO_PI if wrapped > np.pi else wrapped)
    wrapped = np.asarray(wrapped)
    wrapped[wrapped > np.pi] -= TWO_PI
    return wrapped


@dataclass
class OrientedRectangle:
    """Rectangle given by center, heading and body dimensions."""

    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        """Return the 4 corners, (4, 2), counter-clockwise from front-left."""
        return rect_corners(
            np.array([[self.cx, self.cy, self.heading]]), self.length, self.width
        )[0]

    def contains_point(self, x: float, y: float) -> bool:
        return bool(
            point_rect_signed(np.array([[x, y]]), self)[0] <= 0.0
        )


def rect_corners(poses: np.ndarray, length: float, width: float) -> np.ndarray:
    """Corners of rectangles centered at each pose.

    Args:
        poses: (N, 3) array of [cx, cy, heading].
        length: extent along the heading axis.
        width: extent across it.

    Returns:
        (N, 4, 2) corner coordinates, counter-clockwise starting front-left.
    """
    poses = np.atleast_2d(poses)
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    hl, hw = 0.5 * length, 0.5 * width
    # body-frame offsets: front-left, rear-left, rear-right, front-right
    bx = np.array([hl, -hl, -hl, hl])
    by = np.array([hw, hw, -hw, -hw])
    cx = poses[:, 0, None] + bx[None, :] * c[:, None] - by[None, :] * s[:, None]
    cy = poses[:, 1, None] + bx[None, :] * s[:, None] + by[None, :] * c[:, None]
    return np.stack([cx, cy], axis=-1)


def point_rect_signed(points: np.ndarray, rect: OrientedRectangle) -> np.ndarray:
    """Signed distance from points (N, 2) to an oriented rectangle.

    Positive outside, zero on the boundary, negative inside.
    """
    points = np.atleast_2d(points)
    c, s = np.cos(rect.heading), np.sin(rect.heading)
    dx = points[:, 0] - rect.cx
    dy = points[:, 1] - rect.cy
    # coordinates in the rectangle frame
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    qx = np.abs(lx) - 0.5 * rect.length
    qy = np.abs(ly) - 0.5 * rect.width
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return outside + inside


def _points_rect_signed_local(px, py, half_len, half_wid):
    # signed point-box distance with the box already axis-aligned at origin
    qx = np.abs(px) - half_len
    qy = np.abs(py) - half_wid
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return outside + inside


def poses_rect_signed(
    poses: np.ndarray, length: float, width: float, rect: OrientedRectangle
) -> np.ndarray:
    """Exact signed distance between a body rectangle at each pose and ``rect``.

    For disjoint rectangles the closest pair of features always involves a
    corner, so the minimum over the 8 corner-to-rectangle distances is exact.
    For overlapping rectangles the value is minus the smallest translation
    that separates them (minimum overlap over the 4 face normals).

    Args:
        poses: (N, 3) array of [cx, cy, heading] for the moving body.
        length: body extent along heading.
        width: body extent across heading.
        rect: the fixed rectangle.

    Returns:
        (N,) signed distances.
    """
    poses = np.atleast_2d(poses)
    n = poses.shape[0]
    ego_c = rect_corners(poses, length, width)  # (N, 4, 2)

    cb, sb = np.cos(rect.heading), np.sin(rect.heading)
    bhl, bhw = 0.5 * rect.length, 0.5 * rect.width

    # ego corners in the fixed rectangle's frame
    dx = ego_c[..., 0] - rect.cx
    dy = ego_c[..., 1] - rect.cy
    lx = dx * cb + dy * sb
    ly = -dx * sb + dy * cb
    d_ego = _points_rect_signed_local(lx, ly, bhl, bhw).min(axis=1)

    # fixed corners in each ego frame
    fixed = rect.corners()  # (4, 2)
    ca, sa = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    fx = fixed[None, :, 0] - poses[:, 0, None]
    fy = fixed[None, :, 1] - poses[:, 1, None]
    gx = fx * ca[:, None] + fy * sa[:, None]
    gy = -fx * sa[:, None] + fy * ca[:, None]
    d_fix = _points_rect_signed_local(gx, gy, 0.5 * length, 0.5 * width).min(axis=1)

    sep = np.maximum(np.minimum(d_ego, d_fix), 0.0)

    # separating-axis pass for the penetration depth
    dcx = rect.cx - poses[:, 0]
    dcy = rect.cy - poses[:, 1]
    ahl, ahw = 0.5 * length, 0.5 * width
    overlap = np.empty((n, 4))
    # ego long axis, ego lateral axis, rect long axis, rect lateral axis
    axes_c = (ca, -sa, np.full(n, cb), np.full(n, -sb))
    axes_s = (sa, ca, np.full(n, sb), np.full(n, cb))
    for i, (axc, axs) in enumerate(zip(axes_c, axes_s)):
        proj_a = ahl * np.abs(axc * ca + axs * sa) + ahw * np.abs(-axc * sa + axs * ca)
        proj_b = bhl * np.abs(axc * cb + axs * sb) + bhw * np.abs(-axc * sb + axs * cb)
        overlap[:, i] = proj_a + proj_b - np.abs(dcx * axc + dcy * axs)
    intersecting = np.all(overlap > 0.0, axis=1)
    return np.where(intersecting, -overlap.min(axis=1), sep)


def rect_rect_signed(a: OrientedRectangle, b: OrientedRectangle) -> float:
    """Exact signed distance between two oriented rectangles."""
    pose = np.array([[a.cx, a.cy, a.heading]])
    return float(poses_rect_signed(pose, a.length, a.width, b)[0])


def polyline_arclengths(points: np.ndarray) -> np.ndarray:
    """Cumulative arclength at each vertex of a polyline, starting at 0."""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def project_to_polyline(points: np.ndarray, line: np.ndarray):
    """Project points onto a polyline.

    Args:
        points: (N, 2) query points.
        line: (M, 2) polyline vertices, M >= 2.

    Returns:
        Tuple of (s, lateral, distance), each (N,): arclength of the closest
        point, signed lateral offset (positive to the left of travel), and
        the unsigned distance.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    line = np.asarray(line, dtype=float)
    if line.shape[0] == 2:
        return _project_to_segment(points, line[0], line[1])
    a = line[:-1]  # (M-1, 2)
    d = line[1:] - a
    seg_len2 = np.maximum((d * d).sum(axis=1), 1e-12)
    rel = points[:, None, :] - a[None, :, :]  # (N, M-1, 2)
    t = np.clip((rel * d[None]).sum(axis=2) / seg_len2[None], 0.0, 1.0)
    foot = a[None] + t[..., None] * d[None]
    diff = points[:, None, :] - foot
    dist2 = (diff * diff).sum(axis=2)
    best = dist2.argmin(axis=1)
    idx = np.arange(points.shape[0])
    s0 = polyline_arclengths(line)[:-1]
    seg_len = np.sqrt(seg_len2)
    s = s0[best] + t[idx, best] * seg_len[best]
    # sign of the cross product tangent x offset gives the side
    tang = d[best]
    off = diff[idx, best]
    cross = tang[:, 0] * off[:, 1] - tang[:, 1] * off[:, 0]
    dist = np.sqrt(dist2[idx, best])
    lateral = np.where(cross >= 0.0, dist, -dist)
    return s, lateral, dist


def _project_to_segment(points: np.ndarray, a: np.ndarray, b: np.ndarray):
    # single-segment case of project_to_polyline, without the (N, M-1)
    # intermediates; this is the hot path for straight lane centerlines
    dx, dy = b[0] - a[0], b[1] - a[1]
    len2 = max(dx * dx + dy * dy, 1e-12)
    relx = points[:, 0] - a[0]
    rely = points[:, 1] - a[1]
    t = np.clip((relx * dx + rely * dy) / len2, 0.0, 1.0)
    offx = relx - t * dx
    offy = rely - t * dy
    dist = np.hypot(offx, offy)
    s = t * len2**0.5
    cross = dx * offy - dy * offx
    lateral = np.where(cross >= 0.0, dist, -dist)
    return s, lateral, dist


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Resample a polyline at (close to) uniform arclength spacing.

    The first and last vertices are preserved; interior spacing is the
    largest value <= step that divides each original run evenly.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[0] < 2:
        return points.copy()
    s = polyline_arclengths(points)
    total = s[-1]
    if total <= step:
        return points[[0, -1]].copy()
    n = int(np.ceil(total / step)) + 1
    targets = np.linspace(0.0, total, n)
    x = np.interp(targets, s, points[:, 0])
    y = np.interp(targets, s, points[:, 1])
    return np.stack([x, y], axis=1)
