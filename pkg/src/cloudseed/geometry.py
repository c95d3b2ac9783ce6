"""Oriented 3D box math.

Boxes live in the camera frame (x right, y down, z forward) and rotate
about the vertical y axis. Bird's eye view (BEV) computations happen in
the x-z plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# BEV intersection polygons below this area are treated as empty.
DEGENERATE_AREA = 1e-12


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    return angle - TWO_PI * math.ceil((angle - math.pi) / TWO_PI)


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: centroid, extents, and yaw about the y axis.

    h is the extent along y, w along the local z axis, l along the local
    x axis. ry is normalized to (-pi, pi] on construction.
    """

    cx: float
    cy: float
    cz: float
    h: float
    w: float
    l: float
    ry: float = 0.0

    def __post_init__(self):
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise ValueError(f"box dimensions must be positive, got h={self.h} w={self.w} l={self.l}")
        values = (self.cx, self.cy, self.cz, self.h, self.w, self.l, self.ry)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"box fields must be finite, got {values}")
        object.__setattr__(self, "ry", wrap_angle(self.ry))

    @property
    def centroid(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz], dtype=float)

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    def rotation(self) -> np.ndarray:
        """3x3 rotation about y taking box-local coordinates to world."""
        c, s = math.cos(self.ry), math.sin(self.ry)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def box_corners(box: Box3D) -> np.ndarray:
    """Return the 8 corners of a box, shape (8, 3).

    Order: bottom face (larger y, since y points down) counter-clockwise
    in the x-z plane starting at local (+l/2, +w/2), then the top face in
    the same x-z order.
    """
    dx, dy, dz = box.l / 2.0, box.h / 2.0, box.w / 2.0
    local = np.array(
        [
            [dx, dy, dz],
            [-dx, dy, dz],
            [-dx, dy, -dz],
            [dx, dy, -dz],
            [dx, -dy, dz],
            [-dx, -dy, dz],
            [-dx, -dy, -dz],
            [dx, -dy, -dz],
        ]
    )
    return local @ box.rotation().T + box.centroid


def _as_points(cloud) -> np.ndarray:
    """Accept a PointCloud-like object (with .xyz) or an (n, 3) array."""
    pts = getattr(cloud, "xyz", cloud)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {pts.shape}")
    return pts


def points_in_box(cloud, box: Box3D) -> np.ndarray:
    """Indices of points inside the box, boundary inclusive.

    A point is inside when its box-local coordinates (u, v, s) after the
    inverse yaw rotation satisfy |u| <= l/2, |v| <= h/2, |s| <= w/2.
    Returns a sorted int array usable both as an index set and for numpy
    fancy indexing.
    """
    pts = _as_points(cloud)
    if pts.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    local = (pts - box.centroid) @ box.rotation()
    inside = (
        (np.abs(local[:, 0]) <= box.l / 2.0)
        & (np.abs(local[:, 1]) <= box.h / 2.0)
        & (np.abs(local[:, 2]) <= box.w / 2.0)
    )
    return np.flatnonzero(inside)


def bev_rectangle(box: Box3D) -> np.ndarray:
    """Corners of the box footprint in the x-z plane, CCW, shape (4, 2)."""
    corners = box_corners(box)
    return corners[:4, [0, 2]]


def polygon_area(polygon: np.ndarray) -> float:
    """Absolute shoelace area of a 2D polygon given as (n, 2) vertices."""
    if len(polygon) < 3:
        return 0.0
    x = polygon[:, 0]
    y = polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_convex_polygons(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of one convex CCW polygon by another.

    Returns the intersection polygon vertices, possibly empty. Points on
    a clip edge count as inside, which keeps touching boxes consistent
    with the boundary-inclusive containment rule.
    """
    output = [tuple(p) for p in subject]
    clip_pts = [tuple(p) for p in clip]
    for i in range(len(clip_pts)):
        if not output:
            break
        a = clip_pts[i]
        b = clip_pts[(i + 1) % len(clip_pts)]
        edge = (b[0] - a[0], b[1] - a[1])

        def inside(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0

        def intersect(p, q):
            # Line a-b crossed with segment p-q.
            dp = (q[0] - p[0], q[1] - p[1])
            denom = edge[0] * dp[1] - edge[1] * dp[0]
            t = (edge[0] * (a[1] - p[1]) - edge[1] * (a[0] - p[0])) / denom
            return (p[0] + t * dp[0], p[1] + t * dp[1])

        current = output
        output = []
        s = current[-1]
        for e in current:
            if inside(e):
                if not inside(s):
                    output.append(intersect(s, e))
                output.append(e)
            elif inside(s):
                output.append(intersect(s, e))
            s = e
    return np.array(output) if output else np.empty((0, 2))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    """Area of the BEV footprint intersection of two boxes."""
    poly = clip_convex_polygons(bev_rectangle(a), bev_rectangle(b))
    area = polygon_area(poly)
    return area if area >= DEGENERATE_AREA else 0.0


def box_iou_3d(a: Box3D, b: Box3D) -> float:
    """3D IoU of two yaw-rotated boxes.

    Decomposes into BEV polygon intersection area times vertical interval
    overlap, exact for convex rectangles.
    """
    area = bev_intersection_area(a, b)
    if area == 0.0:
        return 0.0
    y_overlap = min(a.cy + a.h / 2.0, b.cy + b.h / 2.0) - max(a.cy - a.h / 2.0, b.cy - b.h / 2.0)
    if y_overlap <= 0.0:
        return 0.0
    inter = area * y_overlap
    union = a.volume + b.volume - inter
    return float(min(max(inter / union, 0.0), 1.0))


def instance_iou(pred, gt) -> float:
    """Instance-level IoU between two index sets: |pred & gt| / |pred | gt|.

    Both sets empty counts as a perfect match (1.0).
    """
    pred_set = set(int(i) for i in pred)
    gt_set = set(int(i) for i in gt)
    union = pred_set | gt_set
    if not union:
        return 1.0
    return len(pred_set & gt_set) / len(union)


def centroid_distance(a: Box3D, b: Box3D) -> float:
    """Euclidean distance between two box centroids in meters."""
    return float(np.linalg.norm(a.centroid - b.centroid))
