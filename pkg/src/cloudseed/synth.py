"""Synthetic LIDAR-like scene generation for desk-scale training and tests.

Scenes mimic the 2.5D nature of range scans: each object contributes
points only on the box faces visible from the sensor at the origin.
Everything is a pure function of (spec, seed), so regenerated scenes are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SceneInfeasibleError
from .geometry import Box3D, bev_intersection_area
from .pointcloud import Category, Frame, GroundTruthObject, PointCloud

# Nominal object sizes (h, w, l) in meters, KITTI-like magnitudes.
NOMINAL_SIZES = {
    Category.CAR: (1.52, 1.63, 3.88),
    Category.PEDESTRIAN: (1.76, 0.66, 0.84),
    Category.CYCLIST: (1.74, 0.60, 1.76),
}

# Two car length populations so the template clustering has real structure.
CAR_LENGTH_MODES = (3.6, 4.9)

# Local-frame outward normals and in-plane axes for the six box faces.
_FACES = [
    # (normal axis, sign): +x, -x, +y, -y, +z, -z
    (0, 1.0),
    (0, -1.0),
    (1, 1.0),
    (1, -1.0),
    (2, 1.0),
    (2, -1.0),
]


@dataclass(frozen=True)
class SceneSpec:
    """Declarative description of one synthetic scene family.

    counts: objects per category. The placement region is an x/z
    rectangle on the ground plane; the sensor sits at the origin and the
    ground lies ground_y meters below it (camera frame, y down).
    """

    counts: dict[Category, int] = field(default_factory=dict)
    x_range: tuple[float, float] = (-8.0, 8.0)
    z_range: tuple[float, float] = (6.0, 20.0)
    ground_y: float = 1.7
    surface_density: float = 22.0  # object points per square meter of visible surface
    clutter_density: float = 2.0  # ground points per square meter
    size_jitter: float = 0.05  # relative sigma on nominal dimensions
    surface_noise: float = 0.003  # sigma of measurement noise in meters
    # Cuboids are symmetric under a 180 degree flip, so yaws spanning a
    # half circle or more make the heading label unidentifiable from
    # geometry (appearance(ry) == appearance(ry + pi)). The default range
    # stays clear of the +-90 degree symmetry points so appearance and
    # label are in bijection over the data support.
    yaw_range: tuple[float, float] = (-1.35, 1.35)
    # Surfaces are sampled this far inside the box so that noisy returns
    # stay within the ground truth volume, as real returns do within
    # human-drawn boxes.
    surface_inset: float = 0.012
    placement_margin: float = 0.8  # minimum BEV gap between boxes in meters
    max_retries: int = 200

    def normalized_counts(self) -> dict[Category, int]:
        return {Category(cat): int(n) for cat, n in self.counts.items()}


def _sample_dimensions(category: Category, rng: np.random.Generator, jitter: float):
    h, w, l = NOMINAL_SIZES[category]
    if category is Category.CAR:
        l = CAR_LENGTH_MODES[int(rng.integers(2))]
    scale = 1.0 + jitter * rng.standard_normal(3)
    return (
        max(h * scale[0], 0.3),
        max(w * scale[1], 0.2),
        max(l * scale[2], 0.3),
    )


def _boxes_too_close(box: Box3D, placed: list[Box3D], margin: float) -> bool:
    for other in placed:
        inflated = Box3D(
            cx=other.cx,
            cy=other.cy,
            cz=other.cz,
            h=other.h,
            w=other.w + 2 * margin,
            l=other.l + 2 * margin,
            ry=other.ry,
        )
        if bev_intersection_area(box, inflated) > 0.0:
            return True
    return False


def _place_boxes(spec: SceneSpec, rng: np.random.Generator) -> list[GroundTruthObject]:
    objects: list[GroundTruthObject] = []
    placed: list[Box3D] = []
    for category, count in sorted(spec.normalized_counts().items(), key=lambda kv: kv[0].value):
        for _ in range(count):
            for attempt in range(spec.max_retries):
                h, w, l = _sample_dimensions(category, rng, spec.size_jitter)
                cx = rng.uniform(*spec.x_range)
                cz = rng.uniform(*spec.z_range)
                ry = rng.uniform(*spec.yaw_range)
                box = Box3D(cx=cx, cy=spec.ground_y - h / 2.0, cz=cz, h=h, w=w, l=l, ry=ry)
                if not _boxes_too_close(box, placed, spec.placement_margin):
                    placed.append(box)
                    objects.append(GroundTruthObject(category=category, box=box))
                    break
            else:
                raise SceneInfeasibleError(
                    f"could not place {category.value} after {spec.max_retries} retries"
                )
    return objects


def _face_points(
    box: Box3D, axis: int, sign: float, count: int, rng: np.random.Generator, inset: float
):
    """Uniform samples on one box face (inset inward), in world coordinates."""
    half = np.array([box.l / 2.0, box.h / 2.0, box.w / 2.0])
    shrunk = np.maximum(half - inset, 0.2 * half)
    local = rng.uniform(-1.0, 1.0, size=(count, 3)) * shrunk
    local[:, axis] = sign * shrunk[axis]
    return local @ box.rotation().T + box.centroid


def sample_box_surface(
    box: Box3D, density: float, rng: np.random.Generator, noise: float, inset: float = 0.012
):
    """2.5D surface scan of a box: points on faces visible from the origin.

    A face is visible when its outward normal points back toward the
    sensor. Point counts are proportional to face area. Samples sit
    `inset` inside the true surface so measurement noise keeps them
    within the ground truth box.
    """
    rotation = box.rotation()
    half = np.array([box.l / 2.0, box.h / 2.0, box.w / 2.0])
    areas = {
        0: box.h * box.w,
        1: box.l * box.w,
        2: box.l * box.h,
    }
    points = []
    for axis, sign in _FACES:
        normal = sign * rotation[:, axis]
        face_center = box.centroid + normal * half[axis]
        if float(np.dot(normal, -face_center)) <= 0.0:
            continue  # back face, not visible from the sensor
        count = int(round(density * areas[axis]))
        if count <= 0:
            continue
        points.append(_face_points(box, axis, sign, count, rng, inset))
    if not points:
        return np.empty((0, 3))
    surface = np.vstack(points)
    if noise > 0:
        surface = surface + rng.normal(scale=noise, size=surface.shape)
    return surface


def synthetic_scene(spec: SceneSpec, seed: int) -> tuple[PointCloud, list[GroundTruthObject]]:
    """Generate one synthetic scene: camera-frame cloud plus exact boxes.

    Deterministic in (spec, seed). Object points come first (in placement
    order), ground clutter last.
    """
    rng = np.random.default_rng(seed)
    objects = _place_boxes(spec, rng)

    chunks = []
    for obj in objects:
        chunks.append(
            sample_box_surface(
                obj.box, spec.surface_density, rng, spec.surface_noise, spec.surface_inset
            )
        )

    width = spec.x_range[1] - spec.x_range[0]
    depth = spec.z_range[1] - spec.z_range[0]
    n_clutter = int(round(spec.clutter_density * width * depth))
    if n_clutter > 0:
        ground = np.column_stack(
            [
                rng.uniform(spec.x_range[0], spec.x_range[1], size=n_clutter),
                np.full(n_clutter, spec.ground_y) + rng.normal(scale=0.01, size=n_clutter),
                rng.uniform(spec.z_range[0], spec.z_range[1], size=n_clutter),
            ]
        )
        chunks.append(ground)

    points = np.vstack(chunks) if chunks else np.empty((0, 3))
    intensity = rng.uniform(0.0, 1.0, size=points.shape[0])
    cloud = PointCloud(points=points, intensity=intensity, frame=Frame.CAMERA)
    return cloud, objects
