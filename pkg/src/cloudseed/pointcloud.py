"""Point cloud ingestion and geometry-frame plumbing.

Handles KITTI velodyne binaries, label and calib text files, the
lidar-to-camera transform, click-centered volume extraction, and the
"CSPC" binary scene container with its JSON ground truth sidecar.

All downstream geometry runs in the KITTI camera frame (x right, y down,
z forward); lidar clouds are transformed on ingest.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    CalibrationError,
    EmptyPatchError,
    FrameMismatchError,
    MalformedFileError,
)
from .geometry import Box3D

POINT_RECORD_BYTES = 16  # four little-endian float32: x, y, z, reflectance

CSPC_MAGIC = b"CSPC"
CSPC_VERSION = 1


class Frame(str, Enum):
    LIDAR = "lidar"
    CAMERA = "camera"


class Category(str, Enum):
    CAR = "car"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"


# KITTI label type strings that map to evaluated categories; everything
# else (Van, Truck, DontCare, ...) is skipped on parse.
KITTI_TYPE_TO_CATEGORY = {
    "Car": Category.CAR,
    "Pedestrian": Category.PEDESTRIAN,
    "Cyclist": Category.CYCLIST,
}


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def as_point(value) -> np.ndarray:
    """Coerce a Point3, tuple, or array-like into a finite (3,) float array."""
    p = np.asarray(value, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point must be finite, got {p}")
    return p


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points with optional intensity and a frame tag."""

    points: np.ndarray
    intensity: Optional[np.ndarray] = None
    frame: Frame = Frame.LIDAR

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError(
                    f"intensity length {inten.shape[0]} != point count {pts.shape[0]}"
                )
            object.__setattr__(self, "intensity", inten)
        if not isinstance(self.frame, Frame):
            object.__setattr__(self, "frame", Frame(self.frame))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        return self.points


@dataclass(frozen=True)
class Calibration:
    """KITTI sensor calibration: velodyne-to-camera and rectification."""

    tr_velo_to_cam: np.ndarray  # 3x4
    r0_rect: np.ndarray  # 3x3
    p2: Optional[np.ndarray] = None  # 3x4

    def __post_init__(self):
        tr = np.asarray(self.tr_velo_to_cam, dtype=float).reshape(3, 4)
        r0 = np.asarray(self.r0_rect, dtype=float).reshape(3, 3)
        if not (np.all(np.isfinite(tr)) and np.all(np.isfinite(r0))):
            raise CalibrationError("calibration matrices must be finite")
        if not np.allclose(r0 @ r0.T, np.eye(3), atol=1e-3):
            raise CalibrationError("R0_rect is not close to orthonormal")
        object.__setattr__(self, "tr_velo_to_cam", tr)
        object.__setattr__(self, "r0_rect", r0)
        if self.p2 is not None:
            object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(3, 4))


@dataclass(frozen=True)
class GroundTruthObject:
    """A labeled object: evaluated category plus camera-frame box."""

    category: Category
    box: Box3D

    def __post_init__(self):
        if not isinstance(self.category, Category):
            object.__setattr__(self, "category", Category(self.category))


@dataclass(frozen=True)
class CenteredPatch:
    """Points of a click-centered cube volume, re-centered at the click.

    source_indices map each patch point back to the parent cloud. k is
    the cube edge length in meters.
    """

    points: np.ndarray
    source_indices: np.ndarray
    click: np.ndarray
    k: float

    def __len__(self) -> int:
        return self.points.shape[0]


def parse_velodyne_bin(raw: bytes) -> PointCloud:
    """Decode a KITTI velodyne binary payload into a lidar-frame cloud.

    Each point is four consecutive little-endian float32 values
    (x, y, z, reflectance).
    """
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise MalformedFileError(
            f"velodyne payload length {len(raw)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    if not np.all(np.isfinite(data)):
        raise MalformedFileError("velodyne payload contains non-finite values")
    return PointCloud(
        points=data[:, :3].astype(np.float64),
        intensity=data[:, 3].astype(np.float64),
        frame=Frame.LIDAR,
    )


def encode_velodyne_bin(cloud: PointCloud) -> bytes:
    """Inverse of parse_velodyne_bin; intensity defaults to zero."""
    n = len(cloud)
    data = np.zeros((n, 4), dtype="<f4")
    data[:, :3] = cloud.points
    if cloud.intensity is not None:
        data[:, 3] = cloud.intensity
    return data.tobytes()


def parse_kitti_labels(text: str) -> list[GroundTruthObject]:
    """Parse a KITTI label file into the evaluated ground truth objects.

    Keeps Car, Pedestrian, and Cyclist lines in file order; other types
    are skipped. The label's h w l x y z ry fields map directly onto the
    camera-frame Box3D.
    """
    objects: list[GroundTruthObject] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) < 15:
            raise MalformedFileError(
                f"label line {lineno}: expected >= 15 fields, got {len(fields)}"
            )
        category = KITTI_TYPE_TO_CATEGORY.get(fields[0])
        if category is None:
            continue
        try:
            h, w, l = (float(v) for v in fields[8:11])
            x, y, z = (float(v) for v in fields[11:14])
            ry = float(fields[14])
        except ValueError as exc:
            raise MalformedFileError(f"label line {lineno}: bad numeric field: {exc}") from exc
        objects.append(
            GroundTruthObject(category=category, box=Box3D(cx=x, cy=y, cz=z, h=h, w=w, l=l, ry=ry))
        )
    return objects


def _calib_values(entries: dict[str, list[float]], key: str, count: int) -> np.ndarray:
    if key not in entries:
        raise CalibrationError(f"calibration incomplete: missing key {key!r}")
    values = entries[key]
    if len(values) != count:
        raise CalibrationError(f"key {key!r}: expected {count} values, got {len(values)}")
    return np.array(values, dtype=float)


def parse_kitti_calib(text: str) -> Calibration:
    """Parse a KITTI calib file with Tr_velo_to_cam, R0_rect, optional P2."""
    entries: dict[str, list[float]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, _, rest = line.partition(":")
        try:
            entries[key.strip()] = [float(v) for v in rest.split()]
        except ValueError as exc:
            raise CalibrationError(f"calib line {lineno}: bad numeric field: {exc}") from exc
    tr = _calib_values(entries, "Tr_velo_to_cam", 12).reshape(3, 4)
    r0 = _calib_values(entries, "R0_rect", 9).reshape(3, 3)
    p2 = _calib_values(entries, "P2", 12).reshape(3, 4) if "P2" in entries else None
    return Calibration(tr_velo_to_cam=tr, r0_rect=r0, p2=p2)


def to_camera_frame(cloud: PointCloud, calib: Calibration) -> PointCloud:
    """Transform a lidar cloud into the rectified camera frame.

    Each point p becomes r0_rect @ (tr_velo_to_cam @ [p; 1]). Intensity
    carries over unchanged.
    """
    if cloud.frame is not Frame.LIDAR:
        raise FrameMismatchError(f"expected lidar-frame cloud, got {cloud.frame.value}")
    rotation = calib.r0_rect @ calib.tr_velo_to_cam[:, :3]
    translation = calib.r0_rect @ calib.tr_velo_to_cam[:, 3]
    transformed = cloud.points @ rotation.T + translation
    return PointCloud(points=transformed, intensity=cloud.intensity, frame=Frame.CAMERA)


def crop_volume(cloud: PointCloud, click, k: float) -> CenteredPatch:
    """Extract the points of the k x k x k cube centered at a click.

    The cube is closed: points exactly on the boundary are included.
    Patch points are re-centered by subtracting the click coordinate.
    """
    if k <= 0:
        raise ValueError(f"volume edge length must be positive, got {k}")
    if cloud.frame is not Frame.CAMERA:
        raise FrameMismatchError("crop_volume expects a camera-frame cloud")
    center = as_point(click)
    offsets = cloud.points - center
    inside = np.all(np.abs(offsets) <= k / 2.0, axis=1)
    indices = np.flatnonzero(inside)
    if indices.size == 0:
        raise EmptyPatchError(f"no points within {k} m volume at click {center.tolist()}")
    return CenteredPatch(points=offsets[indices], source_indices=indices, click=center, k=float(k))


# ---------------------------------------------------------------------------
# CSPC binary scene container + ground truth sidecar
# ---------------------------------------------------------------------------

_FRAME_CODES = {Frame.LIDAR: 0, Frame.CAMERA: 1}
_CODE_FRAMES = {v: k for k, v in _FRAME_CODES.items()}


def encode_cspc(cloud: PointCloud) -> bytes:
    """Serialize a cloud to the CSPC container.

    Layout: magic "CSPC", version byte, frame byte, flags byte (bit 0 set
    when intensity is present), uint32 LE point count, then float32 LE
    records of x, y, z and optionally intensity.
    """
    has_intensity = cloud.intensity is not None
    header = CSPC_MAGIC + struct.pack(
        "<BBBI", CSPC_VERSION, _FRAME_CODES[cloud.frame], 1 if has_intensity else 0, len(cloud)
    )
    width = 4 if has_intensity else 3
    records = np.empty((len(cloud), width), dtype="<f4")
    records[:, :3] = cloud.points
    if has_intensity:
        records[:, 3] = cloud.intensity
    return header + records.tobytes()


def decode_cspc(raw: bytes) -> PointCloud:
    """Parse a CSPC container payload back into a PointCloud."""
    header_size = len(CSPC_MAGIC) + struct.calcsize("<BBBI")
    if len(raw) < header_size or raw[:4] != CSPC_MAGIC:
        raise MalformedFileError("not a CSPC container (bad magic or truncated header)")
    version, frame_code, flags, count = struct.unpack("<BBBI", raw[4:header_size])
    if version != CSPC_VERSION:
        raise MalformedFileError(f"unsupported CSPC version {version}")
    if frame_code not in _CODE_FRAMES:
        raise MalformedFileError(f"unknown frame code {frame_code}")
    has_intensity = bool(flags & 1)
    width = 4 if has_intensity else 3
    expected = header_size + count * width * 4
    if len(raw) != expected:
        raise MalformedFileError(f"CSPC payload length {len(raw)} != expected {expected}")
    records = np.frombuffer(raw, dtype="<f4", offset=header_size).reshape(count, width)
    return PointCloud(
        points=records[:, :3].astype(np.float64),
        intensity=records[:, 3].astype(np.float64) if has_intensity else None,
        frame=_CODE_FRAMES[frame_code],
    )


def save_scene(path, cloud: PointCloud, objects: Sequence[GroundTruthObject] = ()) -> None:
    """Write a CSPC file plus a .json ground truth sidecar next to it."""
    path = Path(path)
    path.write_bytes(encode_cspc(cloud))
    sidecar = [
        {
            "category": o.category.value,
            "box": {
                "cx": o.box.cx,
                "cy": o.box.cy,
                "cz": o.box.cz,
                "h": o.box.h,
                "w": o.box.w,
                "l": o.box.l,
                "ry": o.box.ry,
            },
        }
        for o in objects
    ]
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_scene(path) -> tuple[PointCloud, list[GroundTruthObject]]:
    """Read a CSPC file and its sidecar; missing sidecar means no objects."""
    path = Path(path)
    cloud = decode_cspc(path.read_bytes())
    sidecar = path.with_suffix(".json")
    objects: list[GroundTruthObject] = []
    if sidecar.exists():
        for entry in json.loads(sidecar.read_text()):
            box = Box3D(**entry["box"])
            objects.append(GroundTruthObject(category=Category(entry["category"]), box=box))
    return cloud, objects
