"""Spatial preprocessing and placement.

Unprojection follows the package conventions: a pixel (u, v) with depth d mm
maps to camera-space meters

    x = (u - cx) * z / fx,   y = -(v - cy) * z / fy,   z_cam = -z,  z = d / 1000

so cameras look down -z with y up and v growing downward in the image.

Floor matching: ``match_floor`` produces the user-facing placement, which is
constrained to yaw plus translation (pitch and roll identically zero). It is
meant to be applied to capture-space points that were first rotated by
``floor_alignment_rotation`` (the minimal rotation taking the extracted floor
normal onto +y); ``floor_matched_pose`` composes the two into the full
world-from-camera transform that puts the captured floor exactly onto the
world plane y = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CameraIntrinsics,
    DepthImage,
    FloorPlane,
    Pose,
    RgbdFrame,
    quat_from_euler_yxz,
    quat_normalize,
    quat_to_euler_yxz,
    quat_to_matrix,
)
from .errors import (
    DegenerateDirection,
    InvalidRange,
    MissingFirstTransmitter,
    NoFloorFound,
)

MIN_FLOOR_INLIERS = 100
_RANSAC_MAX_POINTS = 10_000  # seeded subsample cap keeps per-frame cost flat


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 200
    inlier_distance_m: float = 0.02
    max_normal_angle_from_up_rad: float = 0.524
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.inlier_distance_m <= 0:
            raise ValueError("inlier distance must be positive")


@dataclass(frozen=True)
class CalibrationEntry:
    transmitter_id: int
    relative_pose: Pose


def remove_background(depth: DepthImage, near_mm: int, far_mm: int) -> DepthImage:
    """Zero out pixels outside [near_mm, far_mm]; already-invalid pixels stay 0."""
    if near_mm >= far_mm:
        raise InvalidRange(f"empty depth window [{near_mm}, {far_mm}]")
    data = depth.data.copy()
    data[(data < near_mm) | (data > far_mm)] = 0
    return DepthImage(data)


def unproject(depth: DepthImage, intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Camera-space points for all valid pixels: (points, rows, cols)."""
    rows, cols = np.nonzero(depth.data)
    z = depth.data[rows, cols].astype(np.float64) / 1000.0
    x = (cols - intrinsics.cx) * z / intrinsics.fx
    y = -(rows - intrinsics.cy) * z / intrinsics.fy
    return np.column_stack((x, y, -z)), rows, cols


def project(points: np.ndarray, intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel coordinates (u, v) and depth meters for camera-space points with z < 0."""
    z = -points[:, 2]
    u = intrinsics.cx + intrinsics.fx * points[:, 0] / z
    v = intrinsics.cy - intrinsics.fy * points[:, 1] / z
    return u, v, z


def register_depth_to_color(frame: RgbdFrame) -> DepthImage:
    """Re-express depth in the color camera's geometry, at depth resolution.

    Valid pixels unproject through the depth intrinsics, move through the
    depth-to-color pose, and project through the color intrinsics scaled to
    the depth grid. Collisions keep the nearest depth; unmapped cells are 0.
    """
    depth = frame.depth
    target = frame.color_intrinsics.scaled(depth.width, depth.height)
    points, _, _ = unproject(depth, frame.depth_intrinsics)
    if len(points) == 0:
        return DepthImage.zeros(depth.width, depth.height)
    moved = frame.depth_to_color.apply(points)
    in_front = moved[:, 2] < 0
    moved = moved[in_front]
    u, v, z = project(moved, target)
    cols = np.round(u).astype(np.int64)
    rows = np.round(v).astype(np.int64)
    depth_mm = np.round(z * 1000.0).astype(np.int64)
    keep = (
        (cols >= 0)
        & (cols < depth.width)
        & (rows >= 0)
        & (rows < depth.height)
        & (depth_mm >= 1)
        & (depth_mm <= 0xFFFF)
    )
    grid = np.full(depth.data.shape, 1 << 30, dtype=np.int64)
    np.minimum.at(grid, (rows[keep], cols[keep]), depth_mm[keep])
    grid[grid == 1 << 30] = 0
    return DepthImage(grid.astype(np.uint16))


def _fit_plane_least_squares(points: np.ndarray) -> tuple[np.ndarray, float]:
    centroid = points.mean(axis=0)
    centered = points - centroid
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    normal = vt[-1]
    if normal[1] < 0:
        normal = -normal
    normal = normal / np.linalg.norm(normal)
    return normal, float(normal @ centroid)


def extract_floor(depth: DepthImage, intrinsics: CameraIntrinsics, params: RansacParams) -> FloorPlane:
    """Plane search over unprojected depth: seeded 3-point sampling, an
    up-vector gate on candidate normals, then least-squares refinement over
    the winning consensus set. Deterministic for a fixed (input, seed)."""
    points, _, _ = unproject(depth, intrinsics)
    rng = np.random.default_rng(params.seed)
    if len(points) > _RANSAC_MAX_POINTS:
        points = points[rng.choice(len(points), _RANSAC_MAX_POINTS, replace=False)]
    if len(points) < 3:
        raise NoFloorFound(f"only {len(points)} valid depth pixels")

    # all candidate planes at once: sample triples, fit, gate, count inliers
    idx = rng.integers(0, len(points), size=(params.iterations, 3))
    a, b, c = points[idx[:, 0]], points[idx[:, 1]], points[idx[:, 2]]
    normals = np.cross(b - a, c - a)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    normals[ok] /= norms[ok, None]
    normals[normals[:, 1] < 0] *= -1
    ok &= normals[:, 1] >= math.cos(params.max_normal_angle_from_up_rad)
    if not ok.any():
        raise NoFloorFound("no candidate plane within the up-normal gate")
    candidates = np.flatnonzero(ok)
    distances = np.einsum("ij,ij->i", normals[candidates], a[candidates])
    residuals = np.abs(points @ normals[candidates].T - distances[None, :])
    counts = (residuals <= params.inlier_distance_m).sum(axis=0)
    best = int(np.argmax(counts))  # first maximum wins: deterministic
    best_count = int(counts[best])
    if best_count < MIN_FLOOR_INLIERS:
        raise NoFloorFound(f"best candidate had {best_count} inliers, need {MIN_FLOOR_INLIERS}")
    best_normal = normals[candidates[best]]
    best_distance = float(distances[best])
    inliers = points[np.abs(points @ best_normal - best_distance) <= params.inlier_distance_m]
    normal, distance = _fit_plane_least_squares(inliers)
    return FloorPlane(normal, distance)


def floor_alignment_rotation(plane: FloorPlane) -> Pose:
    """Minimal rotation taking the floor normal onto +y (no yaw component).

    Applied to capture-space points it levels the floor: aligned points
    satisfy y = plane.distance everywhere on the floor.
    """
    n = plane.normal
    up = np.array([0.0, 1.0, 0.0])
    dot = float(np.clip(n @ up, -1.0, 1.0))
    if dot >= 1.0 - 1e-15:
        return Pose.identity()
    axis = np.cross(n, up)
    w = math.sqrt((1.0 + dot) / 2.0)
    xyz = axis / (2.0 * w)
    return Pose(quat_normalize(np.concatenate(([w], xyz))), np.zeros(3))


def match_floor(transmitter_floor: FloorPlane, current_placement: Pose) -> Pose:
    """Placement constrained to the shared ground plane: yaw preserved
    exactly, pitch and roll zeroed, y chosen so the (aligned) floor lands on
    world y = 0; horizontal translation passes through."""
    yaw, _, _ = quat_to_euler_yxz(current_placement.rotation)
    rotation = quat_from_euler_yxz(yaw, 0.0, 0.0)
    tx, _, tz = current_placement.translation
    return Pose(rotation, np.array([tx, -transmitter_floor.distance, tz]))


def floor_matched_pose(transmitter_floor: FloorPlane, current_placement: Pose) -> Pose:
    """Full world-from-camera transform: floor alignment, then the matched
    placement. Maps every point on the captured floor to world y = 0."""
    return match_floor(transmitter_floor, current_placement).compose(
        floor_alignment_rotation(transmitter_floor)
    )


def set_interlocutor_distance(placement: Pose, distance_m: float) -> Pose:
    """Slide the anchor along the horizontal viewer-to-anchor line so the
    horizontal separation equals distance_m; height and rotation unchanged."""
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    x, y, z = placement.translation
    horizontal = math.hypot(x, z)
    if horizontal < 1e-9:
        raise DegenerateDirection("anchor is horizontally coincident with the viewer")
    scale = distance_m / horizontal
    return Pose(placement.rotation, np.array([x * scale, y, z * scale]))


def compose_calibration(entries: list[CalibrationEntry], first_placement: Pose) -> list[Pose]:
    """World pose per transmitter: first_placement composed with each
    relative pose. The first entry must be the reference (identity)."""
    if not entries or not entries[0].relative_pose.is_identity(tol=1e-9):
        raise MissingFirstTransmitter("calibration must start with an identity-pose entry")
    return [first_placement.compose(entry.relative_pose) for entry in entries]


def save_calibration(entries: list[CalibrationEntry], path: Path | str) -> None:
    lines = ["# transmitter calibration: id qw qx qy qz tx ty tz"]
    for entry in entries:
        q = entry.relative_pose.rotation
        t = entry.relative_pose.translation
        fields = [str(entry.transmitter_id)] + [repr(float(v)) for v in (*q, *t)]
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


def load_calibration(path: Path | str) -> list[CalibrationEntry]:
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"calibration line needs 8 fields: {line!r}")
        values = [float(p) for p in parts[1:]]
        entries.append(
            CalibrationEntry(
                int(parts[0]),
                Pose(quat_normalize(np.array(values[:4])), np.array(values[4:])),
            )
        )
    return entries
