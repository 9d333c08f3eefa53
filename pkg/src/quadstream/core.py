"""Shared value types for the streaming pipeline.

Conventions, fixed package-wide:
  - World and camera frames are right-handed and y-up; cameras look down -z.
  - Depth is 16-bit unsigned millimeters; 0 marks an invalid pixel.
  - Pixel centers sit at integer coordinates; (cx, cy) is in those units.
  - Euler angles use the intrinsic Y-X-Z (yaw, pitch, roll) order.

All types are immutable value data and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidIntrinsics


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Row-major 16-bit depth map in millimeters; 0 = no measurement."""

    data: np.ndarray  # (height, width) uint16

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"depth image must be 2-D and non-empty, got shape {arr.shape}")
        if arr.dtype != np.uint16:
            raise DimensionMismatch(f"depth image must be uint16, got {arr.dtype}")
        object.__setattr__(self, "data", _as_readonly(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, flat) -> "DepthImage":
        flat = np.asarray(flat, dtype=np.uint16)
        if width < 1 or height < 1 or flat.size != width * height:
            raise DimensionMismatch(
                f"depth data length {flat.size} does not fill {width}x{height}"
            )
        return cls(flat.reshape(height, width))

    @classmethod
    def zeros(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width), dtype=np.uint16))


@dataclass(frozen=True, eq=False)
class ColorImage:
    """Row-major 8-bit RGB image."""

    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionMismatch(f"color image must be (h, w, 3), got shape {arr.shape}")
        if arr.dtype != np.uint8:
            raise DimensionMismatch(f"color image must be uint8, got {arr.dtype}")
        object.__setattr__(self, "data", _as_readonly(arr))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, flat) -> "ColorImage":
        flat = np.asarray(flat, dtype=np.uint8)
        if width < 1 or height < 1 or flat.size != 3 * width * height:
            raise DimensionMismatch(
                f"color data length {flat.size} does not fill {width}x{height}x3"
            )
        return cls(flat.reshape(height, width, 3))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths and principal point in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidIntrinsics(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise InvalidIntrinsics(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}"
            )

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Same field of view re-expressed at a different pixel grid."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)


# --- quaternion helpers (w, x, y, z) ---

_UNIT_TOL = 1e-9


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / math.sqrt(float(q @ q))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return np.concatenate(([math.cos(h)], math.sin(h) * axis))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_from_euler_yxz(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Compose a rotation as yaw about +y, then pitch about +x, then roll about +z."""
    qy = np.array([math.cos(yaw / 2), 0.0, math.sin(yaw / 2), 0.0])
    qx = np.array([math.cos(pitch / 2), math.sin(pitch / 2), 0.0, 0.0])
    qz = np.array([math.cos(roll / 2), 0.0, 0.0, math.sin(roll / 2)])
    return quat_multiply(quat_multiply(qy, qx), qz)


def quat_to_euler_yxz(q) -> tuple[float, float, float]:
    """Decompose a unit quaternion into (yaw, pitch, roll), Y-X-Z order.

    Gimbal configurations (|pitch| = pi/2) are resolved by fixing roll = 0.
    """
    w, x, y, z = q
    sin_pitch = 2.0 * (w * x - y * z)
    if sin_pitch >= 1.0 - 1e-12:
        # pitch = +pi/2: only yaw - roll is observable; put it all into yaw
        return math.atan2(2.0 * (x * y - w * z), 1.0 - 2.0 * (y * y + z * z)), math.pi / 2, 0.0
    if sin_pitch <= -1.0 + 1e-12:
        return math.atan2(2.0 * (w * z - x * y), 1.0 - 2.0 * (y * y + z * z)), -math.pi / 2, 0.0
    yaw = math.atan2(2.0 * (x * z + w * y), 1.0 - 2.0 * (x * x + y * y))
    pitch = math.asin(sin_pitch)
    roll = math.atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z))
    return yaw, pitch, roll


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: rotation (unit quaternion w,x,y,z) then translation, meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=float)
        trans = np.asarray(self.translation, dtype=float)
        if rot.shape != (4,) or trans.shape != (3,):
            raise ValueError(f"pose needs a 4-quaternion and 3-translation, got {rot.shape}, {trans.shape}")
        norm = math.sqrt(float(rot @ rot))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"quaternion norm {norm} not unit within {_UNIT_TOL}")
        object.__setattr__(self, "rotation", _as_readonly(rot))
        object.__setattr__(self, "translation", _as_readonly(trans))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(quat_identity(), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.rotation)
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self o other)(p) = self(other(p))."""
        rot = quat_normalize(quat_multiply(self.rotation, other.rotation))
        trans = quat_rotate(self.rotation, other.translation) + self.translation
        return Pose(rot, trans)

    def inverse(self) -> "Pose":
        inv_rot = quat_conjugate(self.rotation)
        return Pose(inv_rot, -quat_rotate(inv_rot, self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (3,) or (n, 3) points."""
        pts = np.asarray(points, dtype=float)
        rot = quat_to_matrix(self.rotation)
        if pts.ndim == 1:
            return rot @ pts + self.translation
        return pts @ rot.T + self.translation

    def is_identity(self, tol: float = 1e-9) -> bool:
        w = abs(float(self.rotation[0]))
        vec = float(np.abs(self.rotation[1:]).max())
        return abs(w - 1.0) <= tol and vec <= tol and float(np.abs(self.translation).max()) <= tol


@dataclass(frozen=True, eq=False)
class FloorPlane:
    """Floor as unit normal n (n_y > 0) and signed distance d with n . p = d."""

    normal: np.ndarray
    distance: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,):
            raise ValueError(f"plane normal must be a 3-vector, got {n.shape}")
        norm = float(np.linalg.norm(n))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValueError(f"plane normal norm {norm} not unit within {_UNIT_TOL}")
        if n[1] <= 0:
            raise ValueError("floor normal must have positive y (floor faces up)")
        object.__setattr__(self, "normal", _as_readonly(n))
        object.__setattr__(self, "distance", float(self.distance))

    def point_distances(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal - self.distance


@dataclass(frozen=True, eq=False)
class RgbdFrame:
    """One captured color + depth pair with the camera models that produced it."""

    frame_id: int
    timestamp_micros: int
    color: ColorImage
    depth: DepthImage
    depth_intrinsics: CameraIntrinsics
    color_intrinsics: CameraIntrinsics
    depth_to_color: Pose


def validate_frame(frame: RgbdFrame) -> RgbdFrame:
    """Check cross-field invariants; returns the frame unchanged when they hold.

    Pure and idempotent. Raises DimensionMismatch when an image does not match
    its intrinsics grid, InvalidIntrinsics when a focal length is non-positive.
    """
    for intr in (frame.depth_intrinsics, frame.color_intrinsics):
        if intr.fx <= 0 or intr.fy <= 0:
            raise InvalidIntrinsics(f"non-positive focal length in {intr}")
    if (frame.depth.width, frame.depth.height) != (frame.depth_intrinsics.width, frame.depth_intrinsics.height):
        raise DimensionMismatch(
            f"depth image {frame.depth.width}x{frame.depth.height} vs intrinsics "
            f"{frame.depth_intrinsics.width}x{frame.depth_intrinsics.height}"
        )
    if (frame.color.width, frame.color.height) != (frame.color_intrinsics.width, frame.color_intrinsics.height):
        raise DimensionMismatch(
            f"color image {frame.color.width}x{frame.color.height} vs intrinsics "
            f"{frame.color_intrinsics.width}x{frame.color_intrinsics.height}"
        )
    return frame
