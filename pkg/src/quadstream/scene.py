"""Synthetic RGBD sources: an animated figure scene and a wall test fixture.

The figure scene stands in for camera drivers: an articulated capsule figure
(torso, head, two legs) above a checkered ground plane, animated with a
squat-like vertical oscillation, ray-traced analytically per pixel. Depth and
color render through separate pinhole cameras offset by a fixed
depth-to-color baseline so registration does real work.

Resolution presets:
    default  color 1280x720, depth 640x360
    study    color 720x360,  depth 320x180
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    CameraIntrinsics,
    ColorImage,
    DepthImage,
    FloorPlane,
    Pose,
    RgbdFrame,
    quat_normalize,
)
from .geometry import CalibrationEntry

PRESETS: dict[str, tuple[int, int, int, int]] = {
    "default": (1280, 720, 640, 360),
    "study": (720, 360, 320, 180),
}

FRAME_INTERVAL_MICROS = 33_333
_HFOV_RAD = math.radians(75.0)
_FAR_LIMIT_M = 8.0
_MISS_T = 1e9
_DEPTH_TO_COLOR_BASELINE_M = 0.032


def preset_intrinsics(preset: str) -> tuple[CameraIntrinsics, CameraIntrinsics]:
    """(depth, color) intrinsics for a named preset; 75 degree horizontal FOV."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, have {sorted(PRESETS)}")
    color_w, color_h, depth_w, depth_h = PRESETS[preset]

    def build(w: int, h: int) -> CameraIntrinsics:
        fx = (w / 2.0) / math.tan(_HFOV_RAD / 2.0)
        return CameraIntrinsics(fx, fx, (w - 1) / 2.0, (h - 1) / 2.0, w, h)

    return build(depth_w, depth_h), build(color_w, color_h)


def look_at(position, target) -> Pose:
    """Roll-free pose at `position` with -z aimed at `target` (y-up)."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward /= np.linalg.norm(forward)
    z_axis = -forward
    x_axis = np.cross(np.array([0.0, 1.0, 0.0]), z_axis)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    m = np.column_stack((x_axis, y_axis, z_axis))
    # matrix -> quaternion (w, x, y, z), Shepperd-style branch on the trace
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    return Pose(quat_normalize(q), position)


@dataclass(frozen=True)
class _Capsule:
    a: np.ndarray
    b: np.ndarray
    radius: float
    color: tuple[int, int, int]


@dataclass(frozen=True)
class _Sphere:
    center: np.ndarray
    radius: float
    color: tuple[int, int, int]


_LIGHT_DIR = np.array([0.35, 0.8, 0.49])
_LIGHT_DIR = _LIGHT_DIR / np.linalg.norm(_LIGHT_DIR)


class SyntheticScene:
    """Deterministic frame source; `frame(camera, index)` is a pure function."""

    def __init__(self, preset: str = "study", cameras: int = 1, seed: int = 0):
        if cameras not in (1, 2):
            raise ValueError("cameras must be 1 or 2")
        self.preset = preset
        self.cameras = cameras
        self.seed = seed
        self.depth_intrinsics, self.color_intrinsics = preset_intrinsics(preset)
        rng = np.random.default_rng(seed)
        self._phase = float(rng.uniform(0, 2 * math.pi))
        # figure centered on the vertical axis so the two cameras sit at an
        # exact 90-degree horizontal angle around it
        self._figure_x = 0.0
        self._shirt = tuple(int(v) for v in rng.integers(90, 230, size=3))
        self._pants = tuple(int(v) for v in rng.integers(40, 140, size=3))
        self._skin = (224, 172, 140)

        target = np.array([self._figure_x, 0.85, 0.0])
        self._depth_poses = [look_at(np.array([0.0, 1.45, 2.3]), target)]
        if cameras == 2:
            self._depth_poses.append(look_at(np.array([2.3, 1.45, 0.0]), target))
        offset = Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([-_DEPTH_TO_COLOR_BASELINE_M, 0.0, 0.0]))
        self._depth_to_color = offset
        self._color_poses = [p.compose(offset.inverse()) for p in self._depth_poses]
        self._ray_cache: dict[tuple, np.ndarray] = {}

    # --- primitives for frame `index` ---

    def _bodies(self, index: int) -> tuple[list[_Capsule], list[_Sphere]]:
        squat = 0.5 * (1.0 - math.cos(2 * math.pi * index / 90.0 + self._phase))
        hip_y = 0.95 - 0.22 * squat
        x = self._figure_x
        hip = np.array([x, hip_y, 0.0])
        shoulder = np.array([x, hip_y + 0.52, 0.0])
        head = np.array([x, hip_y + 0.70, 0.0])
        capsules = [
            _Capsule(hip, shoulder, 0.16, self._shirt),
            _Capsule(np.array([x - 0.09, 0.08, 0.0]), hip + np.array([-0.09, 0, 0]), 0.07, self._pants),
            _Capsule(np.array([x + 0.09, 0.08, 0.0]), hip + np.array([0.09, 0, 0]), 0.07, self._pants),
        ]
        spheres = [_Sphere(head, 0.11, self._skin)]
        return capsules, spheres

    def world_pose(self, camera: int) -> Pose:
        """World-from-color-camera pose (frames are registered into color space)."""
        return self._color_poses[camera]

    def depth_pose(self, camera: int) -> Pose:
        return self._depth_poses[camera]

    def true_floor(self, camera: int) -> FloorPlane:
        """Ground plane y=0 expressed in the color camera's coordinates."""
        pose = self._color_poses[camera]
        rot = pose.matrix()[:3, :3]
        normal = rot.T @ np.array([0.0, 1.0, 0.0])
        return FloorPlane(normal / np.linalg.norm(normal), -float(pose.translation[1]))

    def calibration(self) -> list[CalibrationEntry]:
        """Color-camera poses of each transmitter relative to the first."""
        first = self._color_poses[0]
        entries = [CalibrationEntry(0, Pose.identity())]
        for i in range(1, self.cameras):
            entries.append(CalibrationEntry(i, first.inverse().compose(self._color_poses[i])))
        return entries

    def frame(self, camera: int, index: int) -> RgbdFrame:
        depth_mm, _ = self.trace(self._depth_poses[camera], self.depth_intrinsics, index)
        _, color = self.trace(self._color_poses[camera], self.color_intrinsics, index)
        return RgbdFrame(
            frame_id=index,
            timestamp_micros=index * FRAME_INTERVAL_MICROS,
            color=ColorImage(color),
            depth=DepthImage(depth_mm),
            depth_intrinsics=self.depth_intrinsics,
            color_intrinsics=self.color_intrinsics,
            depth_to_color=self._depth_to_color,
        )

    def silhouette(self, pose: Pose, intrinsics: CameraIntrinsics, index: int) -> np.ndarray:
        """Mask of pixels where the true scene is visible from `pose`."""
        depth_mm, _ = self.trace(pose, intrinsics, index)
        return depth_mm > 0

    def figure_silhouette(self, pose: Pose, intrinsics: CameraIntrinsics, index: int) -> np.ndarray:
        """Mask of pixels covered by the figure alone (no ground plane).

        The useful coverage reference: the figure always sits inside the
        capture frustum, while the ground plane extends far beyond it.
        """
        world, dd = self._world_rays(pose, intrinsics)
        origin = pose.translation
        best_t = np.full(len(world), _MISS_T)
        capsules, spheres = self._bodies(index)
        for capsule in capsules:
            best_t = np.minimum(best_t, _ray_capsule_t(origin, world, dd, capsule.a, capsule.b, capsule.radius))
        for sphere in spheres:
            best_t = np.minimum(best_t, _ray_sphere_t(origin, world, dd, sphere.center, sphere.radius))
        return (best_t < _MISS_T).reshape(intrinsics.height, intrinsics.width)

    # --- analytic ray tracing ---

    def _world_rays(self, pose: Pose, intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
        """(directions, |direction|^2) in world space, cached per camera grid."""
        key = (id(pose), intrinsics.width, intrinsics.height)
        if key not in self._ray_cache:
            w, h = intrinsics.width, intrinsics.height
            us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
            dirs = np.stack(
                [(us - intrinsics.cx) / intrinsics.fx, -(vs - intrinsics.cy) / intrinsics.fy, -np.ones_like(us)],
                axis=-1,
            ).reshape(-1, 3)
            world = dirs @ pose.matrix()[:3, :3].T
            self._ray_cache[key] = (world, np.einsum("ij,ij->i", world, world))
        return self._ray_cache[key]

    def _background(self, pose: Pose, intrinsics: CameraIntrinsics):
        """Frame-independent floor render: (t meters, depth mm, shaded color)."""
        key = ("bg", id(pose), intrinsics.width, intrinsics.height)
        if key not in self._ray_cache:
            world, _ = self._world_rays(pose, intrinsics)
            origin = pose.translation
            t_plane = np.full(len(world), _MISS_T)
            down = world[:, 1] < -1e-12
            t_plane[down] = -origin[1] / world[down, 1]
            hit = down & (t_plane > 0.01) & (t_plane < _FAR_LIMIT_M)
            t_plane[~hit] = _MISS_T
            colors = np.zeros((len(world), 3), dtype=np.uint8)
            px = origin[0] + t_plane[hit] * world[hit, 0]
            pz = origin[2] + t_plane[hit] * world[hit, 2]
            checker = ((np.floor(px * 2) + np.floor(pz * 2)) % 2).astype(bool)
            floor_shade = 0.55 + 0.45 * _LIGHT_DIR[1]
            palette = (np.array([[96, 96, 104], [168, 168, 172]]) * floor_shade).astype(np.uint8)
            colors[hit] = palette[checker.astype(np.int64)]
            depth_mm = np.zeros(len(world), dtype=np.uint16)
            depth_mm[hit] = np.clip(np.round(t_plane[hit] * 1000.0), 0, 65535).astype(np.uint16)
            self._ray_cache[key] = (t_plane, depth_mm, colors)
        return self._ray_cache[key]

    def trace(self, pose: Pose, intrinsics: CameraIntrinsics, index: int) -> tuple[np.ndarray, np.ndarray]:
        """(depth mm uint16, color uint8) via closed-form primitive hits."""
        w, h = intrinsics.width, intrinsics.height
        world, dd = self._world_rays(pose, intrinsics)
        origin = pose.translation
        bg_t, bg_depth, bg_colors = self._background(pose, intrinsics)
        depth_mm = bg_depth.copy()
        colors = bg_colors.copy()

        capsules, spheres = self._bodies(index)
        # one bounding sphere around the whole figure culls most rays up front
        anchors = [c.a for c in capsules] + [c.b for c in capsules] + [s.center for s in spheres]
        lo = np.minimum.reduce(anchors)
        hi = np.maximum.reduce(anchors)
        bound_center = (lo + hi) / 2
        bound_radius = float(np.linalg.norm(hi - lo) / 2) + max(
            max(c.radius for c in capsules), max(s.radius for s in spheres)
        )
        oc = origin - bound_center
        b0 = world @ oc
        cand = np.flatnonzero(b0 * b0 - dd * (oc @ oc - bound_radius * bound_radius) >= 0)
        if len(cand):
            sub_world = world[cand]
            sub_dd = dd[cand]
            sub_best = bg_t[cand].copy()
            sub_colors = colors[cand]
            sub_changed = np.zeros(len(cand), dtype=bool)
            for capsule in capsules:
                t = _ray_capsule_t(origin, sub_world, sub_dd, capsule.a, capsule.b, capsule.radius)
                better = t < sub_best
                if better.any():
                    sub_best[better] = t[better]
                    sub_changed |= better
                    points = origin + t[better, None] * sub_world[better]
                    ba = capsule.b - capsule.a
                    along = np.clip((points - capsule.a) @ ba / (ba @ ba), 0.0, 1.0)
                    normals = (points - (capsule.a + along[:, None] * ba)) / capsule.radius
                    shade = 0.55 + 0.45 * np.clip(normals @ _LIGHT_DIR, 0.0, 1.0)
                    sub_colors[better] = (np.array(capsule.color) * shade[:, None]).astype(np.uint8)
            for sphere in spheres:
                t = _ray_sphere_t(origin, sub_world, sub_dd, sphere.center, sphere.radius)
                better = t < sub_best
                if better.any():
                    sub_best[better] = t[better]
                    sub_changed |= better
                    points = origin + t[better, None] * sub_world[better]
                    normals = (points - sphere.center) / sphere.radius
                    shade = 0.55 + 0.45 * np.clip(normals @ _LIGHT_DIR, 0.0, 1.0)
                    sub_colors[better] = (np.array(sphere.color) * shade[:, None]).astype(np.uint8)
            touched = cand[sub_changed]
            depth_mm[touched] = np.clip(np.round(sub_best[sub_changed] * 1000.0), 0, 65535).astype(np.uint16)
            colors[touched] = sub_colors[sub_changed]
        return depth_mm.reshape(h, w), colors.reshape(h, w, 3)


def _ray_sphere_t(origin, dirs, dd, center, radius):
    oc = origin - center
    b = dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - dd * c
    candidates = np.flatnonzero(disc >= 0)
    t = np.full(len(dirs), _MISS_T)
    if len(candidates):
        tc = (-b[candidates] - np.sqrt(disc[candidates])) / dd[candidates]
        good = tc > 0.01
        t[candidates[good]] = tc[good]
    return t


def _ray_capsule_t(origin, dirs, dd, a_pt, b_pt, radius):
    """Closed-form ray vs capsule: infinite-cylinder body clamped to the
    segment, sphere caps for the ends."""
    ba = b_pt - a_pt
    oa = origin - a_pt
    baba = ba @ ba
    bard = dirs @ ba
    baoa = oa @ ba
    rdoa = dirs @ oa
    a2 = baba * dd - bard * bard
    b2 = baba * rdoa - baoa * bard
    c2 = baba * (oa @ oa) - baoa * baoa - radius * radius * baba
    disc = b2 * b2 - a2 * c2
    t = np.full(len(dirs), _MISS_T)
    candidates = np.flatnonzero((disc >= 0) & (np.abs(a2) > 1e-12))
    if len(candidates):
        tc = (-b2[candidates] - np.sqrt(disc[candidates])) / a2[candidates]
        y = baoa + tc * bard[candidates]
        good = (tc > 0.01) & (y >= 0) & (y <= baba)
        t[candidates[good]] = tc[good]
    t = np.minimum(t, _ray_sphere_t(origin, dirs, dd, a_pt, radius))
    t = np.minimum(t, _ray_sphere_t(origin, dirs, dd, b_pt, radius))
    return t


# --- wall fixture for the orientation / enlargement comparisons ---

WALL_HALF_WIDTH = 0.7
WALL_HALF_HEIGHT = 0.7
WALL_CENTER = np.array([0.0, 1.0, 0.0])
_WALL_NORMAL = np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0)
_WALL_U = np.array([-1.0, 0.0, 1.0]) / math.sqrt(2.0)
_WALL_V = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class WallFixture:
    """A flat wall oblique to its capture camera, viewed from 90 degrees away.

    The capture camera sees the wall at ~45 degrees, so neighboring depth
    pixels land farther apart on the wall than one quad footprint; the viewer
    sits a quarter turn around the wall and sees those gaps unless quads are
    re-oriented and enlarged.
    """

    capture_pose: Pose
    capture_intrinsics: CameraIntrinsics
    viewer_pose: Pose
    viewer_intrinsics: CameraIntrinsics

    @property
    def viewer_position(self) -> np.ndarray:
        return self.viewer_pose.translation

    def capture_depth(self) -> DepthImage:
        intr = self.capture_intrinsics
        us, vs = np.meshgrid(np.arange(intr.width, dtype=float), np.arange(intr.height, dtype=float))
        dirs = np.stack(
            [(us - intr.cx) / intr.fx, -(vs - intr.cy) / intr.fy, -np.ones_like(us)], axis=-1
        ).reshape(-1, 3)
        rot = self.capture_pose.matrix()[:3, :3]
        origin = self.capture_pose.translation
        world = dirs @ rot.T
        denom = world @ _WALL_NORMAL
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((WALL_CENTER - origin) @ _WALL_NORMAL) / denom
        points = origin + t[:, None] * world
        local_u = (points - WALL_CENTER) @ _WALL_U
        local_v = (points - WALL_CENTER) @ _WALL_V
        hit = (
            (np.abs(denom) > 1e-9)
            & (t > 0.01)
            & (np.abs(local_u) <= WALL_HALF_WIDTH)
            & (np.abs(local_v) <= WALL_HALF_HEIGHT)
        )
        depth_mm = np.where(hit, np.round(t * 1000.0), 0.0).astype(np.uint16)
        return DepthImage(depth_mm.reshape(intr.height, intr.width))

    def silhouette(self) -> np.ndarray:
        intr = self.viewer_intrinsics
        us, vs = np.meshgrid(np.arange(intr.width, dtype=float), np.arange(intr.height, dtype=float))
        dirs = np.stack(
            [(us - intr.cx) / intr.fx, -(vs - intr.cy) / intr.fy, -np.ones_like(us)], axis=-1
        ).reshape(-1, 3)
        rot = self.viewer_pose.matrix()[:3, :3]
        origin = self.viewer_pose.translation
        world = dirs @ rot.T
        denom = world @ _WALL_NORMAL
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((WALL_CENTER - origin) @ _WALL_NORMAL) / denom
        points = origin + t[:, None] * world
        local_u = (points - WALL_CENTER) @ _WALL_U
        local_v = (points - WALL_CENTER) @ _WALL_V
        mask = (
            (np.abs(denom) > 1e-9)
            & (t > 0.01)
            & (np.abs(local_u) <= WALL_HALF_WIDTH)
            & (np.abs(local_v) <= WALL_HALF_HEIGHT)
        )
        return mask.reshape(intr.height, intr.width)


def wall_fixture() -> WallFixture:
    """Frozen parameters; capture frontal at z+, viewer rotated 90 degrees.

    The viewer camera runs at twice the capture resolution so sub-pixel
    footprint growth from enlargement is visible in the coverage metric.
    """
    capture_pos = np.array([0.0, 1.0, 2.6])
    viewer_pos = np.array([2.6, 1.0, 0.0])

    def cam(w: int, h: int) -> CameraIntrinsics:
        fx = (w / 2.0) / math.tan(math.radians(46.0) / 2.0)
        return CameraIntrinsics(fx, fx, (w - 1) / 2.0, (h - 1) / 2.0, w, h)

    return WallFixture(
        capture_pose=look_at(capture_pos, WALL_CENTER),
        capture_intrinsics=cam(144, 108),
        viewer_pose=look_at(viewer_pos, WALL_CENTER),
        viewer_intrinsics=cam(288, 216),
    )
