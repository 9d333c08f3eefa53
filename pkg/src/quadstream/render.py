"""Quad-splat construction, orientation, software rasterization, and exports.

Every valid depth pixel becomes a small rectangle ("quad") centered on its
3-D point. A quad's footprint matches the pixel's metric extent (depth / focal
length) and is scaled by an enlargement factor, 1.2 by default, to close gaps.
Freshly built quads face the camera that captured them; ``orient_quads``
re-aims them at an arbitrary viewer position instead, which keeps side views
from dissolving into slivers.

In-plane axes are derived from the normal with world +y projected into the
quad plane as "up" (falling back to world +z when the normal is vertical);
this convention is shared by the rasterizer and the PLY export.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CameraIntrinsics, ColorImage, DepthImage, Pose
from .errors import DimensionMismatch, IoFailure
from .geometry import unproject

DEFAULT_ENLARGEMENT = 1.2

_NEAR_Z = 1e-6
_FAR_T = 1e4
_FRAGMENT_CHUNK = 4_000_000
_EMPTY_KEY = np.int64(1) << np.int64(62)


@dataclass(frozen=True)
class Quad:
    center: np.ndarray
    normal: np.ndarray
    half_width: float
    half_height: float
    color: tuple[int, int, int]


class QuadCloud:
    """Struct-of-arrays quad set plus the world pose of the capturing camera."""

    def __init__(
        self,
        centers: np.ndarray,
        normals: np.ndarray,
        half_widths: np.ndarray,
        half_heights: np.ndarray,
        colors: np.ndarray,
        source_pose: Pose,
    ):
        self.centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(normals, dtype=np.float64).reshape(-1, 3)
        self.half_widths = np.ascontiguousarray(half_widths, dtype=np.float64).ravel()
        self.half_heights = np.ascontiguousarray(half_heights, dtype=np.float64).ravel()
        self.colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 3)
        self.source_pose = source_pose

    def __len__(self) -> int:
        return len(self.centers)

    def quad(self, index: int) -> Quad:
        return Quad(
            self.centers[index].copy(),
            self.normals[index].copy(),
            float(self.half_widths[index]),
            float(self.half_heights[index]),
            tuple(int(c) for c in self.colors[index]),
        )

    @classmethod
    def empty(cls, source_pose: Pose) -> "QuadCloud":
        return cls(
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros(0),
            np.zeros(0),
            np.zeros((0, 3), dtype=np.uint8),
            source_pose,
        )


def build_quads(
    depth: DepthImage,
    color: ColorImage,
    intrinsics: CameraIntrinsics,
    source_pose: Pose,
    enlargement: float = DEFAULT_ENLARGEMENT,
) -> QuadCloud:
    """One quad per valid depth pixel, in world space.

    `depth` is expected in the color camera's geometry (registered) with
    `intrinsics` scaled to its grid; `color` is sampled at depth resolution by
    nearest neighbor. Quad footprints are enlargement * z / focal, so adjacent
    same-depth quads exactly tile at enlargement 1.0.
    """
    points, rows, cols = unproject(depth, intrinsics)
    if len(points) == 0:
        return QuadCloud.empty(source_pose)
    z = -points[:, 2]
    half_w = enlargement * z / (2.0 * intrinsics.fx)
    half_h = enlargement * z / (2.0 * intrinsics.fy)

    cr = np.minimum(np.floor((rows + 0.5) * color.height / depth.height).astype(np.int64), color.height - 1)
    cc = np.minimum(np.floor((cols + 0.5) * color.width / depth.width).astype(np.int64), color.width - 1)
    colors = color.data[cr, cc]

    centers = source_pose.apply(points)
    normals = source_pose.translation[None, :] - centers
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.maximum(lengths, 1e-12)
    return QuadCloud(centers, normals, half_w, half_h, colors, source_pose)


def orient_quads(cloud: QuadCloud, viewer_position, mode: str = "billboard") -> QuadCloud:
    """Re-aim every quad at the viewer; centers, sizes, and colors unchanged.

    mode "billboard" points normals straight at the viewer position;
    mode "yaw" only rotates about world +y (normals stay horizontal).
    """
    if mode not in ("billboard", "yaw"):
        raise ValueError(f"unknown orientation mode {mode!r}")
    target = np.asarray(viewer_position, dtype=np.float64)
    normals = target[None, :] - cloud.centers
    if mode == "yaw":
        normals = normals.copy()
        normals[:, 1] = 0.0
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    degenerate = lengths[:, 0] < 1e-12
    normals = np.where(degenerate[:, None], cloud.normals, normals / np.maximum(lengths, 1e-12))
    return QuadCloud(
        cloud.centers, normals, cloud.half_widths, cloud.half_heights, cloud.colors, cloud.source_pose
    )


def _inplane_axes(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(right, up) per quad: world +y projected into the plane, +z fallback."""
    up = np.array([0.0, 1.0, 0.0])[None, :] - normals * normals[:, 1:2]
    norms = np.linalg.norm(up, axis=1)
    vertical = norms < 1e-9
    if vertical.any():
        fallback = np.array([0.0, 0.0, 1.0])[None, :] - normals[vertical] * normals[vertical, 2:3]
        up[vertical] = fallback
        norms = np.linalg.norm(up, axis=1)
    up = up / np.maximum(norms, 1e-12)[:, None]
    right = np.cross(up, normals)
    return right, up


def quad_corners(cloud: QuadCloud) -> np.ndarray:
    """(n, 4, 3) world corners, counter-clockwise seen from the facing side."""
    right, up = _inplane_axes(cloud.normals)
    dx = right * cloud.half_widths[:, None]
    dy = up * cloud.half_heights[:, None]
    c = cloud.centers
    return np.stack((c - dx - dy, c + dx - dy, c + dx + dy, c - dx + dy), axis=1)


def rasterize(
    clouds: list[QuadCloud] | QuadCloud,
    intrinsics: CameraIntrinsics,
    camera_pose: Pose,
) -> tuple[ColorImage, DepthImage]:
    """Z-buffered projection of quads with per-fragment ray-plane depth.

    The nearest fragment wins; exact depth ties resolve to the earliest quad,
    so output is deterministic. Background is black with depth 0. Quads that
    touch or cross the camera plane are culled rather than clipped.
    """
    if isinstance(clouds, QuadCloud):
        clouds = [clouds]
    width, height = intrinsics.width, intrinsics.height
    keys = np.full(width * height, _EMPTY_KEY, dtype=np.int64)
    palette_parts: list[np.ndarray] = []
    id_base = 0
    view = camera_pose.inverse()

    for cloud in clouds:
        if len(cloud) == 0:
            continue
        corners = view.apply(quad_corners(cloud).reshape(-1, 3)).reshape(-1, 4, 3)
        visible = (corners[:, :, 2] < -_NEAR_Z).all(axis=1)
        corners = corners[visible]
        if len(corners) == 0:
            continue
        palette_parts.append(cloud.colors[visible])

        plane_n = np.cross(corners[:, 1] - corners[:, 0], corners[:, 3] - corners[:, 0])
        plane_d = np.einsum("ij,ij->i", plane_n, corners[:, 0])

        z = -corners[:, :, 2]
        us = intrinsics.cx + intrinsics.fx * corners[:, :, 0] / z
        vs = intrinsics.cy - intrinsics.fy * corners[:, :, 1] / z

        u_lo = np.maximum(np.ceil(us.min(axis=1)), 0).astype(np.int64)
        u_hi = np.minimum(np.floor(us.max(axis=1)), width - 1).astype(np.int64)
        v_lo = np.maximum(np.ceil(vs.min(axis=1)), 0).astype(np.int64)
        v_hi = np.minimum(np.floor(vs.max(axis=1)), height - 1).astype(np.int64)
        span_u = np.maximum(u_hi - u_lo + 1, 0)
        counts = span_u * np.maximum(v_hi - v_lo + 1, 0)

        begin = 0
        n_quads = len(corners)
        while begin < n_quads:
            end = begin
            fragments = 0
            while end < n_quads and (end == begin or fragments + counts[end] <= _FRAGMENT_CHUNK):
                fragments += int(counts[end])
                end += 1
            sel = np.arange(begin, end)
            sel = sel[counts[sel] > 0]
            if len(sel):
                _scatter_fragments(
                    keys, intrinsics, width,
                    sel + id_base, counts[sel], u_lo[sel], v_lo[sel], span_u[sel],
                    us[sel], vs[sel], plane_n[sel], plane_d[sel],
                )
            begin = end
        id_base += n_quads

    color_flat = np.zeros((width * height, 3), dtype=np.uint8)
    depth_flat = np.zeros(width * height, dtype=np.uint16)
    hit = keys != _EMPTY_KEY
    if hit.any():
        palette = np.concatenate(palette_parts, axis=0)
        winners = (keys[hit] & np.int64(0xFFFFFF)).astype(np.int64)
        color_flat[hit] = palette[winners]
        depth_tenth_mm = (keys[hit] >> np.int64(24)).astype(np.float64)
        depth_flat[hit] = np.clip(np.round(depth_tenth_mm / 10.0), 1, 0xFFFF).astype(np.uint16)
    return (
        ColorImage(color_flat.reshape(height, width, 3)),
        DepthImage(depth_flat.reshape(height, width)),
    )


def _scatter_fragments(keys, intrinsics, width, quad_ids, counts, u_lo, v_lo, span_u, us, vs, plane_n, plane_d):
    """Generate candidate fragments for a quad batch and min-scatter their keys."""
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    local = np.repeat(np.arange(len(quad_ids)), counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    su = span_u[local]
    fu = u_lo[local] + within % su
    fv = v_lo[local] + within // su

    fx = fu.astype(np.float64)
    fy = fv.astype(np.float64)
    cu = us[local]
    cv = vs[local]
    pos = np.ones(total, dtype=bool)
    neg = np.ones(total, dtype=bool)
    for j in range(4):
        k = (j + 1) & 3
        side = (cu[:, k] - cu[:, j]) * (fy - cv[:, j]) - (cv[:, k] - cv[:, j]) * (fx - cu[:, j])
        pos &= side >= -1e-9
        neg &= side <= 1e-9
    inside = pos | neg

    dir_x = (fx - intrinsics.cx) / intrinsics.fx
    dir_y = -(fy - intrinsics.cy) / intrinsics.fy
    denom = plane_n[local, 0] * dir_x + plane_n[local, 1] * dir_y - plane_n[local, 2]
    safe = np.abs(denom) > 1e-12
    t = np.where(safe, plane_d[local] / np.where(safe, denom, 1.0), 0.0)
    valid = inside & safe & (t > _NEAR_Z) & (t < _FAR_T)
    if not valid.any():
        return
    depth_tenth_mm = np.round(t[valid] * 10_000.0).astype(np.int64)
    frag_keys = (depth_tenth_mm << np.int64(24)) | quad_ids[local[valid]]
    flat = fv[valid] * width + fu[valid]
    np.minimum.at(keys, flat, frag_keys)


def coverage_metric(rendered: DepthImage, silhouette: np.ndarray) -> float:
    """Fraction of silhouette pixels that received a rendered fragment."""
    mask = np.asarray(silhouette, dtype=bool)
    if mask.shape != rendered.data.shape:
        raise DimensionMismatch(f"silhouette {mask.shape} vs render {rendered.data.shape}")
    denominator = int(mask.sum())
    if denominator == 0:
        return 1.0
    return float(((rendered.data > 0) & mask).sum() / denominator)


def export_ply(cloud: QuadCloud, path: Path | str) -> None:
    """ASCII PLY with 4 vertices and 1 face per quad, per-vertex RGB."""
    corners = quad_corners(cloud)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {4 * len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        f"element face {len(cloud)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    for i in range(len(cloud)):
        r, g, b = (int(c) for c in cloud.colors[i])
        for corner in corners[i]:
            lines.append(f"{corner[0]:.9g} {corner[1]:.9g} {corner[2]:.9g} {r} {g} {b}")
    for i in range(len(cloud)):
        base = 4 * i
        lines.append(f"4 {base} {base + 1} {base + 2} {base + 3}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_ppm(image: ColorImage, path: Path | str) -> None:
    """Binary P6 output."""
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + image.data.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_ppm(path: Path | str) -> ColorImage:
    """Reader for the P6 files this package writes."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise IoFailure(f"{path} is not a P6 ppm")
    width, height = (int(v) for v in parts[1].split())
    data = np.frombuffer(parts[3][: width * height * 3], dtype=np.uint8)
    return ColorImage(data.reshape(height, width, 3).copy())
