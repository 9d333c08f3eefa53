import math

import numpy as np
import pytest

from quadstream.core import (
    CameraIntrinsics,
    ColorImage,
    DepthImage,
    FloorPlane,
    Pose,
    RgbdFrame,
    quat_from_axis_angle,
    quat_from_euler_yxz,
    quat_normalize,
    quat_to_euler_yxz,
)
from quadstream.errors import (
    DegenerateDirection,
    InvalidRange,
    MissingFirstTransmitter,
    NoFloorFound,
)
from quadstream.geometry import (
    CalibrationEntry,
    RansacParams,
    compose_calibration,
    extract_floor,
    floor_alignment_rotation,
    floor_matched_pose,
    load_calibration,
    match_floor,
    register_depth_to_color,
    remove_background,
    save_calibration,
    set_interlocutor_distance,
    unproject,
)


def intr(w, h, f=200.0):
    return CameraIntrinsics(f, f, (w - 1) / 2, (h - 1) / 2, w, h)


def frame_with(depth, depth_intr, color_intr, pose):
    color = ColorImage(np.zeros((color_intr.height, color_intr.width, 3), dtype=np.uint8))
    return RgbdFrame(0, 0, color, depth, depth_intr, color_intr, pose)


# --- remove_background ---

def test_background_all_in_range_unchanged():
    depth = DepthImage(np.full((4, 5), 1500, dtype=np.uint16))
    out = remove_background(depth, 500, 3000)
    assert np.array_equal(out.data, depth.data)


def test_background_all_out_of_range_zeroed():
    depth = DepthImage(np.full((4, 5), 4000, dtype=np.uint16))
    out = remove_background(depth, 500, 3000)
    assert not out.data.any()


def test_background_mixed_matches_bruteforce():
    rng = np.random.default_rng(61)
    data = rng.integers(0, 6000, size=(30, 40), dtype=np.uint16)
    out = remove_background(DepthImage(data), 500, 3000)
    for r in range(30):
        for c in range(40):
            v = int(data[r, c])
            expected = v if 500 <= v <= 3000 else 0
            assert out.data[r, c] == expected


def test_background_invalid_range():
    with pytest.raises(InvalidRange):
        remove_background(DepthImage.zeros(2, 2), 3000, 500)


# --- registration ---

def test_registration_identity_is_noop():
    rng = np.random.default_rng(62)
    data = rng.integers(0, 3000, size=(20, 30), dtype=np.uint16)
    cam = intr(30, 20)
    frame = frame_with(DepthImage(data), cam, cam, Pose.identity())
    out = register_depth_to_color(frame)
    assert np.array_equal(out.data, data)


def test_registration_translation_shifts_column():
    # single pixel, 10 cm x-translation: u' = u + fx * 0.1 / z
    w, h = 80, 24
    cam = intr(w, h, f=500.0)
    data = np.zeros((h, w), dtype=np.uint16)
    data[12, 10] = 1000  # 1 m
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0.1, 0.0, 0.0]))
    frame = frame_with(DepthImage(data), cam, cam, pose)
    out = register_depth_to_color(frame)
    rows, cols = np.nonzero(out.data)
    expected_col = 10 + round(500.0 * 0.1 / 1.0)
    assert (rows.tolist(), cols.tolist()) == ([12], [expected_col])
    assert out.data[12, expected_col] == 1000


def test_registration_zbuffer_keeps_nearest():
    # halve the focal so adjacent input columns collapse onto one output cell
    w, h = 16, 16
    depth_cam = intr(w, h, f=400.0)
    color_cam = CameraIntrinsics(200.0, 400.0, depth_cam.cx, depth_cam.cy, w, h)
    data = np.zeros((h, w), dtype=np.uint16)
    data[8, 9] = 2000
    data[8, 10] = 1200
    frame = frame_with(DepthImage(data), depth_cam, color_cam, Pose.identity())
    out = register_depth_to_color(frame)
    values = out.data[out.data > 0]
    assert 1200 in values
    # the losing (farther) pixel must not overwrite a nearer one in any cell
    assert values.min() == 1200


def test_registration_valid_count_never_grows():
    rng = np.random.default_rng(63)
    data = rng.integers(0, 4000, size=(20, 30), dtype=np.uint16)
    cam = intr(30, 20)
    pose = Pose(quat_from_axis_angle([0, 1, 0], 0.05), np.array([0.03, 0.01, 0.0]))
    frame = frame_with(DepthImage(data), cam, cam, pose)
    out = register_depth_to_color(frame)
    assert (out.data > 0).sum() <= (data > 0).sum()


# --- floor extraction ---

def synthetic_floor_depth(pose, w=160, h=120, f=120.0, noise=0.0, outliers=0.0, seed=0):
    """Depth image of the world plane y=0 seen from `pose` (world_from_camera)."""
    rng = np.random.default_rng(seed)
    cam = intr(w, h, f)
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    dirs = np.stack(
        [(us - cam.cx) / cam.fx, -(vs - cam.cy) / cam.fy, -np.ones_like(us, dtype=float)], axis=-1
    ).reshape(-1, 3)
    rot = pose.matrix()[:3, :3]
    origin = pose.translation
    world_dirs = dirs @ rot.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[1] / world_dirs[:, 1]
    depth = np.where((world_dirs[:, 1] < -1e-9) & (t > 0.05) & (t < 60.0), t, 0.0)
    if noise:
        depth = np.where(depth > 0, depth + rng.normal(0, noise, size=depth.shape), 0.0)
    if outliers:
        hit = depth > 0
        flip = rng.random(depth.shape) < outliers
        depth = np.where(hit & flip, rng.uniform(0.2, 6.0, size=depth.shape), depth)
    mm = np.clip(np.round(depth * 1000), 0, 65535).astype(np.uint16)
    return DepthImage(mm.reshape(h, w)), cam


def test_extract_floor_recovers_synthetic_plane():
    pose = Pose(
        quat_from_euler_yxz(0.2, -0.25, 0.05),
        np.array([0.3, 1.5, 2.0]),
    )
    depth, cam = synthetic_floor_depth(pose, noise=0.004, seed=1)
    plane = extract_floor(depth, cam, RansacParams(seed=3))
    # ground truth floor in camera coordinates
    rot = pose.matrix()[:3, :3]
    true_normal = rot.T @ np.array([0.0, 1.0, 0.0])
    true_distance = -float(pose.translation[1])
    assert abs(plane.distance - true_distance) < 0.005
    assert math.acos(np.clip(plane.normal @ true_normal, -1, 1)) < 0.01


def test_extract_floor_exact_plane_is_exact():
    # camera level, 1.5 m up: every valid pixel lies on y = -1.5 exactly up to quantization
    data = np.zeros((40, 40), dtype=np.uint16)
    cam = intr(40, 40, f=40.0)
    # build pixels analytically: depth so that y = -(v - cy)/fy * z = -1.5
    for v in range(24, 40):
        for u in range(40):
            y_slope = -(v - cam.cy) / cam.fy
            if y_slope < -0.1:
                z = -1.5 / y_slope
                if z * 1000 < 65000:
                    data[v, u] = int(round(z * 1000))
    depth = DepthImage(data)
    points, _, _ = unproject(depth, cam)
    plane = extract_floor(depth, cam, RansacParams(seed=1, inlier_distance_m=0.01))
    assert np.abs(plane.normal - np.array([0, 1, 0])).max() < 2e-3
    assert abs(plane.distance + 1.5) < 2e-3


def test_extract_floor_rejects_wall():
    # vertical wall: constant z, normals point along -z, outside the up gate
    data = np.full((60, 60), 2000, dtype=np.uint16)
    cam = intr(60, 60, f=300.0)
    with pytest.raises(NoFloorFound):
        extract_floor(DepthImage(data), cam, RansacParams(seed=2))


def test_extract_floor_too_few_points():
    data = np.zeros((10, 10), dtype=np.uint16)
    data[0, 0] = 1000
    with pytest.raises(NoFloorFound):
        extract_floor(DepthImage(data), intr(10, 10), RansacParams(seed=0))


def test_extract_floor_deterministic():
    pose = Pose(quat_from_euler_yxz(0.1, -0.2, 0.0), np.array([0.0, 1.4, 0.0]))
    depth, cam = synthetic_floor_depth(pose, noise=0.01, outliers=0.2, seed=4)
    a = extract_floor(depth, cam, RansacParams(seed=11))
    b = extract_floor(depth, cam, RansacParams(seed=11))
    assert np.array_equal(a.normal, b.normal) and a.distance == b.distance


def test_extract_floor_robust_to_outliers():
    rng = np.random.default_rng(65)
    ok = 0
    for trial in range(20):
        pose = Pose(
            quat_from_euler_yxz(float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.35, -0.05)), float(rng.uniform(-0.1, 0.1))),
            np.array([0.0, float(rng.uniform(1.2, 1.8)), 0.0]),
        )
        depth, cam = synthetic_floor_depth(pose, noise=0.005, outliers=0.3, seed=100 + trial)
        plane = extract_floor(depth, cam, RansacParams(seed=trial))
        rot = pose.matrix()[:3, :3]
        true_normal = rot.T @ np.array([0.0, 1.0, 0.0])
        angle = math.acos(np.clip(plane.normal @ true_normal, -1, 1))
        if abs(plane.distance + pose.translation[1]) < 0.01 and angle < 0.02:
            ok += 1
    assert ok >= 19


# --- floor matching ---

def test_match_floor_identity_when_already_matched():
    plane = FloorPlane(np.array([0.0, 1.0, 0.0]), 0.0)
    matched = match_floor(plane, Pose.identity())
    assert matched.is_identity(tol=1e-12)


def test_match_floor_zeros_pitch_and_roll():
    placement = Pose(quat_from_euler_yxz(0.4, 0.0, math.radians(10)), np.array([1.0, 0.3, -2.0]))
    plane = FloorPlane(np.array([0.0, 1.0, 0.0]), -1.2)
    matched = match_floor(plane, placement)
    yaw, pitch, roll = quat_to_euler_yxz(matched.rotation)
    assert pitch == 0.0 and roll == 0.0
    assert abs(yaw - 0.4) < 1e-12
    assert matched.translation[0] == 1.0 and matched.translation[2] == -2.0
    assert matched.translation[1] == 1.2


def test_match_floor_level_camera_height():
    plane = FloorPlane(np.array([0.0, 1.0, 0.0]), -1.4)
    matched = match_floor(plane, Pose.identity())
    # captured floor points have y = -1.4; the matched pose lifts them to 0
    floor_point = np.array([0.5, -1.4, -2.0])
    assert abs(matched.apply(floor_point)[1]) < 1e-12


def test_floor_matched_pose_maps_tilted_floor_to_ground():
    rng = np.random.default_rng(66)
    for _ in range(100):
        true_pose = Pose(
            quat_from_euler_yxz(
                float(rng.uniform(-math.pi, math.pi)),
                float(rng.uniform(-0.4, 0.4)),
                float(rng.uniform(-0.4, 0.4)),
            ),
            np.array([float(rng.uniform(-2, 2)), float(rng.uniform(1.0, 2.0)), float(rng.uniform(-2, 2))]),
        )
        rot = true_pose.matrix()[:3, :3]
        normal = rot.T @ np.array([0.0, 1.0, 0.0])
        plane = FloorPlane(normal / np.linalg.norm(normal), -float(true_pose.translation[1]))
        world = floor_matched_pose(plane, true_pose)
        # sample points on the captured floor plane in camera space
        basis = np.linalg.svd(plane.normal[None, :])[2][1:]
        samples = plane.distance * plane.normal + rng.uniform(-3, 3, size=(50, 2)) @ basis
        mapped = world.apply(samples)
        assert np.abs(mapped[:, 1]).max() < 1e-9
        yaw_in, _, _ = quat_to_euler_yxz(true_pose.rotation)
        yaw_out, pitch_out, roll_out = quat_to_euler_yxz(match_floor(plane, true_pose).rotation)
        assert pitch_out == 0.0 and roll_out == 0.0
        assert abs(yaw_out - yaw_in) < 1e-9


def test_floor_alignment_rotation_levels_normal():
    plane = FloorPlane(quat_normalize(np.array([0.2, 0.9, -0.1, 0]))[:3] / np.linalg.norm(quat_normalize(np.array([0.2, 0.9, -0.1, 0]))[:3]), -1.0)
    aligned = floor_alignment_rotation(plane).apply(plane.normal)
    assert np.abs(aligned - np.array([0, 1, 0])).max() < 1e-12


# --- interlocutor distance ---

def test_distance_unchanged_when_already_at_target():
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, -2.0]))
    out = set_interlocutor_distance(pose, 2.0)
    assert np.abs(out.translation - pose.translation).max() < 1e-12


def test_distance_scales_along_minus_z():
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0.0, 0.0, -4.0]))
    out = set_interlocutor_distance(pose, 2.0)
    assert np.abs(out.translation - np.array([0, 0, -2.0])).max() < 1e-12


def test_distance_scales_horizontal_component_only():
    pose = Pose(quat_from_euler_yxz(0.3, 0.1, 0.0), np.array([3.0, 0.7, -4.0]))
    out = set_interlocutor_distance(pose, 2.5)
    assert np.abs(out.translation - np.array([1.5, 0.7, -2.0])).max() < 1e-12
    assert np.array_equal(out.rotation, pose.rotation)


def test_distance_degenerate_direction():
    pose = Pose(np.array([1.0, 0, 0, 0]), np.array([0.0, 1.0, 0.0]))
    with pytest.raises(DegenerateDirection):
        set_interlocutor_distance(pose, 1.0)


# --- calibration ---

def test_compose_single_transmitter():
    first = Pose(quat_from_euler_yxz(0.5, 0, 0), np.array([1.0, 0.0, 2.0]))
    poses = compose_calibration([CalibrationEntry(0, Pose.identity())], first)
    assert np.abs(poses[0].matrix() - first.matrix()).max() < 1e-12


def test_compose_second_at_90_degrees():
    rel = Pose(quat_from_axis_angle([0, 1, 0], math.pi / 2), np.array([2.0, 0.0, 0.0]))
    poses = compose_calibration(
        [CalibrationEntry(0, Pose.identity()), CalibrationEntry(1, rel)], Pose.identity()
    )
    assert np.abs(poses[1].matrix() - rel.matrix()).max() < 1e-12


def test_compose_matches_matrix_oracle():
    rng = np.random.default_rng(67)
    first = Pose(quat_normalize(rng.normal(size=4)), rng.normal(size=3))
    rel = Pose(quat_normalize(rng.normal(size=4)), rng.normal(size=3))
    poses = compose_calibration(
        [CalibrationEntry(0, Pose.identity()), CalibrationEntry(1, rel)], first
    )
    assert np.abs(poses[1].matrix() - first.matrix() @ rel.matrix()).max() < 1e-9


def test_compose_requires_identity_first():
    rel = Pose(quat_from_axis_angle([0, 1, 0], 0.3), np.zeros(3))
    with pytest.raises(MissingFirstTransmitter):
        compose_calibration([CalibrationEntry(0, rel)], Pose.identity())
    with pytest.raises(MissingFirstTransmitter):
        compose_calibration([], Pose.identity())


def test_calibration_file_roundtrip(tmp_path):
    entries = [
        CalibrationEntry(0, Pose.identity()),
        CalibrationEntry(1, Pose(quat_from_euler_yxz(math.pi / 2, 0.01, -0.02), np.array([2.4, 0.01, 2.39]))),
    ]
    path = tmp_path / "calibration.txt"
    save_calibration(entries, path)
    loaded = load_calibration(path)
    assert len(loaded) == 2
    for original, back in zip(entries, loaded):
        assert back.transmitter_id == original.transmitter_id
        assert np.abs(back.relative_pose.matrix() - original.relative_pose.matrix()).max() < 1e-12
