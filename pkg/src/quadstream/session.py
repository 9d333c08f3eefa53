"""End-to-end simulated session: synthetic capture through a lossy channel to
the viewer, with a deterministic line-delimited report.

Per frame and camera the transmitter removes background, registers depth into
color geometry, extracts the floor, encodes depth (temporal) and color
(lossless reference codec), bundles a video message, fountain-encodes it, and
sends the packets through the simulated channel. The receiver reassembles,
decodes, verifies depth against the encoder-side reconstruction hash, smooths
the floor, and optionally renders the placed quad clouds to PPM files.

Keyframes are sent on a fixed cadence and on receiver-reported loss; in this
in-process simulation the loss report is a flag the driver carries across,
standing in for a feedback message on the return channel. Loss is observable
only once something completes (a drop report or a stale frame), so the
cadence is the backstop that bounds resynchronization through a blackout.

Frame status vocabulary:
    decoded   message recovered and depth applied to the temporal chain
    stale     message recovered but unusable (its delta base was lost)
    dropped   abandoned by the real-time policy or never completed
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .color_codec import decode_color, encode_color
from .core import ColorImage, DepthImage, Pose
from .depth_codec import DepthCodecConfig, DepthDecoder, DepthEncoder
from .errors import NoFloorFound, QuadstreamError
from .fec import FecPacket, encode_message
from .geometry import (
    RansacParams,
    compose_calibration,
    extract_floor,
    floor_matched_pose,
    register_depth_to_color,
    remove_background,
    set_interlocutor_distance,
)
from .message import VideoMessage
from .render import build_quads, coverage_metric, orient_quads, rasterize, write_ppm
from .scene import FRAME_INTERVAL_MICROS, SyntheticScene, look_at
from .transport import ChannelConfig, SimulatedChannel
from .viewer import FloorTracker, FrameDropped, FrameReady, Reassembler

DEFAULT_KEYFRAME_INTERVAL = 64


@dataclass(frozen=True)
class SessionConfig:
    preset: str = "default"
    cameras: int = 1
    redundancy: float = 0.5
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    seed: int = 0
    frame_count: int = 300
    output_dir: Path | None = None
    mtu_payload: int = 1164
    keyframe_interval: int = DEFAULT_KEYFRAME_INTERVAL
    background_removal: bool = True
    background_near_mm: int = 200
    background_far_mm: int = 4500
    enlargement: float = 1.2
    orient_mode: str = "billboard"
    render_every: int = 0
    interlocutor_distance: float | None = None
    figures: bool = True

    def __post_init__(self) -> None:
        if self.cameras not in (1, 2):
            raise ValueError("cameras must be 1 or 2")
        if self.redundancy < 0:
            raise ValueError("redundancy must be non-negative")
        if self.frame_count < 1:
            raise ValueError("need at least one frame")


@dataclass
class SessionReport:
    config: SessionConfig
    records: list[dict]
    summary: dict
    text: str
    report_path: Path | None = None

    @property
    def ok(self) -> bool:
        return self.summary["hash_mismatches"] == 0


class _Receiver:
    """Per-camera receive state: reassembly, temporal decode, floor tracking."""

    def __init__(self, session_id: int, depth_config: DepthCodecConfig):
        self.reassembler = Reassembler(session_id=session_id)
        self.depth_decoder = DepthDecoder(depth_config)
        self.floor_tracker = FloorTracker()
        self.last_decoded = -1
        self.need_keyframe = False
        self.latest_depth: DepthImage | None = None
        self.latest_color: ColorImage | None = None
        self.events: dict[int, dict] = {}

    def ingest(self, packet: FecPacket) -> int | None:
        """Returns a frame id when that frame just decoded, else None."""
        result = self.reassembler.push(packet)
        if isinstance(result, FrameDropped):
            if result.frame_id > self.last_decoded:
                self.need_keyframe = True
            return None
        if not isinstance(result, FrameReady):
            return None
        message = result.message
        fid = message.frame_id
        if not message.keyframe and fid != self.last_decoded + 1:
            self.events.setdefault(fid, {})["status"] = "stale"
            self.need_keyframe = True
            return None
        depth = self.depth_decoder.decode(message.depth_data, keyframe=message.keyframe)
        color = decode_color(message.color_data, message.color_width, message.color_height)
        digest = hashlib.sha256(depth.data.tobytes()).hexdigest()
        self.events.setdefault(fid, {})["status"] = "decoded"
        self.events[fid]["decoded_hash"] = digest
        self.floor_tracker.push(message.floor)
        self.last_decoded = fid
        self.latest_depth = depth
        self.latest_color = color
        return fid


def _derive_seed(base: int, camera: int, frame: int) -> int:
    return (base * 2654435761 + camera * 40503 + frame * 2246822519 + 1) & 0xFFFFFFFF


def _transmit_frame(scene, cam, index, config, encoder, receiver, channel,
                    render_intr, last_floor, session_base, now) -> dict:
    frame = scene.frame(cam, index)
    depth = frame.depth
    if config.background_removal:
        depth = remove_background(depth, config.background_near_mm, config.background_far_mm)
    registered = register_depth_to_color(replace(frame, depth=depth))
    try:
        floor = extract_floor(
            registered, render_intr, RansacParams(seed=_derive_seed(config.seed, cam, index))
        )
        last_floor[cam] = floor
    except NoFloorFound:
        floor = last_floor[cam]
        if floor is None:
            raise QuadstreamError("no floor found and no earlier plane to reuse") from None

    keyframe = index % config.keyframe_interval == 0 or receiver.need_keyframe
    receiver.need_keyframe = False
    depth_bytes = encoder.encode(registered, keyframe=keyframe)
    encoder_hash = hashlib.sha256(encoder.previous_reconstructed.data.tobytes()).hexdigest()
    color_bytes = encode_color(frame.color)
    message = VideoMessage(
        frame_id=index,
        keyframe=keyframe,
        color_width=frame.color.width,
        color_height=frame.color.height,
        depth_width=registered.width,
        depth_height=registered.height,
        floor=floor,
        color_data=color_bytes,
        depth_data=depth_bytes,
    ).pack()
    packets = encode_message(
        message,
        config.redundancy,
        prng_seed=_derive_seed(config.seed ^ 0x5EED, cam, index),
        session_id=session_base + cam,
        frame_id=index,
        mtu_payload=config.mtu_payload,
    )
    for packet in packets:
        channel.send(packet.to_bytes(), now)
    return {
        "frame": index,
        "cam": cam,
        "keyframe": int(keyframe),
        "k": packets[0].source_count,
        "n": len(packets),
        "msg_bytes": len(message),
        "depth_bytes": len(depth_bytes),
        "color_bytes": len(color_bytes),
        "encoder_hash": encoder_hash,
    }


def run_session(config: SessionConfig) -> SessionReport:
    scene = SyntheticScene(config.preset, config.cameras, config.seed)
    out_dir = Path(config.output_dir) if config.output_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    session_base = (config.seed * 7919 + 1) & 0x7FFFFFFF
    depth_intr = scene.depth_intrinsics
    render_intr = scene.color_intrinsics.scaled(depth_intr.width, depth_intr.height)
    depth_cfg = DepthCodecConfig(depth_intr.width, depth_intr.height)

    encoders = [DepthEncoder(depth_cfg) for _ in range(config.cameras)]
    channels = [
        SimulatedChannel(replace(config.channel, seed=config.channel.seed + cam))
        for cam in range(config.cameras)
    ]
    receivers = [
        _Receiver(session_base + cam, depth_cfg) for cam in range(config.cameras)
    ]
    calibration = scene.calibration()

    placement = Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 0.0, -0.5]))
    if config.interlocutor_distance is not None:
        placement = set_interlocutor_distance(placement, config.interlocutor_distance)

    records: list[dict] = []
    last_floor = [None] * config.cameras
    render_records: list[dict] = []
    renders_pending: list[int] = []
    renders_queued: set[int] = set()

    def ingest_deliveries(now: int) -> None:
        for cam in range(config.cameras):
            for payload in channels[cam].poll(now):
                fid = receivers[cam].ingest(FecPacket.from_bytes(payload))
                if (
                    fid is not None
                    and config.render_every
                    and fid % config.render_every == 0
                    and fid not in renders_queued
                ):
                    renders_queued.add(fid)
                    renders_pending.append(fid)

    for index in range(config.frame_count):
        now = index * FRAME_INTERVAL_MICROS
        for cam in range(config.cameras):
            try:
                record = _transmit_frame(
                    scene, cam, index, config, encoders[cam], receivers[cam],
                    channels[cam], render_intr, last_floor, session_base, now,
                )
            except QuadstreamError as exc:
                raise QuadstreamError(f"frame {index} camera {cam}: {exc}") from exc
            records.append(record)

        ingest_deliveries(now + FRAME_INTERVAL_MICROS - 1)
        _render_pending(
            renders_pending, render_records, receivers, scene, calibration, placement,
            config, render_intr, out_dir,
        )

    drain = config.frame_count * FRAME_INTERVAL_MICROS
    drain += config.channel.mean_latency_micros + config.channel.jitter_micros + 1
    ingest_deliveries(drain)
    _render_pending(
        renders_pending, render_records, receivers, scene, calibration, placement,
        config, render_intr, out_dir,
    )

    # fold receiver events into the per-message records
    hash_mismatches = 0
    counts = {"decoded": 0, "stale": 0, "dropped": 0}
    for record in records:
        event = receivers[record["cam"]].events.get(record["frame"], {})
        status = event.get("status", "dropped")
        record["status"] = status
        counts[status] += 1
        if status == "decoded":
            record["hash_ok"] = int(event["decoded_hash"] == record["encoder_hash"])
            hash_mismatches += 1 - record["hash_ok"]
        else:
            record["hash_ok"] = ""

    packets_sent = sum(c.sent for c in channels)
    packets_delivered = sum(c.delivered for c in channels)
    packets_dropped = sum(c.dropped for c in channels)
    messages = len(records)
    completed = counts["decoded"] + counts["stale"]
    summary = {
        "frames": config.frame_count,
        "cameras": config.cameras,
        "messages": messages,
        "decoded": counts["decoded"],
        "stale": counts["stale"],
        "dropped": counts["dropped"],
        "completed": completed,
        "completion_ratio": completed / messages,
        "hash_mismatches": hash_mismatches,
        "bytes_sent": sum(r["msg_bytes"] for r in records),
        "packets_sent": packets_sent,
        "packets_delivered": packets_delivered,
        "packets_dropped": packets_dropped,
        "renders": len(render_records),
        "mean_coverage": (
            sum(r["coverage"] for r in render_records) / len(render_records)
            if render_records
            else ""
        ),
    }

    text = _format_report(config, records, render_records, summary)
    report_path = None
    if out_dir is not None:
        report_path = out_dir / "report.txt"
        report_path.write_text(text)
        if config.figures:
            from . import figures

            figures.render_session_figures(records, render_records, summary, out_dir)
    return SessionReport(config, records, summary, text, report_path)


def _render_pending(pending, render_records, receivers, scene, calibration, placement,
                    config, render_intr, out_dir):
    while pending:
        fid = pending.pop(0)
        if any(r.latest_depth is None for r in receivers):
            continue
        first_floor = receivers[0].floor_tracker.smoothed()
        world_first = floor_matched_pose(first_floor, placement)
        world_poses = compose_calibration(calibration, world_first)
        clouds = []
        for cam, receiver in enumerate(receivers):
            cloud = build_quads(
                receiver.latest_depth,
                receiver.latest_color,
                render_intr,
                world_poses[cam],
                config.enlargement,
            )
            clouds.append(cloud)

        figure_anchor = world_first.apply(np.array([0.0, 0.9, -2.2]))
        viewer_pose = look_at(figure_anchor + np.array([1.1, 0.75, 1.9]), figure_anchor)
        oriented = [orient_quads(c, viewer_pose.translation, config.orient_mode) for c in clouds]
        color, depth = rasterize(oriented, render_intr, viewer_pose)

        # silhouette from the matching viewpoint expressed in capture space
        capture_from_world = scene.world_pose(0).compose(world_first.inverse())
        silhouette_pose = capture_from_world.compose(viewer_pose)
        silhouette = scene.figure_silhouette(silhouette_pose, render_intr, fid)
        coverage = coverage_metric(depth, silhouette)
        record = {"frame": fid, "coverage": coverage}
        render_records.append(record)
        if out_dir is not None:
            write_ppm(color, out_dir / f"render_{fid:05d}.ppm")


def _format_report(config, records, render_records, summary) -> str:
    lines = ["# quadstream session report"]
    channel = config.channel
    config_items = [
        ("preset", config.preset),
        ("cameras", config.cameras),
        ("frames", config.frame_count),
        ("seed", config.seed),
        ("redundancy", _fmt(config.redundancy)),
        ("mtu_payload", config.mtu_payload),
        ("keyframe_interval", config.keyframe_interval),
        ("loss", _fmt(channel.loss_probability)),
        ("latency_micros", channel.mean_latency_micros),
        ("jitter_micros", channel.jitter_micros),
        ("reordering", int(channel.reordering_allowed)),
        ("channel_seed", channel.seed),
        ("background_removal", int(config.background_removal)),
        ("enlargement", _fmt(config.enlargement)),
        ("orient_mode", config.orient_mode),
        ("render_every", config.render_every),
    ]
    lines.append("config " + " ".join(f"{k}={v}" for k, v in config_items))
    for record in records:
        fields = [
            f"frame={record['frame']}",
            f"cam={record['cam']}",
            f"keyframe={record['keyframe']}",
            f"k={record['k']}",
            f"n={record['n']}",
            f"msg_bytes={record['msg_bytes']}",
            f"depth_bytes={record['depth_bytes']}",
            f"color_bytes={record['color_bytes']}",
            f"status={record['status']}",
            f"hash_ok={record['hash_ok']}",
        ]
        lines.append(" ".join(fields))
    for record in render_records:
        lines.append(f"render frame={record['frame']} coverage={_fmt(record['coverage'])}")
    summary_fields = " ".join(
        f"{key}={_fmt(value) if isinstance(value, float) else value}"
        for key, value in summary.items()
    )
    lines.append("summary " + summary_fields)
    return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    return f"{value:.6f}"
