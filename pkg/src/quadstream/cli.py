"""Command-line entry points.

Subcommands: gen-scene, transmit, receive, simulate, render, bench-codec,
bench-fec, rooms. Every data-path run takes an explicit --seed so results are
reproducible. A --config file of `key = value` lines overrides parsed flags;
keys use the flag spelling with dashes or underscores.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .color_codec import decode_color, encode_color
from .core import ColorImage, Pose
from .depth_codec import DepthCodecConfig, DepthDecoder, DepthEncoder
from .errors import QuadstreamError
from .fec import FecPacket, FountainDecoder, encode_message
from .geometry import (
    RansacParams,
    extract_floor,
    floor_matched_pose,
    register_depth_to_color,
    save_calibration,
)
from .message import VideoMessage
from .render import (
    build_quads,
    coverage_metric,
    export_ply,
    orient_quads,
    rasterize,
    write_ppm,
)
from .scene import PRESETS, SyntheticScene, look_at, wall_fixture
from .session import SessionConfig, run_session
from .transport import (
    ChannelConfig,
    RoomService,
    SignalingClient,
    SignalingServer,
    UdpTransport,
)
from .viewer import FloorTracker, FrameReady, Reassembler


def _parse_host_port(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _apply_config_file(args: argparse.Namespace, path: str | None) -> None:
    """Config file entries override already-parsed flags."""
    if not path:
        return
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not hasattr(args, key):
            raise SystemExit(f"config file key {key!r} is not a known option")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)


def _add_session_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, required=True, help="run seed (required)")
    parser.add_argument("--frames", type=int, default=300)
    parser.add_argument("--cameras", type=int, choices=(1, 2), default=1)
    parser.add_argument("--preset", choices=sorted(PRESETS), default="study")
    parser.add_argument("--redundancy", type=float, default=0.5)
    parser.add_argument("--loss", type=float, default=0.0)
    parser.add_argument("--latency-micros", type=int, default=40_000)
    parser.add_argument("--jitter-micros", type=int, default=5_000)
    parser.add_argument("--no-reordering", action="store_true")
    parser.add_argument("--channel-seed", type=int, default=None, help="defaults to --seed")
    parser.add_argument("--mtu-payload", type=int, default=1164)
    parser.add_argument("--keyframe-interval", type=int, default=64)
    parser.add_argument("--no-background-removal", action="store_true")
    parser.add_argument("--background-near-mm", type=int, default=200)
    parser.add_argument("--background-far-mm", type=int, default=4500)
    parser.add_argument("--enlargement", type=float, default=1.2)
    parser.add_argument("--orient", choices=("billboard", "yaw"), default="billboard")
    parser.add_argument("--render-every", type=int, default=60)
    parser.add_argument("--distance", type=float, default=None, help="interlocutor distance, meters")
    parser.add_argument("--no-figures", action="store_true")
    parser.add_argument("--config", default=None, help="key = value file overriding flags")


def _session_config(args: argparse.Namespace, output_dir: Path | None) -> SessionConfig:
    channel = ChannelConfig(
        loss_probability=args.loss,
        mean_latency_micros=args.latency_micros,
        jitter_micros=args.jitter_micros,
        reordering_allowed=not args.no_reordering,
        seed=args.channel_seed if args.channel_seed is not None else args.seed,
    )
    return SessionConfig(
        preset=args.preset,
        cameras=args.cameras,
        redundancy=args.redundancy,
        channel=channel,
        seed=args.seed,
        frame_count=args.frames,
        output_dir=output_dir,
        mtu_payload=args.mtu_payload,
        keyframe_interval=args.keyframe_interval,
        background_removal=not args.no_background_removal,
        background_near_mm=args.background_near_mm,
        background_far_mm=args.background_far_mm,
        enlargement=args.enlargement,
        orient_mode=args.orient,
        render_every=args.render_every,
        interlocutor_distance=args.distance,
        figures=not args.no_figures,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    config = _session_config(args, Path(args.output_dir))
    report = run_session(config)
    print(report.text.splitlines()[-1])
    if report.report_path:
        print(f"report: {report.report_path}")
    return 0 if report.ok else 1


def cmd_gen_scene(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = SyntheticScene(args.preset, args.cameras, args.seed)
    save_calibration(scene.calibration(), out / "calibration.txt")
    lines = [f"# synthetic scene: preset={args.preset} cameras={args.cameras} seed={args.seed} frames={args.frames}"]
    for cam in range(args.cameras):
        plane = scene.true_floor(cam)
        pose = scene.world_pose(cam)
        lines.append(
            f"camera={cam} floor_normal={plane.normal[0]!r},{plane.normal[1]!r},{plane.normal[2]!r} "
            f"floor_distance={plane.distance!r} "
            f"position={pose.translation[0]!r},{pose.translation[1]!r},{pose.translation[2]!r}"
        )
        frame = scene.frame(cam, 0)
        write_ppm(frame.color, out / f"preview_cam{cam}.ppm")
    (out / "scene_info.txt").write_text("\n".join(lines) + "\n")
    if args.dump_frames:
        for cam in range(args.cameras):
            for index in range(min(args.dump_frames, args.frames)):
                frame = scene.frame(cam, index)
                np.savez_compressed(
                    out / f"frame_{index:05d}_cam{cam}.npz",
                    depth=frame.depth.data,
                    color=frame.color.data,
                )
    print(f"scene written to {out}")
    return 0


def _transmit_pipeline(scene, cam, index, encoder, args):
    frame = scene.frame(cam, index)
    registered = register_depth_to_color(frame)
    floor = extract_floor(
        registered,
        frame.color_intrinsics.scaled(registered.width, registered.height),
        RansacParams(seed=args.seed + index),
    )
    # one-way UDP: keyframes run on cadence only (no return channel)
    keyframe = index % args.keyframe_interval == 0
    depth_bytes = encoder.encode(registered, keyframe=keyframe)
    message = VideoMessage(
        frame_id=index,
        keyframe=keyframe,
        color_width=frame.color.width,
        color_height=frame.color.height,
        depth_width=registered.width,
        depth_height=registered.height,
        floor=floor,
        color_data=encode_color(frame.color),
        depth_data=depth_bytes,
    ).pack()
    return encode_message(
        message,
        args.redundancy,
        prng_seed=(args.seed + index) & 0xFFFFFFFF,
        session_id=args.session_id,
        frame_id=index,
        mtu_payload=args.mtu_payload,
    )


def cmd_transmit(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    dest = _parse_host_port(args.dest)
    if args.signal:
        client = SignalingClient(_parse_host_port(args.signal))
        room = args.room or client.create()
        membership = client.join(room, "transmitter")
        print(f"room {room} token {membership.token} additional={int(membership.additional)}")
    scene = SyntheticScene(args.preset, 1, args.seed)
    encoder = DepthEncoder(
        DepthCodecConfig(scene.depth_intrinsics.width, scene.depth_intrinsics.height)
    )
    transport = UdpTransport()
    sent_packets = 0
    try:
        for index in range(args.frames):
            start = time.monotonic()
            for packet in _transmit_pipeline(scene, 0, index, encoder, args):
                transport.send(packet.to_bytes(), dest)
                sent_packets += 1
            if args.fps > 0:
                elapsed = time.monotonic() - start
                time.sleep(max(0.0, 1.0 / args.fps - elapsed))
    finally:
        transport.close()
    print(f"transmitted {args.frames} frames, {sent_packets} packets to {dest[0]}:{dest[1]}")
    return 0


def cmd_receive(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    listen = _parse_host_port(args.listen)
    out = Path(args.output_dir) if args.output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    transport = UdpTransport(listen)
    if args.print_port:
        print(f"listening on {transport.address[0]}:{transport.address[1]}", flush=True)
    reassembler = Reassembler()
    decoder: DepthDecoder | None = None
    tracker = FloorTracker()
    last_decoded = -1
    lines = []
    deadline = time.monotonic() + args.timeout
    decoded = 0
    try:
        while decoded < args.frames and time.monotonic() < deadline:
            payloads = transport.poll()
            if not payloads:
                time.sleep(0.002)
                continue
            for data in payloads:
                result = reassembler.push(FecPacket.from_bytes(data))
                if not isinstance(result, FrameReady):
                    continue
                message = result.message
                if decoder is None:
                    decoder = DepthDecoder(DepthCodecConfig(message.depth_width, message.depth_height))
                if not message.keyframe and message.frame_id != last_decoded + 1:
                    lines.append(f"frame={message.frame_id} status=stale")
                    continue
                depth = decoder.decode(message.depth_data, keyframe=message.keyframe)
                decode_color(message.color_data, message.color_width, message.color_height)
                tracker.push(message.floor)
                digest = hashlib.sha256(depth.data.tobytes()).hexdigest()
                last_decoded = message.frame_id
                decoded += 1
                lines.append(f"frame={message.frame_id} status=decoded depth_hash={digest}")
    finally:
        transport.close()
    lines.append(f"summary seed={args.seed} decoded={decoded} dropped={reassembler.dropped_count}")
    text = "\n".join(lines) + "\n"
    if out:
        (out / "receive_report.txt").write_text(text)
    print(text, end="")
    return 0 if decoded > 0 else 1


def cmd_render(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.wall:
        return _render_wall(out, args)
    scene = SyntheticScene(args.preset, args.cameras, args.seed)
    intr = scene.color_intrinsics.scaled(scene.depth_intrinsics.width, scene.depth_intrinsics.height)
    placement = Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 0.0, -0.5]))
    first_world = None
    clouds = []
    for cam in range(args.cameras):
        frame = scene.frame(cam, args.frame)
        registered = register_depth_to_color(frame)
        if cam == 0:
            # all placement flows from the first transmitter's floor match
            floor = extract_floor(registered, intr, RansacParams(seed=args.seed))
            first_world = floor_matched_pose(floor, placement)
            world = first_world
        else:
            world = first_world.compose(scene.calibration()[cam].relative_pose)
        clouds.append(build_quads(registered, frame.color, intr, world, args.enlargement))
    anchor = clouds[0].source_pose.apply(np.array([0.0, 0.9, -2.2]))
    viewer_pose = look_at(anchor + np.array([1.1, 0.75, 1.9]), anchor)
    oriented = [orient_quads(c, viewer_pose.translation, args.orient) for c in clouds]
    color_img, depth_img = rasterize(oriented, intr, viewer_pose)
    write_ppm(color_img, out / "render.ppm")
    export_ply(oriented[0], out / "cloud.ply")
    print(f"rendered {sum(len(c) for c in clouds)} quads to {out / 'render.ppm'}")
    return 0


def _render_wall(out: Path, args: argparse.Namespace) -> int:
    fixture = wall_fixture()
    depth = fixture.capture_depth()
    flat = ColorImage(np.full((depth.height, depth.width, 3), 205, dtype=np.uint8))
    silhouette = fixture.silhouette()
    rows = []
    for enlargement in (1.0, 1.1, 1.2):
        cloud = build_quads(depth, flat, fixture.capture_intrinsics, fixture.capture_pose, enlargement)
        for mode, oriented in (
            ("off", cloud),
            ("on", orient_quads(cloud, fixture.viewer_position)),
        ):
            color_img, depth_img = rasterize(oriented, fixture.viewer_intrinsics, fixture.viewer_pose)
            coverage = coverage_metric(depth_img, silhouette)
            name = f"wall_enl{enlargement:.1f}_orient_{mode}"
            write_ppm(color_img, out / f"{name}.ppm")
            rows.append(f"{name} coverage={coverage:.6f}")
    (out / "wall_coverage.txt").write_text("\n".join(rows) + "\n")
    print("\n".join(rows))
    return 0


def cmd_bench_codec(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    out = Path(args.output_dir) if args.output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    scene = SyntheticScene(args.preset, 1, args.seed)
    depth_cfg = DepthCodecConfig(scene.depth_intrinsics.width, scene.depth_intrinsics.height)
    encoder = DepthEncoder(depth_cfg)
    decoder = DepthDecoder(depth_cfg)
    rows = []
    encode_s = decode_s = 0.0
    for index in range(args.frames):
        frame = scene.frame(0, index)
        registered = register_depth_to_color(frame)
        keyframe = index == 0
        t0 = time.perf_counter()
        depth_bytes = encoder.encode(registered, keyframe=keyframe)
        color_bytes = encode_color(frame.color)
        t1 = time.perf_counter()
        decoded = decoder.decode(depth_bytes, keyframe=keyframe)
        decode_color(color_bytes, frame.color.width, frame.color.height)
        t2 = time.perf_counter()
        encode_s += t1 - t0
        decode_s += t2 - t1
        assert np.array_equal(decoded.data, encoder.previous_reconstructed.data)
        raw = registered.data.nbytes + frame.color.data.nbytes
        rows.append(
            {
                "frame": index,
                "raw_bytes": raw,
                "depth_bytes": len(depth_bytes),
                "color_bytes": len(color_bytes),
            }
        )
    total_raw = sum(r["raw_bytes"] for r in rows)
    total_coded = sum(r["depth_bytes"] + r["color_bytes"] for r in rows)
    lines = [
        f"frame={r['frame']} raw_bytes={r['raw_bytes']} depth_bytes={r['depth_bytes']} color_bytes={r['color_bytes']}"
        for r in rows
    ]
    lines.append(
        f"summary frames={args.frames} ratio={total_raw / total_coded:.3f} "
        f"encode_ms_per_frame={encode_s / args.frames * 1000:.2f} "
        f"decode_ms_per_frame={decode_s / args.frames * 1000:.2f}"
    )
    text = "\n".join(lines) + "\n"
    print(lines[-1])
    if out:
        (out / "bench_codec.txt").write_text(text)
        from . import figures

        figures.render_codec_bench_figure(rows, out)
    return 0


def cmd_bench_fec(args: argparse.Namespace) -> int:
    _apply_config_file(args, args.config)
    out = Path(args.output_dir) if args.output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    losses = [float(x) for x in args.losses.split(",")]
    message = rng.integers(0, 256, size=args.k * args.payload, dtype=np.uint8).tobytes()
    rows = []
    for loss in losses:
        successes = 0
        for trial in range(args.trials):
            packets = encode_message(
                message,
                args.redundancy,
                prng_seed=int(rng.integers(0, 2**32)),
                mtu_payload=args.payload,
            )
            kept = [p for p in packets if rng.random() >= loss]
            decoder = FountainDecoder(packets[0]) if kept else None
            done = False
            for packet in kept:
                if decoder.add(packet):
                    done = True
                    break
            if done and decoder.message() == message:
                successes += 1
        rows.append({"loss": loss, "success_rate": successes / args.trials})
    lines = [f"loss={r['loss']:.3f} success_rate={r['success_rate']:.4f}" for r in rows]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if out:
        (out / "bench_fec.txt").write_text(text)
        from . import figures

        figures.render_fec_bench_figure(rows, out)
    return 0


def cmd_rooms(args: argparse.Namespace) -> int:
    if args.action == "serve":
        service = RoomService(seed=args.seed)
        server = SignalingServer((args.host, args.port), service)
        print(f"signaling on {server.server_address[0]}:{server.server_address[1]}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0
    client = SignalingClient((args.host, args.port))
    try:
        if args.action == "create":
            print(client.create())
        elif args.action == "list":
            rooms = client.list_rooms()
            for room in rooms:
                print(f"{room.room_id} transmitters={room.transmitter_count} viewers={room.viewer_count}")
            if not rooms:
                print("(no rooms)")
        elif args.action == "join":
            membership = client.join(args.room, args.role)
            print(f"{membership.token} additional={int(membership.additional)}")
        elif args.action == "leave":
            client.leave(args.token)
            print("left")
    finally:
        client.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="end-to-end session over the simulated channel")
    _add_session_flags(p)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-scene", help="write synthetic scene artifacts")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--cameras", type=int, choices=(1, 2), default=1)
    p.add_argument("--preset", choices=sorted(PRESETS), default="study")
    p.add_argument("--dump-frames", type=int, default=0, help="also dump N frames as npz")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("transmit", help="stream packets over UDP")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dest", required=True, help="host:port")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--preset", choices=sorted(PRESETS), default="study")
    p.add_argument("--redundancy", type=float, default=0.5)
    p.add_argument("--mtu-payload", type=int, default=1164)
    p.add_argument("--keyframe-interval", type=int, default=64)
    p.add_argument("--session-id", type=int, default=1)
    p.add_argument("--fps", type=float, default=0.0, help="0 = no pacing")
    p.add_argument("--signal", default=None, help="signaling host:port")
    p.add_argument("--room", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("receive", help="receive packets over UDP and decode")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--listen", required=True, help="host:port (port 0 = ephemeral)")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--print-port", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_receive)

    p = sub.add_parser("render", help="render a scene frame (or the wall fixture) to files")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--cameras", type=int, choices=(1, 2), default=1)
    p.add_argument("--preset", choices=sorted(PRESETS), default="study")
    p.add_argument("--enlargement", type=float, default=1.2)
    p.add_argument("--orient", choices=("billboard", "yaw"), default="billboard")
    p.add_argument("--wall", action="store_true", help="render the wall comparison fixture")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench-codec", help="codec size and speed over a synthetic sequence")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--preset", choices=sorted(PRESETS), default="study")
    p.add_argument("--output-dir", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_bench_codec)

    p = sub.add_parser("bench-fec", help="fountain decode success rate vs loss")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--k", type=int, default=48)
    p.add_argument("--payload", type=int, default=256)
    p.add_argument("--redundancy", type=float, default=0.5)
    p.add_argument("--losses", default="0.0,0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_bench_fec)

    p = sub.add_parser("rooms", help="signaling service and client")
    p.add_argument("action", choices=("serve", "create", "list", "join", "leave"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--seed", type=int, default=0, help="id generator seed (serve)")
    p.add_argument("--room", default=None)
    p.add_argument("--role", choices=("transmitter", "viewer"), default="viewer")
    p.add_argument("--token", default=None)
    p.set_defaults(func=cmd_rooms)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QuadstreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
