"""quadstream: an RGBD telepresence streaming toolkit.

Capture-side processing (background removal, depth-to-color registration,
floor extraction), temporal depth and lossless color codecs, a systematic
GF(256) fountain code over simulated or real datagram channels, room
signaling, and a floor-matched quad-splat viewer with software rasterization.
"""

from .color_codec import decode_color, encode_color
from .core import (
    CameraIntrinsics,
    ColorImage,
    DepthImage,
    FloorPlane,
    Pose,
    RgbdFrame,
    quat_from_euler_yxz,
    quat_to_euler_yxz,
    validate_frame,
)
from .depth_codec import DepthCodecConfig, DepthDecoder, DepthEncoder
from .fec import (
    DEFAULT_MTU_PAYLOAD,
    FecPacket,
    FountainDecoder,
    encode_message,
    fountain_encode,
    packet_count,
    packetize,
)
from .geometry import (
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
)
from .gf256 import gf256_inv, gf256_mul
from .message import VideoMessage
from .render import (
    QuadCloud,
    build_quads,
    coverage_metric,
    export_ply,
    orient_quads,
    rasterize,
    write_ppm,
)
from .scene import PRESETS, SyntheticScene, preset_intrinsics, wall_fixture
from .session import SessionConfig, SessionReport, run_session
from .transport import (
    ChannelConfig,
    RoomService,
    SignalingClient,
    SignalingServer,
    SimulatedChannel,
    UdpTransport,
)
from .viewer import PENDING, FloorTracker, FrameDropped, FrameReady, Reassembler

__version__ = "0.1.0"
