from pathlib import Path

import numpy as np
import pytest

from quadstream.core import FloorPlane
from quadstream.errors import MalformedMessage
from quadstream.message import HEADER_SIZE, VideoMessage

FIXTURES = Path(__file__).parent / "fixtures"


def sample_message():
    return VideoMessage(
        frame_id=7,
        keyframe=True,
        color_width=720,
        color_height=360,
        depth_width=320,
        depth_height=180,
        floor=FloorPlane(np.array([0.0, 1.0, 0.0]), -1.45),
        color_data=b"\x00colorbytes",
        depth_data=b"depthbytes!",
    )


def test_roundtrip():
    msg = sample_message()
    back = VideoMessage.unpack(msg.pack())
    assert back.frame_id == 7 and back.keyframe
    assert (back.color_width, back.color_height) == (720, 360)
    assert (back.depth_width, back.depth_height) == (320, 180)
    assert abs(back.floor.distance - -1.45) < 1e-6
    assert back.color_data == msg.color_data
    assert back.depth_data == msg.depth_data


def test_header_is_37_bytes():
    assert HEADER_SIZE == 37
    msg = sample_message()
    assert len(msg.pack()) == HEADER_SIZE + len(msg.color_data) + len(msg.depth_data)


def test_rejects_short_and_inconsistent():
    msg = sample_message()
    data = msg.pack()
    with pytest.raises(MalformedMessage):
        VideoMessage.unpack(data[:20])
    with pytest.raises(MalformedMessage):
        VideoMessage.unpack(data[:-1])
    with pytest.raises(MalformedMessage):
        VideoMessage.unpack(data + b"extra")


def test_rejects_bad_floor_and_flag():
    msg = sample_message()
    data = bytearray(msg.pack())
    data[4] = 2  # keyframe flag
    with pytest.raises(MalformedMessage):
        VideoMessage.unpack(bytes(data))
    tilted = bytearray(msg.pack())
    tilted[13:17] = b"\x00\x00\x00\x00"  # zero out nx..ny -> non-unit normal
    tilted[17:21] = b"\x00\x00\x00\x00"
    with pytest.raises(MalformedMessage):
        VideoMessage.unpack(bytes(tilted))


def test_golden_fixture():
    blob = (FIXTURES / "video_message_golden.bin").read_bytes()
    msg = VideoMessage.unpack(blob)
    assert msg.frame_id == 9
    assert not msg.keyframe
    assert (msg.color_width, msg.color_height) == (1280, 720)
    assert (msg.depth_width, msg.depth_height) == (640, 360)
    assert msg.color_data == b"CC"
    assert msg.depth_data == b"DDD"
    assert msg.pack() == blob
