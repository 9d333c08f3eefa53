"""Per-frame video message: the serialized bundle of color, depth, and floor.

Binary layout, little-endian, frozen:

    frameId      u32
    keyframe     u8 (0 or 1)
    colorWidth   u16
    colorHeight  u16
    depthWidth   u16
    depthHeight  u16
    floor        4 x f32 (nx, ny, nz, d)
    colorLen     u32
    depthLen     u32
    color bytes  colorLen
    depth bytes  depthLen
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import FloorPlane
from .errors import MalformedMessage

_HEADER = struct.Struct("<IBHHHHffffII")
HEADER_SIZE = _HEADER.size
_FLOOR_NORM_TOL = 1e-4  # f32 rounding budget


@dataclass(frozen=True)
class VideoMessage:
    frame_id: int
    keyframe: bool
    color_width: int
    color_height: int
    depth_width: int
    depth_height: int
    floor: FloorPlane
    color_data: bytes
    depth_data: bytes

    def pack(self) -> bytes:
        n = self.floor.normal
        header = _HEADER.pack(
            self.frame_id,
            1 if self.keyframe else 0,
            self.color_width,
            self.color_height,
            self.depth_width,
            self.depth_height,
            float(n[0]),
            float(n[1]),
            float(n[2]),
            float(self.floor.distance),
            len(self.color_data),
            len(self.depth_data),
        )
        return header + self.color_data + self.depth_data

    @classmethod
    def unpack(cls, data: bytes) -> "VideoMessage":
        if len(data) < HEADER_SIZE:
            raise MalformedMessage(f"{len(data)} bytes is shorter than the {HEADER_SIZE}-byte header")
        (
            frame_id,
            keyframe,
            color_w,
            color_h,
            depth_w,
            depth_h,
            nx,
            ny,
            nz,
            distance,
            color_len,
            depth_len,
        ) = _HEADER.unpack_from(data)
        if keyframe > 1:
            raise MalformedMessage(f"keyframe flag {keyframe} is not 0/1")
        if HEADER_SIZE + color_len + depth_len != len(data):
            raise MalformedMessage(
                f"{len(data)} bytes but header claims {HEADER_SIZE} + {color_len} + {depth_len}"
            )
        norm = math.sqrt(nx * nx + ny * ny + nz * nz)
        if abs(norm - 1.0) > _FLOOR_NORM_TOL or ny <= 0:
            raise MalformedMessage(f"floor normal ({nx}, {ny}, {nz}) is not an upward unit vector")
        floor = FloorPlane(np.array([nx, ny, nz]) / norm, distance)
        color_data = data[HEADER_SIZE : HEADER_SIZE + color_len]
        depth_data = data[HEADER_SIZE + color_len :]
        return cls(frame_id, bool(keyframe), color_w, color_h, depth_w, depth_h, floor, color_data, depth_data)
