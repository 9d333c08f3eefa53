"""Reference lossless color codec (codec id 0).

Stream layout: one codec-id byte, then three channel planes (R, G, B). Each
plane is a raw origin byte followed by a run/varint delta stream over the
remaining width*height - 1 pixels in row-major order. A pixel predicts from
its left neighbor; the first pixel of a row predicts from the first pixel of
the row above.

Codec id 1 is reserved for standardized codecs and rejected at decode, which
keeps the wire format open for lossy plug-ins without changing the message
framing.
"""

from __future__ import annotations

import numpy as np

from .core import ColorImage
from .errors import CorruptStream, TruncatedStream, UnknownCodecId
from .varint import decode_runs, encode_runs

REFERENCE_CODEC_ID = 0
RESERVED_CODEC_ID = 1


def encode_color(image: ColorImage) -> bytes:
    parts = [bytes([REFERENCE_CODEC_ID])]
    pixels = image.data.astype(np.int64)
    for channel in range(3):
        plane = pixels[:, :, channel]
        reference = np.empty_like(plane)
        reference[:, 1:] = plane[:, :-1]
        reference[1:, 0] = plane[:-1, 0]
        reference[0, 0] = plane[0, 0]  # origin delta forced to 0, then dropped
        deltas = (plane - reference).ravel()[1:]
        parts.append(bytes([int(plane[0, 0])]))
        parts.append(encode_runs(deltas))
    return b"".join(parts)


def decode_color(data: bytes, width: int, height: int) -> ColorImage:
    if len(data) < 1:
        raise TruncatedStream("empty color stream")
    codec_id = data[0]
    if codec_id != REFERENCE_CODEC_ID:
        raise UnknownCodecId(f"codec id {codec_id} not supported")
    offset = 1
    planes = []
    for channel in range(3):
        if offset >= len(data):
            raise TruncatedStream(f"color stream ended before plane {channel}")
        origin = data[offset]
        offset += 1
        deltas, used = decode_runs(data[offset:], width * height - 1)
        offset += used
        planes.append(_reconstruct_plane(origin, deltas, width, height))
    return ColorImage(np.stack(planes, axis=2))


def _reconstruct_plane(origin: int, deltas: np.ndarray, width: int, height: int) -> np.ndarray:
    grid = np.empty((height, width), dtype=np.int64)
    grid.ravel()[0] = 0
    grid.ravel()[1:] = deltas
    first_col = origin + np.cumsum(grid[:, 0])
    grid[:, 0] = first_col
    plane = np.cumsum(grid, axis=1)
    if plane.min() < 0 or plane.max() > 0xFF:
        raise CorruptStream("reconstructed color leaves the 8-bit range")
    return plane.astype(np.uint8)
