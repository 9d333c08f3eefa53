"""Receive side: per-frame packet reassembly and floor smoothing.

The reassembler keeps one fountain decoder per in-flight frame and applies a
real-time policy: once a frame completes, anything older is abandoned. An
abandoned frame is reported as dropped the next time one of its packets shows
up. Workspaces also fall off a fixed horizon so a stalled frame cannot pin
memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FloorPlane
from .fec import FecPacket, FountainDecoder
from .message import VideoMessage

PENDING = "pending"
_DONE = "done"
_DROPPED = "dropped"

REASSEMBLY_HORIZON = 64


@dataclass(frozen=True)
class FrameReady:
    message: VideoMessage


@dataclass(frozen=True)
class FrameDropped:
    frame_id: int


class Reassembler:
    """Feeds packets to per-frame decoders; single writer per session."""

    def __init__(self, session_id: int | None = None, horizon: int = REASSEMBLY_HORIZON):
        self.session_id = session_id
        self.horizon = horizon
        self._decoders: dict[int, FountainDecoder] = {}
        self._status: dict[int, str] = {}
        self.newest_completed = -1
        self._max_seen = -1
        self.completed_count = 0
        self.dropped_count = 0

    def push(self, packet: FecPacket):
        """Returns PENDING, FrameReady, or FrameDropped for this packet's frame."""
        if self.session_id is not None and packet.session_id != self.session_id:
            return PENDING  # foreign session, ignore
        fid = packet.frame_id
        self._max_seen = max(self._max_seen, fid)
        self._evict_beyond_horizon()

        status = self._status.get(fid)
        if status == _DONE:
            return PENDING
        if status == _DROPPED:
            return FrameDropped(fid)
        if fid <= self.newest_completed:
            self._mark_dropped(fid)
            return FrameDropped(fid)

        decoder = self._decoders.get(fid)
        if decoder is None:
            decoder = FountainDecoder(packet)
            self._decoders[fid] = decoder
        if not decoder.add(packet):
            return PENDING

        raw = decoder.message()
        del self._decoders[fid]
        self._status[fid] = _DONE
        self.completed_count += 1
        self.newest_completed = max(self.newest_completed, fid)
        for stale in [f for f in self._decoders if f < fid]:
            del self._decoders[stale]
            self._mark_dropped(stale)
        return FrameReady(VideoMessage.unpack(raw))

    def _mark_dropped(self, fid: int) -> None:
        if self._status.get(fid) != _DROPPED:
            self._status[fid] = _DROPPED
            self.dropped_count += 1

    def _evict_beyond_horizon(self) -> None:
        floor = self._max_seen - self.horizon
        for fid in [f for f in self._decoders if f <= floor]:
            del self._decoders[fid]
            self._mark_dropped(fid)
        for fid in [f for f in self._status if f <= floor - self.horizon]:
            del self._status[fid]

    def incomplete_frames(self) -> list[int]:
        """Frames still holding a workspace (e.g. at end of session)."""
        return sorted(self._decoders)


class FloorTracker:
    """Median smoothing of the per-frame floor planes over a sliding window."""

    def __init__(self, window: int = 30):
        self.window = window
        self._normals: list[np.ndarray] = []
        self._distances: list[float] = []

    def push(self, plane: FloorPlane) -> None:
        self._normals.append(np.asarray(plane.normal, dtype=float))
        self._distances.append(float(plane.distance))
        if len(self._normals) > self.window:
            self._normals.pop(0)
            self._distances.pop(0)

    def smoothed(self) -> FloorPlane:
        if not self._normals:
            raise ValueError("no floor observations yet")
        normal = np.median(np.stack(self._normals), axis=0)
        norm = float(np.linalg.norm(normal))
        if norm < 1e-9 or normal[1] <= 0:
            normal = np.array([0.0, 1.0, 0.0])
            norm = 1.0
        return FloorPlane(normal / norm, float(np.median(self._distances)))
