"""Temporal depth compression: per-pixel deltas against the previous
reconstruction, run-length coded with nibble varints.

Lossless at the default change threshold of 0. With a threshold T > 0,
deltas of magnitude <= T are emitted as zero runs; because deltas are always
computed against the shared reconstruction (not the raw previous frame),
per-pixel error stays bounded by T with no drift.

A keyframe is a delta frame against an all-zero reference; both sides reset
their reference before coding it. Encoder and decoder hold bit-identical
reconstructions after every successfully decoded frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthImage
from .errors import CorruptStream, DimensionMismatch
from .varint import decode_runs_sparse, encode_sparse_runs


@dataclass(frozen=True)
class DepthCodecConfig:
    width: int
    height: int
    change_threshold_mm: int = 0

    def __post_init__(self) -> None:
        if self.width * self.height <= 0:
            raise DimensionMismatch(f"empty frame geometry {self.width}x{self.height}")
        if self.change_threshold_mm < 0:
            raise ValueError("change threshold must be non-negative")


class DepthEncoder:
    """Single-stream encoder state; serialize access externally."""

    def __init__(self, config: DepthCodecConfig):
        self.config = config
        self._previous = np.zeros(config.height * config.width, dtype=np.uint16)

    @property
    def previous_reconstructed(self) -> DepthImage:
        return DepthImage(self._previous.reshape(self.config.height, self.config.width).copy())

    def encode(self, frame: DepthImage, keyframe: bool = False) -> bytes:
        cfg = self.config
        if (frame.width, frame.height) != (cfg.width, cfg.height):
            raise DimensionMismatch(
                f"frame {frame.width}x{frame.height} vs codec {cfg.width}x{cfg.height}"
            )
        if keyframe:
            self._previous[:] = 0
        current = frame.data.ravel()
        # sparse delta path: work only on pixels that changed
        indices = np.flatnonzero(current != self._previous)
        deltas = current[indices].astype(np.int64) - self._previous[indices]
        if cfg.change_threshold_mm:
            keep = np.abs(deltas) > cfg.change_threshold_mm
            indices = indices[keep]
            deltas = deltas[keep]
        encoded = encode_sparse_runs(indices, deltas, current.size)
        self._previous[indices] = (self._previous[indices] + deltas).astype(np.uint16)
        return encoded


class DepthDecoder:
    """Mirror of DepthEncoder; reproduces its reconstruction bit-exactly."""

    def __init__(self, config: DepthCodecConfig):
        self.config = config
        self._previous = np.zeros(config.height * config.width, dtype=np.uint16)

    @property
    def previous_reconstructed(self) -> DepthImage:
        return DepthImage(self._previous.reshape(self.config.height, self.config.width).copy())

    def decode(self, data: bytes, keyframe: bool = False) -> DepthImage:
        cfg = self.config
        if keyframe:
            self._previous[:] = 0
        indices, deltas, _ = decode_runs_sparse(data, cfg.width * cfg.height)
        if len(indices):
            changed = self._previous[indices] + deltas
            if changed.min() < 0 or changed.max() > 0xFFFF:
                raise CorruptStream("reconstructed depth leaves the 16-bit range")
            self._previous[indices] = changed.astype(np.uint16)
        return DepthImage(self._previous.reshape(cfg.height, cfg.width).copy())
