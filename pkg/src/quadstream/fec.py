"""Packetization and a systematic random-linear fountain code over GF(256).

A message is split into k fixed-size source blocks. Packets 0..k-1 carry the
blocks verbatim; packets k.. carry random linear combinations whose
coefficient rows are regenerated from the packet header alone, so repair
payloads need no embedded coefficients. At the default redundancy of 0.5 a
message ships as ceil(1.5 * k) packets.

Packet header, little-endian, 36 bytes, frozen:

    offset  size  field
    0       2     magic 0x54 0x47
    2       1     version = 1
    3       1     type: 0 video, 1 reserved for audio
    4       4     sessionId
    8       4     frameId
    12      2     packetIndex
    14      2     sourceCount k
    16      4     messageLen
    20      4     prngSeed
    24      2     payloadLen
    26      10    reserved, zero

Coefficient rows: splitmix64 seeded with
``prngSeed XOR (packetIndex * 0x9E3779B97F4A7C15)``; each 64-bit output
yields eight coefficient bytes, least significant byte first. An all-zero
row is redrawn with the seed state incremented by one.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyMessage,
    InconsistentHeader,
    MalformedPacket,
    PayloadLengthMismatch,
)
from .gf256 import INV_TABLE, MUL_TABLE

HEADER_MAGIC = b"TG"
HEADER_VERSION = 1
HEADER_SIZE = 36
PACKET_TYPE_VIDEO = 0
PACKET_TYPE_AUDIO_RESERVED = 1
DEFAULT_MTU_PAYLOAD = 1164  # 1200-byte datagram minus the 36-byte header

_HEADER_STRUCT = struct.Struct("<2sBBIIHHIIH10s")
assert _HEADER_STRUCT.size == HEADER_SIZE

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MIX1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class FecPacket:
    session_id: int
    frame_id: int
    packet_index: int
    source_count: int
    message_len: int
    prng_seed: int
    payload: bytes
    packet_type: int = PACKET_TYPE_VIDEO

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def is_systematic(self) -> bool:
        return self.packet_index < self.source_count

    def to_bytes(self) -> bytes:
        header = _HEADER_STRUCT.pack(
            HEADER_MAGIC,
            HEADER_VERSION,
            self.packet_type,
            self.session_id,
            self.frame_id,
            self.packet_index,
            self.source_count,
            self.message_len,
            self.prng_seed,
            len(self.payload),
            b"\x00" * 10,
        )
        return header + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "FecPacket":
        if len(data) < HEADER_SIZE:
            raise MalformedPacket(f"datagram of {len(data)} bytes is shorter than the header")
        magic, version, ptype, session_id, frame_id, index, k, mlen, seed, plen, _reserved = (
            _HEADER_STRUCT.unpack_from(data)
        )
        if magic != HEADER_MAGIC:
            raise MalformedPacket(f"bad magic {magic!r}")
        if version != HEADER_VERSION:
            raise MalformedPacket(f"unsupported version {version}")
        payload = data[HEADER_SIZE:]
        if len(payload) != plen:
            raise MalformedPacket(f"payload is {len(payload)} bytes, header says {plen}")
        return cls(session_id, frame_id, index, k, mlen, seed, payload, ptype)


def splitmix64(state: int, count: int) -> np.ndarray:
    """`count` sequential splitmix64 outputs starting from `state`."""
    steps = (np.arange(1, count + 1, dtype=np.uint64)) * np.uint64(_SPLITMIX_GAMMA)
    z = np.uint64(state & _MASK64) + steps
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_SPLITMIX_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_SPLITMIX_MIX2)
    return z ^ (z >> np.uint64(31))


def coefficient_row(prng_seed: int, packet_index: int, k: int) -> np.ndarray:
    """Deterministic GF(256) coefficients for one repair packet."""
    state = (prng_seed ^ ((packet_index * _SPLITMIX_GAMMA) & _MASK64)) & _MASK64
    while True:
        words = splitmix64(state, (k + 7) // 8)
        row = words.astype("<u8").view(np.uint8)[:k]
        if row.any():
            return row.copy()
        state = (state + 1) & _MASK64


def packetize(message: bytes, mtu_payload: int = DEFAULT_MTU_PAYLOAD) -> np.ndarray:
    """Split a message into k zero-padded blocks of mtu_payload bytes."""
    if mtu_payload < 1:
        raise ValueError("mtu payload must be at least 1 byte")
    if len(message) == 0:
        raise EmptyMessage("cannot packetize an empty message")
    k = -(-len(message) // mtu_payload)
    blocks = np.zeros((k, mtu_payload), dtype=np.uint8)
    blocks.ravel()[: len(message)] = np.frombuffer(message, dtype=np.uint8)
    return blocks


def packet_count(k: int, redundancy: float) -> int:
    """ceil((1 + redundancy) * k); the epsilon absorbs float noise in the product."""
    if redundancy < 0:
        raise ValueError("redundancy must be non-negative")
    return math.ceil((1.0 + redundancy) * k - 1e-9)


def fountain_encode(
    blocks: np.ndarray,
    redundancy: float,
    prng_seed: int,
    *,
    session_id: int = 0,
    frame_id: int = 0,
    message_len: int | None = None,
    packet_type: int = PACKET_TYPE_VIDEO,
) -> list[FecPacket]:
    """Emit the systematic blocks plus enough repair packets for `redundancy`."""
    blocks = np.ascontiguousarray(blocks, dtype=np.uint8)
    k, payload_len = blocks.shape
    if message_len is None:
        message_len = k * payload_len
    total = packet_count(k, redundancy)
    if total > 0x10000:
        raise ValueError("packet index would overflow 16 bits")

    def make(index: int, payload: bytes) -> FecPacket:
        return FecPacket(
            session_id=session_id,
            frame_id=frame_id,
            packet_index=index,
            source_count=k,
            message_len=message_len,
            prng_seed=prng_seed,
            payload=payload,
            packet_type=packet_type,
        )

    packets = [make(i, blocks[i].tobytes()) for i in range(k)]
    repair_count = total - k
    if repair_count:
        rows = np.stack([coefficient_row(prng_seed, k + j, k) for j in range(repair_count)])
        payloads = np.zeros((repair_count, payload_len), dtype=np.uint8)
        for col in range(k):
            coeffs = rows[:, col]
            if coeffs.any():
                payloads ^= MUL_TABLE[coeffs[:, None], blocks[col][None, :]]
        packets.extend(make(k + j, payloads[j].tobytes()) for j in range(repair_count))
    return packets


def encode_message(
    message: bytes,
    redundancy: float,
    prng_seed: int,
    *,
    session_id: int = 0,
    frame_id: int = 0,
    mtu_payload: int = DEFAULT_MTU_PAYLOAD,
) -> list[FecPacket]:
    blocks = packetize(message, mtu_payload)
    return fountain_encode(
        blocks,
        redundancy,
        prng_seed,
        session_id=session_id,
        frame_id=frame_id,
        message_len=len(message),
    )


class FountainDecoder:
    """Incremental Gauss-Jordan elimination over GF(256), one message.

    Pivot rows live in dense (k, k) coefficient and (k, payload) matrices,
    with the pivot for column c stored at row c. Systematic packets install
    as unit-vector pivots with zero field work, so a loss-free stream decodes
    without any elimination; `elimination_ops` counts the GF multiply/xor
    vector operations actually performed.
    """

    def __init__(self, template: FecPacket):
        self.session_id = template.session_id
        self.frame_id = template.frame_id
        self.source_count = template.source_count
        self.message_len = template.message_len
        self.prng_seed = template.prng_seed
        self.payload_len = template.payload_len
        k = self.source_count
        self._rows = np.zeros((k, k), dtype=np.uint8)
        self._payloads = np.zeros((k, self.payload_len), dtype=np.uint8)
        self._has_pivot = np.zeros(k, dtype=bool)
        self._rank = 0
        self._done = False
        self._message: bytes | None = None
        self.elimination_ops = 0
        self.packets_seen = 0

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def done(self) -> bool:
        return self._done

    def _check(self, packet: FecPacket) -> None:
        same = (
            packet.session_id == self.session_id
            and packet.frame_id == self.frame_id
            and packet.source_count == self.source_count
            and packet.message_len == self.message_len
            and packet.prng_seed == self.prng_seed
        )
        if not same:
            raise InconsistentHeader(
                f"packet ({packet.session_id}, {packet.frame_id}, k={packet.source_count}) "
                f"does not belong to stream ({self.session_id}, {self.frame_id}, k={self.source_count})"
            )
        if packet.payload_len != self.payload_len:
            raise PayloadLengthMismatch(
                f"payload {packet.payload_len} bytes, stream block size {self.payload_len}"
            )

    def add(self, packet: FecPacket) -> bool:
        """Feed one packet; returns True once the message is recoverable."""
        self._check(packet)
        if self._done:
            return True
        self.packets_seen += 1
        k = self.source_count
        payload = np.frombuffer(packet.payload, dtype=np.uint8).copy()
        if packet.packet_index < k:
            row = np.zeros(k, dtype=np.uint8)
            row[packet.packet_index] = 1
        else:
            row = coefficient_row(self.prng_seed, packet.packet_index, k)

        if self._reduce(row, payload) and self._rank == k:
            self._finish()
        return self._done

    def _reduce(self, row: np.ndarray, payload: np.ndarray) -> bool:
        """Eliminate against existing pivots; install if independent."""
        while True:
            nonzero = np.flatnonzero(row)
            if len(nonzero) == 0:
                return False  # linearly dependent, nothing new
            col = int(nonzero[0])
            if not self._has_pivot[col]:
                lead = int(row[col])
                if lead != 1:
                    inv = int(INV_TABLE[lead])
                    row = MUL_TABLE[inv][row]
                    payload = MUL_TABLE[inv][payload]
                    self.elimination_ops += 2
                self._rows[col] = row
                self._payloads[col] = payload
                self._has_pivot[col] = True
                self._rank += 1
                return True
            coeff = int(row[col])
            row = row ^ MUL_TABLE[coeff][self._rows[col]]
            payload = payload ^ MUL_TABLE[coeff][self._payloads[col]]
            self.elimination_ops += 2

    def _finish(self) -> None:
        # Column-batched back substitution; systematic-only sets do no work.
        for col in range(self.source_count - 1, 0, -1):
            coeffs = self._rows[:col, col]
            touched = np.flatnonzero(coeffs)
            if len(touched):
                factors = coeffs[touched][:, None]
                self._rows[touched, col:] ^= MUL_TABLE[factors, self._rows[col, col:][None, :]]
                self._payloads[touched] ^= MUL_TABLE[factors, self._payloads[col][None, :]]
                self.elimination_ops += 2 * len(touched)
        self._message = self._payloads.tobytes()[: self.message_len]
        self._done = True

    def message(self) -> bytes:
        if not self._done or self._message is None:
            raise RuntimeError("decoder is not finished")
        return self._message


def decode_packets(packets: list[FecPacket]) -> bytes | None:
    """One-shot decode convenience; None when the set is insufficient."""
    if not packets:
        return None
    decoder = FountainDecoder(packets[0])
    for packet in packets:
        if decoder.add(packet):
            return decoder.message()
    return None
