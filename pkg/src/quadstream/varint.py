"""Nibble varints and the zero-run / nonzero-run delta stream grammar.

Wire format (frozen):
  - A value is stored as little-endian base-8 groups. Each nibble holds one
    continuation bit (bit 3) plus 3 data bits; the least significant group
    comes first and the continuation bit is set iff more nibbles follow.
  - Nibbles are packed two per byte, low nibble first. A stream whose nibble
    count is odd is padded with one 0 nibble at the very end.
  - A delta stream encodes a fixed number of signed values as repeated
    { zeroRunLen, nonzeroRunLen, nonzeroRunLen x zigzag(delta) } records in
    row-major pixel order, until the pixel count is exhausted.

Values must be below 2^32. The encoders here are vectorized; a nibble-level
scalar path (uvarint_encode / uvarint_decode) is exposed for single values.
"""

from __future__ import annotations

import numpy as np

from .errors import CorruptStream, RunOverflow, TruncatedStream

_MAX_VALUE = 1 << 32
_MAX_NIBBLES = 21  # beyond this a value cannot fit the uint64 decode path


def zigzag(values):
    """Map signed to non-negative: 0,-1,1,-2,2,... -> 0,1,2,3,4,..."""
    v = np.asarray(values, dtype=np.int64)
    out = (v << 1) ^ (v >> 63)
    return out if out.ndim else int(out)


def unzigzag(values):
    v = np.asarray(values, dtype=np.int64)
    out = (v >> 1) ^ -(v & 1)
    return out if out.ndim else int(out)


def uvarint_encode(value: int) -> list[int]:
    """Nibble sequence for one value (scalar reference path)."""
    if value < 0 or value >= _MAX_VALUE:
        raise ValueError(f"value {value} out of uvarint range [0, 2^32)")
    nibbles = []
    while True:
        group = value & 7
        value >>= 3
        nibbles.append(group | (8 if value else 0))
        if not value:
            return nibbles


def uvarint_decode(nibbles, offset: int = 0) -> tuple[int, int]:
    """Decode one value starting at nibble `offset`; returns (value, next offset)."""
    value = 0
    shift = 0
    i = offset
    while True:
        if i >= len(nibbles):
            raise TruncatedStream("nibble stream ended inside a value")
        nib = nibbles[i]
        value |= (nib & 7) << shift
        shift += 3
        i += 1
        if not nib & 8:
            return value, i


def pack_nibbles(nibbles: np.ndarray) -> bytes:
    nibs = np.asarray(nibbles, dtype=np.uint8)
    if len(nibs) & 1:
        nibs = np.append(nibs, np.uint8(0))
    return (nibs[0::2] | (nibs[1::2] << 4)).tobytes()


def unpack_nibbles(data: bytes) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(2 * len(buf), dtype=np.uint8)
    out[0::2] = buf & 0xF
    out[1::2] = buf >> 4
    return out


# group thresholds: a value needs g+1 nibbles iff it exceeds 8^g - 1
_COUNT_THRESHOLDS = [(1 << (3 * g)) - 1 for g in range(1, 11)]
_GROUP_SCALE = (np.uint64(1) << (np.uint64(3) * np.arange(_MAX_NIBBLES, dtype=np.uint64)))


def _nibble_counts(values: np.ndarray) -> np.ndarray:
    counts = np.ones(len(values), dtype=np.int64)
    top = int(values.max())
    for threshold in _COUNT_THRESHOLDS:
        if top <= threshold:
            break
        counts += values > threshold
    return counts


def encode_values(values: np.ndarray) -> np.ndarray:
    """Vectorized nibble encoding of a uint array; returns the raw nibble array."""
    values = np.ascontiguousarray(values, dtype=np.uint64)
    if len(values) == 0:
        return np.zeros(0, dtype=np.uint8)
    if values.max() >= _MAX_VALUE:
        raise ValueError("value out of uvarint range [0, 2^32)")
    counts = _nibble_counts(values)
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    owner = np.repeat(np.arange(len(values), dtype=np.int64), counts)
    group = (np.arange(total, dtype=np.int64) - np.repeat(starts, counts)).astype(np.uint8)
    # uint32 right shifts by uint8 stay on numpy's fast path; uint64 does not
    nibbles = ((values.astype(np.uint32)[owner] >> (3 * group)) & np.uint32(7)).astype(np.uint8)
    nibbles |= 8
    nibbles[starts + counts - 1] &= 7
    return nibbles


def decode_values(nibbles: np.ndarray, limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized decode of all complete values in a nibble array.

    Returns (values, end_nibble_indices); a trailing incomplete value is
    ignored (callers raise TruncatedStream if the grammar still needed it).
    """
    ends = np.flatnonzero((nibbles & 8) == 0)
    if limit is not None:
        ends = ends[:limit]
    if len(ends) == 0:
        return np.zeros(0, dtype=np.uint64), ends
    used = int(ends[-1]) + 1
    positions = np.arange(used, dtype=np.int64)
    is_start = np.ones(used, dtype=bool)
    is_start[1:] = (nibbles[: used - 1] & 8) == 0
    group = positions - np.maximum.accumulate(np.where(is_start, positions, 0))
    if int(group.max()) >= _MAX_NIBBLES:
        raise CorruptStream("varint longer than any valid value")
    # multiply by 8^group instead of a variable uint64 shift (much faster)
    contrib = (nibbles[:used] & np.uint8(7)).astype(np.uint64) * _GROUP_SCALE[group]
    sums = np.zeros(used + 1, dtype=np.uint64)
    np.cumsum(contrib, out=sums[1:])
    starts = np.empty_like(ends)
    starts[0] = 0
    starts[1:] = ends[:-1] + 1
    values = sums[ends + 1] - sums[starts]
    return values, ends


def _segment_arange(lengths: np.ndarray) -> np.ndarray:
    """0..len-1 counters for each segment, concatenated."""
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.cumsum(lengths) - lengths
    return np.arange(total, dtype=np.int64) - np.repeat(starts, lengths)


def encode_sparse_runs(indices: np.ndarray, deltas: np.ndarray, count: int) -> bytes:
    """Encode a delta stream given the nonzero positions and their values.

    `indices` must be strictly increasing positions in [0, count); `deltas`
    holds the nonzero delta at each position. Cost scales with the number of
    nonzero entries, not with `count`.
    """
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if count == 0:
        return b""
    if len(indices) == 0:
        return pack_nibbles(encode_values(np.array([count, 0], dtype=np.uint64)))
    breaks = np.flatnonzero(np.diff(indices) > 1) + 1
    group_starts = indices[np.concatenate(([0], breaks))]
    group_lens = np.diff(np.concatenate(([0], breaks, [len(indices)])))
    gaps = np.empty(len(group_starts), dtype=np.int64)
    gaps[0] = group_starts[0]
    gaps[1:] = group_starts[1:] - (group_starts[:-1] + group_lens[:-1])

    zero_runs = gaps
    nonzero_runs = group_lens
    tail = count - int(group_starts[-1] + group_lens[-1])
    if tail:
        zero_runs = np.concatenate((zero_runs, [tail]))
        nonzero_runs = np.concatenate((nonzero_runs, [0]))
    payload = np.asarray(zigzag(deltas), dtype=np.uint64)

    pairs = len(zero_runs)
    values = np.empty(2 * pairs + len(payload), dtype=np.uint64)
    head = 2 * np.arange(pairs, dtype=np.int64)
    head[1:] += np.cumsum(nonzero_runs[:-1])
    values[head] = zero_runs
    values[head + 1] = nonzero_runs
    mask = np.ones(len(values), dtype=bool)
    mask[head] = False
    mask[head + 1] = False
    values[mask] = payload
    return pack_nibbles(encode_values(values))


def encode_runs(deltas: np.ndarray) -> bytes:
    """Encode signed deltas (zeros compress to runs) as a byte-padded stream."""
    deltas = np.ascontiguousarray(deltas, dtype=np.int64).ravel()
    count = len(deltas)
    if count == 0:
        return b""
    indices = np.flatnonzero(deltas)
    return encode_sparse_runs(indices, deltas[indices], count)


def decode_runs_sparse(data: bytes, count: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Decode a delta stream to (nonzero_indices, nonzero_deltas, consumed_bytes).

    `consumed` covers the stream including its final pad nibble, so
    concatenated streams can follow.
    """
    if count == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 0
    nibbles = unpack_nibbles(data)
    values, ends = decode_values(nibbles)
    vals = values.tolist()
    available = len(vals)

    pos = 0
    index = 0
    run_starts: list[int] = []
    run_lengths: list[int] = []
    value_starts: list[int] = []
    while pos < count:
        if index + 2 > available:
            raise TruncatedStream("delta stream ended inside a run record")
        zero_len = vals[index]
        nonzero_len = vals[index + 1]
        index += 2
        if pos + zero_len > count:
            raise RunOverflow(f"zero run of {zero_len} exceeds remaining {count - pos} pixels")
        pos += zero_len
        if pos + nonzero_len > count:
            raise RunOverflow(f"nonzero run of {nonzero_len} exceeds remaining {count - pos} pixels")
        if nonzero_len:
            if index + nonzero_len > available:
                raise TruncatedStream("delta stream ended inside a nonzero run")
            run_starts.append(pos)
            run_lengths.append(nonzero_len)
            value_starts.append(index)
            index += nonzero_len
            pos += nonzero_len

    if run_lengths:
        lens = np.asarray(run_lengths, dtype=np.int64)
        offsets = _segment_arange(lens)
        pixel_idx = np.repeat(np.asarray(run_starts, dtype=np.int64), lens) + offsets
        value_idx = np.repeat(np.asarray(value_starts, dtype=np.int64), lens) + offsets
        deltas = unzigzag(values[value_idx].astype(np.int64))
    else:
        pixel_idx = np.zeros(0, dtype=np.int64)
        deltas = np.zeros(0, dtype=np.int64)

    last_nibble = int(ends[index - 1]) if index else -1
    consumed = (last_nibble + 2) // 2  # +1 for 0-base, round up to byte
    return pixel_idx, deltas, consumed


def decode_runs(data: bytes, count: int) -> tuple[np.ndarray, int]:
    """Inverse of encode_runs for a known delta count: (dense deltas, consumed)."""
    indices, sparse, consumed = decode_runs_sparse(data, count)
    deltas = np.zeros(count, dtype=np.int64)
    deltas[indices] = sparse
    return deltas, consumed
