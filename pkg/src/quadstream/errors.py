"""Exception hierarchy shared across the package."""


class QuadstreamError(Exception):
    """Base class for all errors raised by this package."""


# Frame / camera model
class DimensionMismatch(QuadstreamError):
    """Image buffer does not match the declared or expected dimensions."""


class InvalidIntrinsics(QuadstreamError):
    """Camera intrinsics violate their invariants (e.g. non-positive focal)."""


# Codec streams
class CodecError(QuadstreamError):
    """Base class for bitstream decode failures."""


class TruncatedStream(CodecError):
    """Stream ended before the grammar was satisfied."""


class RunOverflow(CodecError):
    """A run length exceeds the number of remaining pixels."""


class CorruptStream(CodecError):
    """Decoded values are impossible for a well-formed stream."""


class UnknownCodecId(CodecError):
    """Leading codec-id byte is not a supported enumerant."""


# Geometry
class InvalidRange(QuadstreamError):
    """A [near, far] style interval is empty or inverted."""


class NoFloorFound(QuadstreamError):
    """Plane search produced no candidate with enough inliers."""


class DegenerateDirection(QuadstreamError):
    """A direction needed by the operation has no horizontal component."""


class MissingFirstTransmitter(QuadstreamError):
    """Calibration set lacks a leading identity-pose entry."""


# FEC / packets
class EmptyMessage(QuadstreamError):
    """Cannot packetize a zero-length message."""


class MalformedPacket(QuadstreamError):
    """Packet bytes do not parse as a valid header + payload."""


class InconsistentHeader(QuadstreamError):
    """Packet header disagrees with the stream the decoder was set up for."""


class PayloadLengthMismatch(QuadstreamError):
    """Packet payload length differs from the block size of its message."""


# Transport
class UnknownRoom(QuadstreamError):
    """Room id is not registered with the signaling service."""


class UnknownToken(QuadstreamError):
    """Membership token does not identify a live member."""


# Viewer
class MalformedMessage(QuadstreamError):
    """Recovered frame bytes do not parse as a video message."""


class IoFailure(QuadstreamError):
    """Filesystem output could not be written."""
