"""Room signaling and datagram channels.

Two interchangeable channels carry FEC packets: a deterministic lossy
simulator driven by explicit microsecond timestamps (the test surface), and a
plain UDP transport for live loopback/LAN runs. Channels deliver whole
datagrams or nothing; there is no corruption or duplication model.

The signaling service speaks a line-delimited text protocol over TCP:

    CREATE                      -> OK <roomId>
    JOIN <roomId> <role>        -> OK <token> additional=<0|1>
    LIST                        -> OK <n> [<roomId>:<transmitters>:<viewers>]...
    LEAVE <token>               -> OK
    anything else               -> ERR <reason>

Roles are "transmitter" or "viewer"; transmitters beyond the first in a room
are flagged additional and need calibration before their frames are placed.
Rooms are garbage-collected when the last member leaves.
"""

from __future__ import annotations

import heapq
import random
import socket
import socketserver
import string
import threading
import time
from dataclasses import dataclass, field

from .errors import UnknownRoom, UnknownToken

ROLE_TRANSMITTER = "transmitter"
ROLE_VIEWER = "viewer"
_ROOM_ALPHABET = string.ascii_uppercase + string.digits
ROOM_ID_LENGTH = 6


@dataclass(frozen=True)
class ChannelConfig:
    loss_probability: float = 0.0
    mean_latency_micros: int = 0
    jitter_micros: int = 0
    reordering_allowed: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError(f"loss probability {self.loss_probability} outside [0, 1]")
        if self.mean_latency_micros < 0 or self.jitter_micros < 0:
            raise ValueError("latency and jitter must be non-negative")


class SimulatedChannel:
    """Seeded lossy datagram channel, single-stepped by one driver."""

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._rng = random.Random(config.seed)
        self._queue: list[tuple[int, int, bytes]] = []
        self._sequence = 0
        self._last_now = 0
        self._last_scheduled = 0
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    def _advance(self, now_micros: int) -> None:
        if now_micros < self._last_now:
            raise ValueError(f"time went backwards: {now_micros} < {self._last_now}")
        self._last_now = now_micros

    def send(self, payload: bytes, now_micros: int) -> None:
        self._advance(now_micros)
        self.sent += 1
        if self._rng.random() < self.config.loss_probability:
            self.dropped += 1
            return
        latency = self.config.mean_latency_micros
        if self.config.jitter_micros:
            latency += self._rng.randint(-self.config.jitter_micros, self.config.jitter_micros)
        deliver_at = now_micros + max(0, latency)
        if not self.config.reordering_allowed:
            deliver_at = max(deliver_at, self._last_scheduled)
        self._last_scheduled = max(self._last_scheduled, deliver_at)
        heapq.heappush(self._queue, (deliver_at, self._sequence, payload))
        self._sequence += 1

    def poll(self, now_micros: int) -> list[bytes]:
        self._advance(now_micros)
        out = []
        while self._queue and self._queue[0][0] <= now_micros:
            out.append(heapq.heappop(self._queue)[2])
        self.delivered += len(out)
        return out

    @property
    def pending(self) -> int:
        return len(self._queue)


class UdpTransport:
    """Thin non-blocking UDP wrapper; payloads are FEC packet bytes verbatim."""

    def __init__(self, bind: tuple[str, int] = ("127.0.0.1", 0)):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(bind)
        self._sock.setblocking(False)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def send(self, payload: bytes, dest: tuple[str, int]) -> None:
        self._sock.sendto(payload, dest)

    def poll(self, max_datagrams: int = 4096) -> list[bytes]:
        out = []
        for _ in range(max_datagrams):
            try:
                data, _addr = self._sock.recvfrom(65536)
            except BlockingIOError:
                break
            out.append(data)
        return out

    def close(self) -> None:
        self._sock.close()


@dataclass
class Room:
    room_id: str
    created: float
    transmitters: list[str] = field(default_factory=list)
    viewers: list[str] = field(default_factory=list)

    @property
    def member_count(self) -> int:
        return len(self.transmitters) + len(self.viewers)


@dataclass(frozen=True)
class Membership:
    token: str
    room_id: str
    role: str
    additional: bool


@dataclass(frozen=True)
class RoomSummary:
    room_id: str
    transmitter_count: int
    viewer_count: int


class RoomService:
    """In-memory room registry; safe for concurrent calls."""

    def __init__(self, seed: int = 0, clock=time.time):
        self._rng = random.Random(seed)
        self._clock = clock
        self._rooms: dict[str, Room] = {}
        self._members: dict[str, Membership] = {}
        self._serial = 0
        self._lock = threading.Lock()

    def create_room(self) -> str:
        with self._lock:
            while True:
                room_id = "".join(self._rng.choice(_ROOM_ALPHABET) for _ in range(ROOM_ID_LENGTH))
                if room_id not in self._rooms:
                    break
            self._rooms[room_id] = Room(room_id, self._clock())
            return room_id

    def join_room(self, room_id: str, role: str) -> Membership:
        if role not in (ROLE_TRANSMITTER, ROLE_VIEWER):
            raise ValueError(f"role must be transmitter or viewer, got {role!r}")
        with self._lock:
            room = self._rooms.get(room_id)
            if room is None:
                raise UnknownRoom(f"no room {room_id!r}")
            self._serial += 1
            token = f"{room_id}-{self._serial}"
            additional = role == ROLE_TRANSMITTER and bool(room.transmitters)
            if role == ROLE_TRANSMITTER:
                room.transmitters.append(token)
            else:
                room.viewers.append(token)
            membership = Membership(token, room_id, role, additional)
            self._members[token] = membership
            return membership

    def leave_room(self, token: str) -> None:
        with self._lock:
            membership = self._members.pop(token, None)
            if membership is None:
                raise UnknownToken(f"no member {token!r}")
            room = self._rooms[membership.room_id]
            if membership.role == ROLE_TRANSMITTER:
                room.transmitters.remove(token)
            else:
                room.viewers.remove(token)
            if room.member_count == 0:
                del self._rooms[membership.room_id]

    def list_rooms(self) -> list[RoomSummary]:
        with self._lock:
            return [
                RoomSummary(r.room_id, len(r.transmitters), len(r.viewers))
                for r in sorted(self._rooms.values(), key=lambda r: r.created)
            ]


class _SignalingHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            line = self.rfile.readline()
            if not line:
                return
            reply = self.server.service_reply(line.decode("utf-8", "replace").strip())  # type: ignore[attr-defined]
            self.wfile.write((reply + "\n").encode("utf-8"))


class SignalingServer(socketserver.ThreadingTCPServer):
    """Line-protocol front end for a RoomService."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: RoomService):
        super().__init__(address, _SignalingHandler)
        self.service = service

    def service_reply(self, line: str) -> str:
        parts = line.split()
        if not parts:
            return "ERR bad-request"
        command = parts[0].upper()
        try:
            if command == "CREATE" and len(parts) == 1:
                return f"OK {self.service.create_room()}"
            if command == "JOIN" and len(parts) == 3:
                membership = self.service.join_room(parts[1], parts[2])
                return f"OK {membership.token} additional={int(membership.additional)}"
            if command == "LIST" and len(parts) == 1:
                rooms = self.service.list_rooms()
                body = " ".join(f"{r.room_id}:{r.transmitter_count}:{r.viewer_count}" for r in rooms)
                return f"OK {len(rooms)}" + (f" {body}" if body else "")
            if command == "LEAVE" and len(parts) == 2:
                self.service.leave_room(parts[1])
                return "OK"
        except UnknownRoom:
            return "ERR unknown-room"
        except UnknownToken:
            return "ERR unknown-token"
        except ValueError:
            return "ERR bad-request"
        return "ERR bad-request"

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


class SignalingClient:
    """Blocking client for the line protocol."""

    def __init__(self, address: tuple[str, int], timeout: float = 5.0):
        self._sock = socket.create_connection(address, timeout=timeout)
        self._file = self._sock.makefile("rwb")

    def _request(self, line: str) -> str:
        self._file.write((line + "\n").encode("utf-8"))
        self._file.flush()
        reply = self._file.readline().decode("utf-8").strip()
        if reply.startswith("ERR unknown-room"):
            raise UnknownRoom(line)
        if reply.startswith("ERR unknown-token"):
            raise UnknownToken(line)
        if not reply.startswith("OK"):
            raise ValueError(f"signaling error: {reply!r} for {line!r}")
        return reply

    def create(self) -> str:
        return self._request("CREATE").split()[1]

    def join(self, room_id: str, role: str) -> Membership:
        parts = self._request(f"JOIN {room_id} {role}").split()
        return Membership(parts[1], room_id, role, parts[2] == "additional=1")

    def list_rooms(self) -> list[RoomSummary]:
        parts = self._request("LIST").split()
        out = []
        for item in parts[2:]:
            room_id, tx, vw = item.split(":")
            out.append(RoomSummary(room_id, int(tx), int(vw)))
        return out

    def leave(self, token: str) -> None:
        self._request(f"LEAVE {token}")

    def close(self) -> None:
        self._file.close()
        self._sock.close()
