"""Pose distribution: a fixed 30-byte datagram per vehicle update and the
vehicle-side watchdog that stops a vehicle when updates dry up.

Wire layout, big-endian::

    magic 'IP' | version u8 | vehicle_id u8 | sequence u32 | timestamp_us u64
    | x_um i32 | y_um i32 | yaw_urad i32 | crc16 u16

The checksum is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF) over the first
28 bytes.
"""

from __future__ import annotations

import binascii
import collections
import socket
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Protocol

from .errors import ChecksumError, LengthError, MagicError, VersionError

MAGIC = b"IP"
VERSION = 1
MESSAGE_SIZE = 30
TIMEOUT_US = 100_000
_STRUCT = struct.Struct(">2sBBIQiii")
_CRC = struct.Struct(">H")
_I32 = (-(2 ** 31), 2 ** 31 - 1)

ACTIVE = "active"
STOPPED = "stopped"


def crc16_ccitt(data: bytes) -> int:
    # binascii.crc_hqx is the same polynomial; init value selects the FALSE variant
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class PoseMessage:
    vehicle_id: int
    sequence: int
    timestamp_us: int
    x_um: int
    y_um: int
    yaw_urad: int

    @classmethod
    def from_sample(cls, sample) -> "PoseMessage":
        if sample.vehicle_id is None:
            raise ValueError("a pending sample has no vehicle id to address")
        p = sample.pose
        return cls(int(sample.vehicle_id), int(sample.sequence), int(round(sample.timestamp * 1e6)),
                   int(round(p.x * 1e6)), int(round(p.y * 1e6)), int(round(p.yaw * 1e6)))

    @property
    def x(self) -> float:
        return self.x_um / 1e6

    @property
    def y(self) -> float:
        return self.y_um / 1e6

    @property
    def yaw(self) -> float:
        return self.yaw_urad / 1e6


def encode(m: PoseMessage) -> bytes:
    if not 0 <= m.vehicle_id <= 0xFF:
        raise ValueError("vehicle_id must fit in one byte")
    if not 0 <= m.sequence <= 0xFFFFFFFF:
        raise ValueError("sequence must fit in 32 bits")
    if not 0 <= m.timestamp_us <= 0xFFFFFFFFFFFFFFFF:
        raise ValueError("timestamp must fit in 64 bits")
    for name in ("x_um", "y_um", "yaw_urad"):
        v = getattr(m, name)
        if not _I32[0] <= v <= _I32[1]:
            raise ValueError(f"{name} out of signed 32-bit range")
    body = _STRUCT.pack(MAGIC, VERSION, m.vehicle_id, m.sequence, m.timestamp_us, m.x_um, m.y_um, m.yaw_urad)
    return body + _CRC.pack(crc16_ccitt(body))


def decode(data: bytes) -> PoseMessage:
    data = bytes(data)
    if len(data) != MESSAGE_SIZE:
        raise LengthError(f"expected {MESSAGE_SIZE} bytes, got {len(data)}")
    if data[:2] != MAGIC:
        raise MagicError(f"bad magic {data[:2]!r}")
    if data[2] != VERSION:
        raise VersionError(f"unsupported version {data[2]}")
    body, (crc,) = data[:-2], _CRC.unpack(data[-2:])
    if crc16_ccitt(body) != crc:
        raise ChecksumError("checksum mismatch")
    _, _, vid, seq, ts, x, y, yaw = _STRUCT.unpack(body)
    return PoseMessage(vid, seq, ts, x, y, yaw)


# ---------------------------------------------------------------- watchdog

@dataclass(frozen=True)
class WatchdogState:
    """``last_update`` in integer microseconds; None before the first message,
    when the vehicle has not been released yet and is stopped."""

    last_update: int | None = None
    status: str = STOPPED
    timeout: int = TIMEOUT_US


def watchdog_tick(w: WatchdogState, now: int) -> WatchdogState:
    if w.last_update is None:
        return w if w.status == STOPPED else replace(w, status=STOPPED)
    status = STOPPED if now - w.last_update > w.timeout else ACTIVE
    return w if status == w.status else replace(w, status=status)


def watchdog_receive(w: WatchdogState, now: int) -> WatchdogState:
    return replace(w, last_update=now, status=ACTIVE)


# -------------------------------------------------------------- transports

class Transport(Protocol):
    def send(self, vehicle_id: int, payload: bytes) -> None: ...

    def receive(self, vehicle_id: int) -> list[bytes]: ...


class FakeTransport:
    """In-process datagram channels, one per vehicle id; optional loss hook."""

    def __init__(self, drop=None):
        self.channels: dict[int, collections.deque] = collections.defaultdict(collections.deque)
        self.drop = drop
        self.sent = 0

    def send(self, vehicle_id: int, payload: bytes) -> None:
        self.sent += 1
        if self.drop is not None and self.drop(vehicle_id, payload):
            return
        self.channels[vehicle_id].append(bytes(payload))

    def receive(self, vehicle_id: int) -> list[bytes]:
        q = self.channels[vehicle_id]
        out = list(q)
        q.clear()
        return out


class UdpTransport:
    """UDP datagrams to ``host:base_port + vehicle_id``."""

    def __init__(self, host: str = "127.0.0.1", base_port: int = 47000):
        self.host, self.base_port = host, base_port
        self._tx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._rx: dict[int, socket.socket] = {}

    def listen(self, vehicle_id: int) -> None:
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind((self.host, self.base_port + vehicle_id))
        s.setblocking(False)
        self._rx[vehicle_id] = s

    def send(self, vehicle_id: int, payload: bytes) -> None:
        self._tx.sendto(payload, (self.host, self.base_port + vehicle_id))

    def receive(self, vehicle_id: int) -> list[bytes]:
        s = self._rx.get(vehicle_id)
        out = []
        if s is None:
            return out
        while True:
            try:
                out.append(s.recv(256))
            except BlockingIOError:
                return out

    def close(self) -> None:
        self._tx.close()
        for s in self._rx.values():
            s.close()
        self._rx.clear()


class Publisher:
    """Sends every resolved sample on its vehicle's channel; pending samples
    have no address and are not sent."""

    def __init__(self, transport: Transport):
        self.transport = transport
        self.published = 0

    def publish(self, samples: Iterable) -> int:
        n = 0
        for s in samples:
            if s.vehicle_id is None:
                continue
            self.transport.send(s.vehicle_id, encode(PoseMessage.from_sample(s)))
            n += 1
        self.published += n
        return n


class VehicleConsumer:
    """Vehicle side: drains its channel, keeps the last valid pose, runs the watchdog."""

    def __init__(self, vehicle_id: int, transport: Transport, timeout: int = TIMEOUT_US):
        self.vehicle_id = vehicle_id
        self.transport = transport
        self.watchdog = WatchdogState(timeout=timeout)
        self.last: PoseMessage | None = None
        self.rejected = 0
        self.received = 0

    def poll(self, now: int) -> str:
        for payload in self.transport.receive(self.vehicle_id):
            try:
                msg = decode(payload)
            except ValueError:
                self.rejected += 1
                continue
            if msg.vehicle_id != self.vehicle_id:
                self.rejected += 1
                continue
            self.received += 1
            self.last = msg
            self.watchdog = watchdog_receive(self.watchdog, now)
        self.watchdog = watchdog_tick(self.watchdog, now)
        return self.watchdog.status

    @property
    def status(self) -> str:
        return self.watchdog.status
