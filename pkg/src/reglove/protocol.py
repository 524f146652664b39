"""Framed binary protocol for the host<->actuator-controller link.

Frame layout (all integers big-endian):

    AA 55 | version (0x01) | msg_type | seq | length | payload ... | crc16

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection,
no final xor) over version..payload. Sequence numbers wrap at 255 -> 0.
Commands (SetGrasp/Release/Abort) ride a stop-and-wait ack scheme;
Heartbeat and Telemetry are fire-and-forget.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

SYNC = b"\xaa\x55"
PROTOCOL_VERSION = 0x01
_HEADER_LEN = 6  # sync(2) + version + msg_type + seq + length
_CRC_LEN = 2
MAX_PAYLOAD = 255


class MsgType(enum.IntEnum):
    HELLO = 0x01
    ACK = 0x02
    NACK = 0x03
    SET_GRASP = 0x10
    RELEASE = 0x11
    ABORT = 0x12
    HEARTBEAT = 0x20
    TELEMETRY = 0x30
    FAULT = 0x40


def _build_crc_table(poly: int = 0x1021) -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return tuple(table)


_CRC_TABLE = _build_crc_table()


def crc16_ccitt_false(data: bytes, crc: int = 0xFFFF) -> int:
    """Table-driven CRC-16/CCITT-FALSE; check value of b'123456789' is 0x29B1."""
    table = _CRC_TABLE
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ b) & 0xFF]
    return crc


class PayloadTooLarge(ValueError):
    """Guards extension messages; impossible for the defined set."""


@dataclass(frozen=True)
class Hello:
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class Ack:
    acked_seq: int


@dataclass(frozen=True)
class Nack:
    acked_seq: int
    reason: int = 0


@dataclass(frozen=True)
class SetGrasp:
    grasp_id: int  # wire id 0..4


@dataclass(frozen=True)
class Release:
    pass


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class Heartbeat:
    pass


@dataclass(frozen=True)
class Telemetry:
    """Controller state snapshot; pressures are signed deci-kPa (0.1 kPa units).

    valve_bitmap bits 0-4: finger routed to an active line; bit 5: exhaust open.
    pump_bitmap bit 0: inflation pump; bit 1: vacuum pump.
    """

    phase: int
    pressures_dkpa: tuple[int, int, int, int, int]
    valve_bitmap: int
    pump_bitmap: int

    PAYLOAD_LEN = 13


@dataclass(frozen=True)
class Fault:
    code: int


Message = Hello | Ack | Nack | SetGrasp | Release | Abort | Heartbeat | Telemetry | Fault

_TYPE_OF = {
    Hello: MsgType.HELLO,
    Ack: MsgType.ACK,
    Nack: MsgType.NACK,
    SetGrasp: MsgType.SET_GRASP,
    Release: MsgType.RELEASE,
    Abort: MsgType.ABORT,
    Heartbeat: MsgType.HEARTBEAT,
    Telemetry: MsgType.TELEMETRY,
    Fault: MsgType.FAULT,
}

# Commands require an ack; heartbeat/telemetry are never retransmitted.
RELIABLE_TYPES = frozenset({MsgType.SET_GRASP, MsgType.RELEASE, MsgType.ABORT, MsgType.HELLO})


def kpa_to_wire(kpa: float) -> int:
    """Quantize gauge kPa to the signed 16-bit 0.1 kPa wire unit."""
    q = round(kpa * 10.0)
    return max(-32768, min(32767, int(q)))


def wire_to_kpa(dkpa: int) -> float:
    return dkpa / 10.0


def _payload(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        return bytes([msg.version & 0xFF])
    if isinstance(msg, Ack):
        return bytes([msg.acked_seq & 0xFF])
    if isinstance(msg, Nack):
        return bytes([msg.acked_seq & 0xFF, msg.reason & 0xFF])
    if isinstance(msg, SetGrasp):
        if not 0 <= msg.grasp_id <= 4:
            raise ValueError(f"grasp id out of range: {msg.grasp_id}")
        return bytes([msg.grasp_id])
    if isinstance(msg, (Release, Abort, Heartbeat)):
        return b""
    if isinstance(msg, Telemetry):
        return struct.pack(
            ">B5hBB",
            msg.phase & 0xFF,
            *msg.pressures_dkpa,
            msg.valve_bitmap & 0xFF,
            msg.pump_bitmap & 0xFF,
        )
    if isinstance(msg, Fault):
        return bytes([msg.code & 0xFF])
    raise TypeError(f"not a protocol message: {msg!r}")


def encode(msg: Message, seq: int) -> bytes:
    """Encode one message as a single well-formed frame. Deterministic."""
    payload = _payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    body = bytes([PROTOCOL_VERSION, _TYPE_OF[type(msg)], seq & 0xFF, len(payload)]) + payload
    return SYNC + body + crc16_ccitt_false(body).to_bytes(2, "big")


class DiagnosticKind(enum.Enum):
    BAD_CRC = "bad_crc"
    UNKNOWN_TYPE = "unknown_type"
    BAD_LENGTH = "bad_length"
    BAD_VERSION = "bad_version"
    BAD_VALUE = "bad_value"
    RESYNC = "resync"


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagnosticKind
    offset: int
    detail: str = ""


@dataclass(frozen=True)
class Decoded:
    seq: int
    message: Message


_FIXED_LENGTHS = {
    MsgType.HELLO: 1,
    MsgType.ACK: 1,
    MsgType.NACK: 2,
    MsgType.SET_GRASP: 1,
    MsgType.RELEASE: 0,
    MsgType.ABORT: 0,
    MsgType.HEARTBEAT: 0,
    MsgType.TELEMETRY: Telemetry.PAYLOAD_LEN,
    MsgType.FAULT: 1,
}


def _parse_payload(mtype: MsgType, payload: bytes) -> Message:
    if mtype is MsgType.HELLO:
        return Hello(payload[0])
    if mtype is MsgType.ACK:
        return Ack(payload[0])
    if mtype is MsgType.NACK:
        return Nack(payload[0], payload[1])
    if mtype is MsgType.SET_GRASP:
        if payload[0] > 4:
            raise ValueError(f"grasp id out of range: {payload[0]}")
        return SetGrasp(payload[0])
    if mtype is MsgType.RELEASE:
        return Release()
    if mtype is MsgType.ABORT:
        return Abort()
    if mtype is MsgType.HEARTBEAT:
        return Heartbeat()
    if mtype is MsgType.TELEMETRY:
        phase, p0, p1, p2, p3, p4, valves, pumps = struct.unpack(">B5hBB", payload)
        return Telemetry(phase, (p0, p1, p2, p3, p4), valves, pumps)
    if mtype is MsgType.FAULT:
        return Fault(payload[0])
    raise AssertionError(mtype)


def decode_stream(data: bytes) -> tuple[list[Decoded], list[Diagnostic], bytes]:
    """Scan a byte stream for frames; resynchronize past corruption.

    Returns (decoded frames in order, per-frame diagnostics, residual bytes).
    On bad sync or CRC failure the scanner skips one byte and rescans, so a
    single corrupt frame never hides the frames that follow it. The residual
    is a trailing partial frame (by claimed length), kept for the next feed.
    """
    decoded: list[Decoded] = []
    diags: list[Diagnostic] = []
    n = len(data)
    i = 0
    skip_start = -1

    def flush_skip(end: int) -> None:
        nonlocal skip_start
        if skip_start >= 0:
            diags.append(Diagnostic(DiagnosticKind.RESYNC, skip_start, f"skipped {end - skip_start} bytes"))
            skip_start = -1

    while i < n:
        if data[i] != SYNC[0]:
            if skip_start < 0:
                skip_start = i
            i += 1
            continue
        if i + 1 >= n:
            break  # lone AA at the tail: possible sync start
        if data[i + 1] != SYNC[1]:
            if skip_start < 0:
                skip_start = i
            i += 1
            continue
        if i + _HEADER_LEN > n:
            break  # partial header
        length = data[i + 5]
        total = _HEADER_LEN + length + _CRC_LEN
        if i + total > n:
            break  # partial frame by claimed length
        flush_skip(i)
        body = data[i + 2 : i + _HEADER_LEN + length]
        crc_recv = int.from_bytes(data[i + _HEADER_LEN + length : i + total], "big")
        if crc16_ccitt_false(body) != crc_recv:
            diags.append(Diagnostic(DiagnosticKind.BAD_CRC, i))
            i += 1
            continue
        version, raw_type, seq = body[0], body[1], body[2]
        if version != PROTOCOL_VERSION:
            diags.append(Diagnostic(DiagnosticKind.BAD_VERSION, i, f"version {version:#04x}"))
            i += total
            continue
        try:
            mtype = MsgType(raw_type)
        except ValueError:
            diags.append(Diagnostic(DiagnosticKind.UNKNOWN_TYPE, i, f"type {raw_type:#04x}"))
            i += total
            continue
        if length != _FIXED_LENGTHS[mtype]:
            diags.append(Diagnostic(DiagnosticKind.BAD_LENGTH, i, f"{mtype.name} length {length}"))
            i += total
            continue
        try:
            msg = _parse_payload(mtype, body[4:])
        except ValueError as exc:
            diags.append(Diagnostic(DiagnosticKind.BAD_VALUE, i, str(exc)))
            i += total
            continue
        decoded.append(Decoded(seq, msg))
        i += total

    flush_skip(i)
    return decoded, diags, bytes(data[i:])


class StreamDecoder:
    """Incremental wrapper around decode_stream keeping the partial-frame tail."""

    def __init__(self) -> None:
        self._residual = b""
        self.diagnostics: list[Diagnostic] = []

    def feed(self, data: bytes) -> list[Decoded]:
        decoded, diags, residual = decode_stream(self._residual + data)
        self._residual = residual
        self.diagnostics.extend(diags)
        return decoded


class SendOutcome(enum.Enum):
    DELIVERED = "delivered"
    LINK_FAULT = "link_fault"


@dataclass(frozen=True)
class LinkConfig:
    ack_timeout_ms: float = 50.0
    max_retransmits: int = 3
    heartbeat_interval_ms: float = 100.0

    def validate(self) -> None:
        if self.ack_timeout_ms <= 0 or self.heartbeat_interval_ms <= 0 or self.max_retransmits <= 0:
            raise ValueError("link config values must be positive")


@dataclass(frozen=True)
class SendResult:
    outcome: SendOutcome
    attempts: int
    frames_sent: int
    elapsed_ms: float


class LinkEndpoint:
    """Sequence-number bookkeeping and stop-and-wait delivery for one direction.

    The channel is a callable taking the frame bytes and returning any
    response bytes available within the ack window (synchronous model; a
    failed attempt costs ack_timeout_ms of simulated time).
    """

    def __init__(self, cfg: LinkConfig | None = None) -> None:
        self.cfg = cfg or LinkConfig()
        self._seq = 0

    def next_seq(self) -> int:
        seq = self._seq
        self._seq = (self._seq + 1) & 0xFF
        return seq

    def send(self, msg: Message, channel) -> SendResult:
        seq = self.next_seq()
        frame = encode(msg, seq)
        if _TYPE_OF[type(msg)] not in RELIABLE_TYPES:
            channel(frame)
            return SendResult(SendOutcome.DELIVERED, 1, 1, 0.0)
        attempts = 0
        elapsed = 0.0
        decoder = StreamDecoder()
        while attempts <= self.cfg.max_retransmits:
            attempts += 1
            response = channel(frame)
            for item in decoder.feed(response or b""):
                if isinstance(item.message, Ack) and item.message.acked_seq == seq:
                    return SendResult(SendOutcome.DELIVERED, attempts, attempts, elapsed)
            elapsed += self.cfg.ack_timeout_ms
        return SendResult(SendOutcome.LINK_FAULT, attempts, attempts, elapsed)


def conformance_vectors() -> list[dict]:
    """Golden encode vectors covering every message type, for cross-checks."""
    samples: list[tuple[str, Message, int]] = [
        ("hello", Hello(), 0),
        ("ack", Ack(acked_seq=9), 1),
        ("nack", Nack(acked_seq=9, reason=2), 2),
        ("set_grasp_power", SetGrasp(grasp_id=1), 7),
        ("release", Release(), 8),
        ("abort", Abort(), 9),
        ("heartbeat", Heartbeat(), 0),
        ("telemetry_idle", Telemetry(0, (0, 0, 0, 0, 0), 0, 0), 3),
        ("telemetry_mixed", Telemetry(3, (400, -400, 123, -1, 0), 0b100101, 0b10), 4),
        ("fault_overpressure", Fault(code=1), 5),
    ]
    return [
        {"name": name, "seq": seq, "type": _TYPE_OF[type(msg)].name, "hex": encode(msg, seq).hex()}
        for name, msg, seq in samples
    ]
