"""Virtual-environment state updates, dead-band send suppression, and the
ASCII wire codec.

Coordinates travel as fixed-width signed decimal text, so reducing the
fraction width shrinks every coordinate-bearing packet by the same number
of bytes per scalar.  A pose update (position plus rotation) at 12 fraction
digits is exactly 100 bytes on the wire.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal

WORKSPACE_LIMIT = 100.0  # coordinate magnitude bound, simulation units

GRAB_CODE = 1
RELEASE_CODE = 2


class EncodingOverflowError(ValueError):
    """A scalar does not fit its fixed-width wire field."""


class WireFormatError(ValueError):
    """Malformed wire line.  ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True, slots=True)
class Vec3:
    """Point or vector in simulation units (1 unit is roughly a metre)."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, factor: float) -> "Vec3":
        return Vec3(self.x * factor, self.y * factor, self.z * factor)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


class UpdateKind(enum.Enum):
    """The four update classes exchanged between clients and the server."""

    HIP_POS = "HIPP"      # client -> server: haptic interface point position
    CUBE_POSE = "CUBE"    # server -> client: object position + rotation angle
    KEY_EVENT = "KEYE"    # client -> server: grab/release, eligible for reliable delivery
    ACK = "ACK_"          # server -> client: acknowledgment of a KEY_EVENT


# Integer-digit widths of the scalar fields carried by each kind.  The
# rotation angle of a pose gets a wider field because it accumulates and is
# not bounded by the workspace the way positions are.
_VALUE_WIDTHS: dict[UpdateKind, tuple[int, ...]] = {
    UpdateKind.HIP_POS: (2, 2, 2),
    UpdateKind.CUBE_POSE: (2, 2, 2, 3),
    UpdateKind.KEY_EVENT: (),
    UpdateKind.ACK: (),
}

# KEY_EVENT carries a grab/release code, ACK carries the acknowledged seq;
# both ride in a fixed 8-digit auxiliary field instead of scalar values.
_AUX_KINDS = frozenset((UpdateKind.KEY_EVENT, UpdateKind.ACK))

_TAG_TO_KIND = {kind.value: kind for kind in UpdateKind}

_SEQ_DIGITS = 8
_TIME_DIGITS = 10
_ID_DIGITS = 2
_AUX_DIGITS = 8
# kind tag + seq + time + sender + object, four separators, one newline
_FRAME_OVERHEAD = 4 + _SEQ_DIGITS + _TIME_DIGITS + 2 * _ID_DIGITS + 4 + 1


@dataclass(frozen=True, slots=True)
class UpdatePacket:
    """One state update.

    ``seq`` increases strictly per (sender, kind).  ``send_time_ms`` is the
    simulation clock at transmission, already reduced to whole milliseconds
    (that is all the wire carries).  ``aux`` holds the event code of a
    KEY_EVENT or the acknowledged seq of an ACK and is None otherwise.
    """

    kind: UpdateKind
    seq: int
    send_time_ms: int
    sender_id: int
    object_id: int
    values: tuple[float, ...] = ()
    aux: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        widths = _VALUE_WIDTHS[self.kind]
        if len(self.values) != len(widths):
            raise ValueError(
                f"{self.kind.name} carries {len(widths)} scalars, got {len(self.values)}"
            )
        if (self.aux is not None) != (self.kind in _AUX_KINDS):
            raise ValueError(f"aux field mismatch for {self.kind.name}")
        for name, val in (("seq", self.seq), ("send_time_ms", self.send_time_ms),
                          ("sender_id", self.sender_id), ("object_id", self.object_id)):
            if not isinstance(val, int) or val < 0:
                raise ValueError(f"{name} must be a non-negative integer")
        if self.aux is not None and (not isinstance(self.aux, int) or self.aux < 0):
            raise ValueError("aux must be a non-negative integer")


@dataclass(frozen=True, slots=True)
class QuantizerConfig:
    """Update precision: the quantum below which state changes are not sent,
    and how many fraction digits each scalar gets on the wire.

    The wire must never be coarser than the quantum, otherwise encoding
    would silently hide state the quantizer decided to send.
    """

    quantum: float = 0.0001
    decimals: int = 12

    def __post_init__(self):
        if not (isinstance(self.quantum, float) or isinstance(self.quantum, int)):
            raise ValueError("quantum must be numeric")
        if not math.isfinite(self.quantum) or self.quantum <= 0:
            raise ValueError("quantum must be a positive finite number")
        if not isinstance(self.decimals, int) or not (1 <= self.decimals <= 15):
            raise ValueError("decimals must be an integer in [1, 15]")
        if Decimal(str(self.quantum)) < Decimal(1).scaleb(-self.decimals):
            raise ValueError(
                f"quantum {self.quantum} finer than wire precision 1e-{self.decimals}"
            )


def round_half_away(x: float) -> int:
    """Round to the nearest integer with exact ties going away from zero."""
    if x >= 0:
        return math.floor(x + 0.5)
    return -math.floor(-x + 0.5)


def quantize(value: float, quantum: float) -> float:
    """Snap ``value`` to the nearest multiple of ``quantum``.

    Ties round away from zero, evaluated in decimal so that e.g.
    quantize(-0.00015, 0.0001) lands on -0.0002 rather than drifting with
    binary round-off.  Idempotent: quantizing a quantized value is a no-op.
    """
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValueError(f"value must be finite, got {value!r}")
    if not isinstance(quantum, (int, float)) or not math.isfinite(quantum) or quantum <= 0:
        raise ValueError(f"quantum must be positive and finite, got {quantum!r}")
    q = Decimal(str(quantum))
    cells = (Decimal(str(value)) / q).to_integral_value(rounding=ROUND_HALF_UP)
    return float(cells * q)


def should_transmit(last_sent: Vec3, current: Vec3, quantum: float) -> bool:
    """Dead-band test: send iff any quantized component moved.

    A True result obliges the caller to record quantize(current) as the new
    baseline, otherwise suppression drifts.
    """
    return (
        quantize(current.x, quantum) != quantize(last_sent.x, quantum)
        or quantize(current.y, quantum) != quantize(last_sent.y, quantum)
        or quantize(current.z, quantum) != quantize(last_sent.z, quantum)
    )


def packet_size(kind: UpdateKind, decimals: int) -> int:
    """Wire size in bytes, a pure function of (kind, decimals).

    Dropping the fraction width from 12 to 4 digits removes exactly 8 bytes
    per carried scalar: a pose update goes 100 -> 68 bytes, a point update
    82 -> 58.
    """
    if not (1 <= decimals <= 15):
        raise ValueError("decimals must be in [1, 15]")
    size = _FRAME_OVERHEAD
    for width in _VALUE_WIDTHS[kind]:
        size += 1 + 1 + width + 1 + decimals  # ';' sign digits '.' fraction
    if kind in _AUX_KINDS:
        size += 1 + _AUX_DIGITS
    return size


def _format_scalar(value: float, int_width: int, decimals: int) -> str:
    dec = Decimal(str(value)).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_DOWN)
    if dec == 0:
        dec = abs(dec)  # canonical '+' zero
    magnitude = abs(dec)
    if magnitude >= 10 ** int_width:
        raise EncodingOverflowError(
            f"scalar {value!r} exceeds +/-{10 ** int_width} wire field"
        )
    sign = "-" if dec < 0 else "+"
    body = f"{magnitude:.{decimals}f}".zfill(int_width + 1 + decimals)
    return sign + body


def encode_packet(packet: UpdatePacket, decimals: int) -> bytes:
    """Render a packet as one ASCII line.

    Fields are ';'-separated and the line ends with a single newline.
    Injective for a fixed ``decimals``; scalars with excess precision are
    truncated toward zero to ``decimals`` fraction digits.
    """
    if not (1 <= decimals <= 15):
        raise ValueError("decimals must be in [1, 15]")
    if packet.seq >= 10 ** _SEQ_DIGITS:
        raise EncodingOverflowError(f"seq {packet.seq} exceeds {_SEQ_DIGITS} digits")
    if packet.send_time_ms >= 10 ** _TIME_DIGITS:
        raise EncodingOverflowError("send_time_ms exceeds wire field")
    if packet.sender_id >= 10 ** _ID_DIGITS or packet.object_id >= 10 ** _ID_DIGITS:
        raise EncodingOverflowError("endpoint/object id exceeds two digits")
    fields = [
        packet.kind.value,
        f"{packet.seq:0{_SEQ_DIGITS}d}",
        f"{packet.send_time_ms:0{_TIME_DIGITS}d}",
        f"{packet.sender_id:0{_ID_DIGITS}d}",
        f"{packet.object_id:0{_ID_DIGITS}d}",
    ]
    for value, width in zip(packet.values, _VALUE_WIDTHS[packet.kind]):
        fields.append(_format_scalar(value, width, decimals))
    if packet.aux is not None:
        if packet.aux >= 10 ** _AUX_DIGITS:
            raise EncodingOverflowError("aux exceeds wire field")
        fields.append(f"{packet.aux:0{_AUX_DIGITS}d}")
    line = ";".join(fields) + "\n"
    return line.encode("ascii")


def _expect(data: bytes, offset: int, char: bytes, what: str) -> None:
    if offset >= len(data) or data[offset:offset + 1] != char:
        raise WireFormatError(f"expected {what}", offset)


def _take_digits(data: bytes, offset: int, count: int, what: str) -> tuple[int, int]:
    end = offset + count
    chunk = data[offset:end]
    if len(chunk) < count or not chunk.isdigit():
        raise WireFormatError(f"expected {count} digits for {what}", offset)
    return int(chunk), end


def decode_packet(data: bytes) -> UpdatePacket:
    """Exact inverse of :func:`encode_packet` up to wire precision.

    Rejects anything that the encoder could not have produced; errors name
    the byte offset of the first fault.
    """
    if isinstance(data, str):
        data = data.encode("ascii")
    if not data:
        raise WireFormatError("empty input", 0)
    tag = data[0:4].decode("ascii", errors="replace")
    kind = _TAG_TO_KIND.get(tag)
    if kind is None:
        raise WireFormatError(f"unknown kind tag {tag!r}", 0)
    offset = 4
    _expect(data, offset, b";", "';' after kind")
    offset += 1
    seq, offset = _take_digits(data, offset, _SEQ_DIGITS, "seq")
    _expect(data, offset, b";", "';' after seq")
    offset += 1
    send_time, offset = _take_digits(data, offset, _TIME_DIGITS, "send time")
    _expect(data, offset, b";", "';' after send time")
    offset += 1
    sender, offset = _take_digits(data, offset, _ID_DIGITS, "sender id")
    _expect(data, offset, b";", "';' after sender id")
    offset += 1
    obj, offset = _take_digits(data, offset, _ID_DIGITS, "object id")

    values: list[float] = []
    widths = _VALUE_WIDTHS[kind]
    decimals: int | None = None
    for width in widths:
        _expect(data, offset, b";", "';' before scalar")
        offset += 1
        sign_byte = data[offset:offset + 1]
        if sign_byte not in (b"+", b"-"):
            raise WireFormatError("expected sign character", offset)
        start = offset
        offset += 1
        int_part, offset = _take_digits(data, offset, width, "integer digits")
        _expect(data, offset, b".", "decimal point")
        offset += 1
        frac_start = offset
        while offset < len(data) and data[offset:offset + 1].isdigit():
            offset += 1
        got = offset - frac_start
        if decimals is None:
            if not (1 <= got <= 15):
                raise WireFormatError("fraction width out of range", frac_start)
            decimals = got
        elif got != decimals:
            raise WireFormatError("inconsistent fraction width", frac_start)
        values.append(float(data[start:offset]))

    aux: int | None = None
    if kind in _AUX_KINDS:
        _expect(data, offset, b";", "';' before aux field")
        offset += 1
        aux, offset = _take_digits(data, offset, _AUX_DIGITS, "aux field")

    _expect(data, offset, b"\n", "newline terminator")
    offset += 1
    if offset != len(data):
        raise WireFormatError("trailing bytes after packet", offset)
    return UpdatePacket(
        kind=kind,
        seq=seq,
        send_time_ms=send_time,
        sender_id=sender,
        object_id=obj,
        values=tuple(values),
        aux=aux,
    )
