"""Modbus/TCP application-frame codec.

Decodes and encodes Modbus/TCP frames (MBAP header + PDU) carried in TCP
payloads. The typed PDU variants cover the function codes the hunting rules
care about; every other code decodes as :class:`RawPdu` so the detector never
chokes on unexpected traffic. All multi-byte integers are big-endian per the
wire format.

All functions here are pure and stateless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

MBAP_HEADER_LEN = 7
MODBUS_PROTOCOL_ID = 0

# Function codes with typed decoders
FC_READ_COILS = 0x01
FC_READ_HOLDING_REGISTERS = 0x03
FC_WRITE_SINGLE_COIL = 0x05
FC_WRITE_SINGLE_REGISTER = 0x06
FC_REPORT_SERVER_ID = 0x11
FC_ENCAPSULATED_TRANSPORT = 0x2B
MEI_READ_DEVICE_ID = 0x0E

# Legal values for a single-coil write
COIL_ON = 0xFF00
COIL_OFF = 0x0000

EXCEPTION_FLAG = 0x80


class Direction(str, Enum):
    REQUEST = "request"
    RESPONSE = "response"
    UNKNOWN = "unknown"


class PduKind(str, Enum):
    READ = "read"
    WRITE = "write"
    IDENTIFICATION = "identification"
    EXCEPTION = "exception"
    OTHER = "other"


class ModbusCodecError(ValueError):
    """Base for all codec failures."""


class TruncationError(ModbusCodecError):
    """Input shorter than a complete MBAP header plus function code."""


class NotModbusError(ModbusCodecError):
    """MBAP protocol identifier is not 0."""


class LengthError(ModbusCodecError):
    """Declared MBAP length disagrees with the available bytes."""


class EncodingError(ModbusCodecError):
    """Frame violates an invariant and cannot be put on the wire."""


@dataclass(frozen=True)
class MbapHeader:
    """7-byte Modbus/TCP transport header.

    ``length`` counts the unit identifier plus the PDU, i.e. everything that
    follows the length field itself.
    """

    transaction_id: int
    protocol_id: int
    length: int
    unit_id: int


@dataclass(frozen=True)
class ReadCoils:
    start: int
    quantity: int


@dataclass(frozen=True)
class ReadHoldingRegisters:
    start: int
    quantity: int


@dataclass(frozen=True)
class WriteSingleCoil:
    address: int
    value: int  # COIL_ON or COIL_OFF only


@dataclass(frozen=True)
class WriteSingleRegister:
    address: int
    value: int


@dataclass(frozen=True)
class ReportServerId:
    """Server-identification request (empty body)."""


@dataclass(frozen=True)
class ReadDeviceIdentification:
    """Encapsulated-transport device identification request (MEI 0x0E)."""

    read_code: int
    object_id: int


@dataclass(frozen=True)
class ExceptionPdu:
    original_code: int
    exception_code: int


@dataclass(frozen=True)
class RawPdu:
    payload: bytes


PduBody = Union[
    ReadCoils,
    ReadHoldingRegisters,
    WriteSingleCoil,
    WriteSingleRegister,
    ReportServerId,
    ReadDeviceIdentification,
    ExceptionPdu,
    RawPdu,
]


@dataclass(frozen=True)
class ModbusPdu:
    function_code: int
    body: PduBody


@dataclass(frozen=True)
class ModbusFrame:
    header: MbapHeader
    pdu: ModbusPdu
    direction: Direction = Direction.UNKNOWN


def _decode_body(function_code: int, body: bytes, direction: Direction) -> PduBody:
    """Pick the typed variant for a PDU body, falling back to RawPdu.

    Read requests and responses share a function code but not a body layout,
    so typed read bodies are only produced when the frame is not known to be
    a response. Anything that does not match the expected shape decodes as
    raw bytes rather than erroring.
    """
    if function_code & EXCEPTION_FLAG:
        if len(body) == 1:
            return ExceptionPdu(original_code=function_code & 0x7F, exception_code=body[0])
        return RawPdu(body)

    if function_code in (FC_READ_COILS, FC_READ_HOLDING_REGISTERS):
        if len(body) == 4 and direction is not Direction.RESPONSE:
            start, quantity = struct.unpack(">HH", body)
            if function_code == FC_READ_COILS:
                return ReadCoils(start, quantity)
            return ReadHoldingRegisters(start, quantity)
        return RawPdu(body)

    if function_code == FC_WRITE_SINGLE_COIL:
        # Request and response bodies are identical; only the two legal coil
        # constants get the typed variant.
        if len(body) == 4:
            address, value = struct.unpack(">HH", body)
            if value in (COIL_ON, COIL_OFF):
                return WriteSingleCoil(address, value)
        return RawPdu(body)

    if function_code == FC_WRITE_SINGLE_REGISTER:
        if len(body) == 4:
            address, value = struct.unpack(">HH", body)
            return WriteSingleRegister(address, value)
        return RawPdu(body)

    if function_code == FC_REPORT_SERVER_ID:
        if len(body) == 0:
            return ReportServerId()
        return RawPdu(body)

    if function_code == FC_ENCAPSULATED_TRANSPORT:
        if len(body) == 3 and body[0] == MEI_READ_DEVICE_ID:
            return ReadDeviceIdentification(read_code=body[1], object_id=body[2])
        return RawPdu(body)

    return RawPdu(body)


def _encode_body(pdu: ModbusPdu) -> bytes:
    body = pdu.body
    if isinstance(body, RawPdu):
        return body.payload
    if isinstance(body, (ReadCoils, ReadHoldingRegisters)):
        return struct.pack(">HH", body.start, body.quantity)
    if isinstance(body, WriteSingleCoil):
        if body.value not in (COIL_ON, COIL_OFF):
            raise EncodingError(
                f"illegal coil value 0x{body.value:04X}; must be 0x0000 or 0xFF00"
            )
        return struct.pack(">HH", body.address, body.value)
    if isinstance(body, WriteSingleRegister):
        return struct.pack(">HH", body.address, body.value)
    if isinstance(body, ReportServerId):
        return b""
    if isinstance(body, ReadDeviceIdentification):
        return bytes([MEI_READ_DEVICE_ID, body.read_code, body.object_id])
    if isinstance(body, ExceptionPdu):
        return bytes([body.exception_code])
    raise EncodingError(f"unsupported PDU body type {type(body).__name__}")


def _check_u16(value: int, what: str) -> None:
    if not 0 <= value <= 0xFFFF:
        raise EncodingError(f"{what} {value} out of 16-bit range")


def decode_frame(data: bytes, direction_hint: Direction = Direction.UNKNOWN) -> ModbusFrame:
    """Decode exactly one Modbus/TCP frame from ``data``.

    Raises TruncationError when the input cannot hold an MBAP header plus a
    function code, NotModbusError when the protocol id is non-zero, and
    LengthError when the declared MBAP length does not match the bytes
    actually supplied (including trailing garbage).
    """
    if len(data) < MBAP_HEADER_LEN + 1:
        raise TruncationError(
            f"need at least {MBAP_HEADER_LEN + 1} bytes for a Modbus/TCP frame, got {len(data)}"
        )
    transaction_id, protocol_id, length, unit_id = struct.unpack(">HHHB", data[:MBAP_HEADER_LEN])
    if protocol_id != MODBUS_PROTOCOL_ID:
        raise NotModbusError(f"protocol id {protocol_id} is not Modbus/TCP")
    if length < 2:
        raise LengthError(f"declared length {length} cannot hold unit id and function code")
    available = len(data) - 6  # bytes following the length field
    if length != available:
        raise LengthError(f"declared length {length} but {available} bytes follow the header")

    header = MbapHeader(transaction_id, protocol_id, length, unit_id)
    function_code = data[MBAP_HEADER_LEN]
    body = data[MBAP_HEADER_LEN + 1 :]
    pdu = ModbusPdu(function_code, _decode_body(function_code, body, direction_hint))
    return ModbusFrame(header, pdu, direction_hint)


def decode_stream(
    data: bytes, direction_hint: Direction = Direction.UNKNOWN
) -> Iterator[ModbusFrame]:
    """Decode consecutive frames from one TCP payload.

    Each frame is sliced by its declared MBAP length, so the decoder never
    reads past it. Raises on the first malformed frame; frames already
    yielded stay valid.
    """
    offset = 0
    while offset < len(data):
        chunk = data[offset:]
        if len(chunk) < MBAP_HEADER_LEN + 1:
            raise TruncationError(f"{len(chunk)} trailing bytes cannot hold a frame")
        (length,) = struct.unpack(">H", chunk[4:6])
        frame_len = 6 + length
        if frame_len > len(chunk):
            raise LengthError(
                f"frame at offset {offset} declares {frame_len} bytes, {len(chunk)} available"
            )
        yield decode_frame(chunk[:frame_len], direction_hint)
        offset += frame_len


def encode_frame(frame: ModbusFrame) -> bytes:
    """Serialize a frame, recomputing the MBAP length from the body.

    Raises EncodingError when a frame invariant does not hold (illegal coil
    value, out-of-range header fields, non-zero protocol id).
    """
    header = frame.header
    _check_u16(header.transaction_id, "transaction id")
    if header.protocol_id != MODBUS_PROTOCOL_ID:
        raise EncodingError(f"protocol id must be 0, got {header.protocol_id}")
    if not 0 <= header.unit_id <= 0xFF:
        raise EncodingError(f"unit id {header.unit_id} out of 8-bit range")
    if not 0 <= frame.pdu.function_code <= 0xFF:
        raise EncodingError(f"function code {frame.pdu.function_code} out of 8-bit range")
    if isinstance(frame.pdu.body, ExceptionPdu):
        if frame.pdu.function_code & EXCEPTION_FLAG == 0:
            raise EncodingError("exception body requires the function-code high bit")
        if frame.pdu.function_code & 0x7F != frame.pdu.body.original_code:
            raise EncodingError("exception original_code disagrees with function code")

    body = _encode_body(frame.pdu)
    length = 2 + len(body)  # unit id + function code + body
    _check_u16(length, "MBAP length")
    return (
        struct.pack(">HHHB", header.transaction_id, header.protocol_id, length, header.unit_id)
        + bytes([frame.pdu.function_code])
        + body
    )


def classify_pdu(frame: ModbusFrame) -> PduKind:
    """Bucket a frame by what the sender is trying to do. Total and pure."""
    fc = frame.pdu.function_code
    if fc & EXCEPTION_FLAG:
        return PduKind.EXCEPTION
    if fc in (FC_READ_COILS, FC_READ_HOLDING_REGISTERS):
        return PduKind.READ
    if fc in (FC_WRITE_SINGLE_COIL, FC_WRITE_SINGLE_REGISTER):
        return PduKind.WRITE
    if fc == FC_REPORT_SERVER_ID:
        return PduKind.IDENTIFICATION
    if fc == FC_ENCAPSULATED_TRANSPORT:
        body = frame.pdu.body
        if isinstance(body, ReadDeviceIdentification):
            return PduKind.IDENTIFICATION
        if isinstance(body, RawPdu) and body.payload[:1] == bytes([MEI_READ_DEVICE_ID]):
            return PduKind.IDENTIFICATION
        return PduKind.OTHER
    return PduKind.OTHER


def make_frame(
    function_code: int,
    body: PduBody,
    transaction_id: int = 0,
    unit_id: int = 1,
    direction: Direction = Direction.UNKNOWN,
) -> ModbusFrame:
    """Build a frame with the MBAP length precomputed from the body."""
    pdu = ModbusPdu(function_code, body)
    length = 2 + len(_encode_body(pdu))
    header = MbapHeader(transaction_id, MODBUS_PROTOCOL_ID, length, unit_id)
    return ModbusFrame(header, pdu, direction)
