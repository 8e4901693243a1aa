"""Classic pcap reading and Modbus payload extraction.

Walks a classic (libpcap) capture file, strips Ethernet/IPv4/TCP headers,
and yields timestamped TCP payload records filtered to the Modbus ports of
interest. The parser handles both endianness magics and the microsecond and
nanosecond timestamp variants; the newer pcapng format is rejected up front.

A "live" source is any stream in the same format, e.g. a fifo fed by
``tcpdump -U -w <fifo>``; the reader never seeks, so files and pipes go
through the same code path.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterator

from . import IcshuntError
from .modbus import Direction, ModbusCodecError, ModbusFrame, decode_stream

logger = logging.getLogger(__name__)

#: Standard Modbus/TCP port plus the honeypot mapping we hunt on.
DEFAULT_MODBUS_PORTS = frozenset({502, 5300})

_MAGIC_LE_MICRO = 0xA1B2C3D4
_MAGIC_BE_MICRO = 0xD4C3B2A1
_MAGIC_LE_NANO = 0xA1B23C4D
_MAGIC_BE_NANO = 0x4D3CB2A1
_PCAPNG_MAGIC = 0x0A0D0D0A

_ETHERTYPE_IPV4 = 0x0800
_ETHERTYPE_VLAN = 0x8100
_IPPROTO_TCP = 6
_LINKTYPE_ETHERNET = 1


class CaptureError(IcshuntError):
    """Base for capture-reading failures."""


class UnsupportedFormatError(CaptureError):
    """File is not a classic Ethernet capture this reader understands."""


class PartialReadError(CaptureError):
    """Capture ended mid-record; carries how many packets were yielded."""

    def __init__(self, message: str, packets_yielded: int):
        super().__init__(f"{message} (after {packets_yielded} packets)")
        self.packets_yielded = packets_yielded


class SourceKind(str, Enum):
    FILE = "file"
    LIVE = "live"


@dataclass(frozen=True)
class PacketRecord:
    """One TCP segment's payload with its addressing and capture timestamp."""

    ts_sec: int
    ts_usec: int
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    tcp_payload: bytes

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec / 1_000_000.0


@dataclass(frozen=True)
class CaptureSource:
    """Where packets come from and which ports we keep."""

    kind: SourceKind = SourceKind.FILE
    locator: str = ""
    port_filter: frozenset[int] = field(default_factory=lambda: DEFAULT_MODBUS_PORTS)

    def __post_init__(self):
        if not self.port_filter:
            raise ValueError("port_filter must not be empty")


@dataclass
class SkipCounters:
    """Per-read tallies of packets the filter or parser passed over."""

    non_ipv4: int = 0
    non_tcp: int = 0
    port_filtered: int = 0
    empty_payload: int = 0
    malformed: int = 0


def _ipv4(addr: bytes) -> str:
    return ".".join(str(b) for b in addr)


def _parse_ethernet_ipv4_tcp(data: bytes) -> tuple[str, str, int, int, bytes] | None:
    """Extract (src_ip, dst_ip, src_port, dst_port, payload) or None to skip.

    Uses the IP total length, not the captured length, to bound the payload:
    short Ethernet frames are zero-padded to the 60-byte minimum and that
    padding must not leak into the TCP payload.
    """
    if len(data) < 14:
        return None
    ethertype = struct.unpack(">H", data[12:14])[0]
    offset = 14
    if ethertype == _ETHERTYPE_VLAN:
        if len(data) < 18:
            return None
        ethertype = struct.unpack(">H", data[16:18])[0]
        offset = 18
    if ethertype != _ETHERTYPE_IPV4:
        return None

    ip = data[offset:]
    if len(ip) < 20:
        return None
    version_ihl = ip[0]
    if version_ihl >> 4 != 4:
        return None
    ihl = (version_ihl & 0x0F) * 4
    if ihl < 20 or len(ip) < ihl:
        return None
    total_length = struct.unpack(">H", ip[2:4])[0]
    if total_length < ihl or total_length > len(ip):
        return None
    flags_frag = struct.unpack(">H", ip[6:8])[0]
    if flags_frag & 0x1FFF:  # non-first fragment: no TCP header to read
        return None
    if ip[9] != _IPPROTO_TCP:
        return None
    src_ip = _ipv4(ip[12:16])
    dst_ip = _ipv4(ip[16:20])

    tcp = ip[ihl:total_length]
    if len(tcp) < 20:
        return None
    src_port, dst_port = struct.unpack(">HH", tcp[:4])
    data_offset = (tcp[12] >> 4) * 4
    if data_offset < 20 or data_offset > len(tcp):
        return None
    payload = tcp[data_offset:]
    return src_ip, dst_ip, src_port, dst_port, payload


def read_capture_stream(
    stream: BinaryIO,
    port_filter: frozenset[int] | set[int] = DEFAULT_MODBUS_PORTS,
    counters: SkipCounters | None = None,
) -> Iterator[PacketRecord]:
    """Yield filtered PacketRecords from an open classic-capture stream.

    Packets are kept when either TCP port is in ``port_filter`` and the
    payload is non-empty. Non-IPv4 and non-TCP packets are skipped silently
    (tallied in ``counters`` when given). Raises UnsupportedFormatError on a
    bad magic or link type and PartialReadError on a truncated record.
    """
    counters = counters if counters is not None else SkipCounters()
    header = stream.read(24)
    if len(header) < 24:
        raise UnsupportedFormatError("file too short for a capture global header")
    magic_le = struct.unpack("<I", header[:4])[0]
    if magic_le == _PCAPNG_MAGIC:
        raise UnsupportedFormatError("pcapng captures are not supported; convert to classic pcap")
    if magic_le in (_MAGIC_LE_MICRO, _MAGIC_LE_NANO):
        endian, nano = "<", magic_le == _MAGIC_LE_NANO
    elif magic_le in (_MAGIC_BE_MICRO, _MAGIC_BE_NANO):
        endian, nano = ">", magic_le == _MAGIC_BE_NANO
    else:
        raise UnsupportedFormatError(f"unrecognized capture magic 0x{magic_le:08X}")
    linktype = struct.unpack(endian + "I", header[20:24])[0]
    if linktype != _LINKTYPE_ETHERNET:
        raise UnsupportedFormatError(f"link type {linktype} is not Ethernet")

    yielded = 0
    while True:
        pkt_header = stream.read(16)
        if not pkt_header:
            return
        if len(pkt_header) < 16:
            raise PartialReadError("truncated packet header", yielded)
        ts_sec, ts_frac, incl_len, _orig_len = struct.unpack(endian + "IIII", pkt_header)
        data = stream.read(incl_len)
        if len(data) < incl_len:
            raise PartialReadError("truncated packet data", yielded)
        ts_usec = ts_frac // 1000 if nano else ts_frac

        parsed = _parse_ethernet_ipv4_tcp(data)
        if parsed is None:
            counters.non_ipv4 += 1
            continue
        src_ip, dst_ip, src_port, dst_port, payload = parsed
        if src_port not in port_filter and dst_port not in port_filter:
            counters.port_filtered += 1
            continue
        if not payload:
            counters.empty_payload += 1
            continue
        yield PacketRecord(ts_sec, ts_usec, src_ip, dst_ip, src_port, dst_port, payload)
        yielded += 1


def read_capture(
    source: CaptureSource, counters: SkipCounters | None = None
) -> Iterator[PacketRecord]:
    """Open a capture source and yield its filtered packet records.

    File and live sources differ only in what the locator points at (a dump
    file vs. a pipe carrying the same byte format).
    """
    with open(source.locator, "rb") as stream:
        yield from read_capture_stream(stream, source.port_filter, counters)


def extract_modbus(
    record: PacketRecord,
    server_ports: frozenset[int] | set[int] = DEFAULT_MODBUS_PORTS,
) -> list[ModbusFrame]:
    """Decode zero or more Modbus frames from a packet's TCP payload.

    Direction is inferred from port roles: traffic toward a server port is a
    request, traffic from one is a response. Undecodable payloads produce an
    empty (or truncated) result and a diagnostic log line, never an error:
    arbitrary non-Modbus bytes must not abort the pipeline.
    """
    if record.dst_port in server_ports and record.src_port not in server_ports:
        direction = Direction.REQUEST
    elif record.src_port in server_ports and record.dst_port not in server_ports:
        direction = Direction.RESPONSE
    else:
        direction = Direction.UNKNOWN

    frames: list[ModbusFrame] = []
    try:
        for frame in decode_stream(record.tcp_payload, direction):
            frames.append(frame)
    except ModbusCodecError as exc:
        logger.debug(
            "undecodable payload from %s:%d -> %s:%d after %d frame(s): %s",
            record.src_ip,
            record.src_port,
            record.dst_ip,
            record.dst_port,
            len(frames),
            exc,
        )
    return frames
