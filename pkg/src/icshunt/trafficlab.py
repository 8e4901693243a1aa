"""Deterministic synthesis of labeled Modbus/TCP attack captures.

Builds classic pcap files that replay a four-step intrusion against a
Modbus honeypot — service scanning, device identification, unit-id
enumeration, and state modification — plus benign polling noise from a
bystander host. Request/response pairs are synthesized directly rather than
emulating a live server, so the same spec and seed always produce
byte-identical captures, and every capture ships with a ground-truth sidecar
naming what each packet range contains.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import IcshuntError
from .capture import PacketRecord
from .modbus import (
    COIL_ON,
    FC_ENCAPSULATED_TRANSPORT,
    FC_READ_COILS,
    FC_READ_HOLDING_REGISTERS,
    FC_REPORT_SERVER_ID,
    FC_WRITE_SINGLE_COIL,
    FC_WRITE_SINGLE_REGISTER,
    Direction,
    ExceptionPdu,
    RawPdu,
    ReadCoils,
    ReadDeviceIdentification,
    ReadHoldingRegisters,
    ReportServerId,
    WriteSingleCoil,
    WriteSingleRegister,
    encode_frame,
    make_frame,
)

#: Fixed capture epoch so identical specs yield identical files.
CAPTURE_EPOCH = 1625097600  # 2021-07-01T00:00:00Z

#: Exception code used for probes of absent unit ids.
EXC_GATEWAY_TARGET_FAILED = 0x0B
EXC_ILLEGAL_FUNCTION = 0x01

#: Function codes probed by the scan step. Deliberately excludes the write
#: and identification codes so the scan range only trips the scan rule.
SCAN_FUNCTION_CODES = (
    0x01, 0x02, 0x03, 0x04, 0x07, 0x08, 0x0B, 0x0C, 0x0F, 0x10, 0x14, 0x15, 0x16, 0x17, 0x18,
)

UID_SWEEP_RANGE = range(1, 13)


class ScenarioError(IcshuntError):
    """Scenario spec fails validation."""


class AttackStep(str, Enum):
    SCAN = "scan"
    DEVICE_IDENTIFICATION = "device_identification"
    UID_ENUMERATION = "uid_enumeration"
    STATE_MODIFICATION = "state_modification"


#: Attack type each step is expected to surface as, and the ATT&CK ICS
#: technique ids the bundled rules attach to it.
STEP_EXPECTATIONS = {
    AttackStep.SCAN: ("Network Scan", ("T0846",)),
    AttackStep.DEVICE_IDENTIFICATION: ("Device Identification", ("T0888",)),
    AttackStep.UID_ENUMERATION: ("UID Enumeration", ("T0846",)),
    AttackStep.STATE_MODIFICATION: ("Unauthorized Write", ("T0855", "T0836")),
}

DEFAULT_STEPS = (
    AttackStep.SCAN,
    AttackStep.DEVICE_IDENTIFICATION,
    AttackStep.UID_ENUMERATION,
    AttackStep.STATE_MODIFICATION,
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthesized attack capture.

    ``steps`` may be empty only when ``background_traffic`` is positive;
    that combination produces the benign-only capture used to check the
    pipeline's false-positive floor.
    """

    attacker_ip: str = "198.51.100.66"
    victim_ip: str = "192.0.2.10"
    victim_port: int = 5300
    steps: tuple[AttackStep, ...] = DEFAULT_STEPS
    inter_packet_gap: float = 0.25
    background_traffic: int = 12
    background_ip: str = "203.0.113.50"
    seed: int = 42

    def validate(self) -> None:
        if not self.steps and self.background_traffic <= 0:
            raise ScenarioError("scenario needs at least one attack step or background traffic")
        if self.inter_packet_gap <= 0:
            raise ScenarioError("inter_packet_gap must be positive")
        if not 0 < self.victim_port <= 0xFFFF:
            raise ScenarioError(f"victim_port {self.victim_port} out of range")
        if len(set(self.steps)) != len(self.steps):
            raise ScenarioError("steps must not repeat")
        if self.background_traffic < 0:
            raise ScenarioError("background_traffic must be >= 0")


@dataclass(frozen=True)
class StepTruth:
    step: AttackStep
    attack_type: str
    first_index: int
    last_index: int
    technique_ids: tuple[str, ...]


@dataclass(frozen=True)
class GroundTruth:
    """What the capture contains, by packet index range (inclusive)."""

    attacker_ip: str
    victim_ip: str
    victim_port: int
    total_packets: int
    steps: tuple[StepTruth, ...] = field(default_factory=tuple)

    def to_json(self) -> str:
        doc = {
            "attacker_ip": self.attacker_ip,
            "victim_ip": self.victim_ip,
            "victim_port": self.victim_port,
            "total_packets": self.total_packets,
            "steps": [
                {
                    "step": s.step.value,
                    "attack_type": s.attack_type,
                    "first_index": s.first_index,
                    "last_index": s.last_index,
                    "technique_ids": list(s.technique_ids),
                }
                for s in self.steps
            ],
        }
        return json.dumps(doc, indent=2)


class _FlowClock:
    """Monotone packet clock plus per-flow TCP sequence bookkeeping."""

    def __init__(self, spec: ScenarioSpec, rng: np.random.Generator):
        self.now = float(CAPTURE_EPOCH)
        self.gap = spec.inter_packet_gap
        self.rng = rng
        self.seq: dict[tuple[str, int, str, int], int] = {}

    def tick(self) -> float:
        self.now += self.gap
        return self.now

    def reply_time(self) -> float:
        # Responses land a few ms after the request, never a full gap.
        self.now += float(self.rng.integers(2, 9)) / 1000.0
        return self.now

    def next_seq(self, src: str, sport: int, dst: str, dport: int, size: int) -> int:
        key = (src, sport, dst, dport)
        if key not in self.seq:
            self.seq[key] = int(self.rng.integers(1, 2**31))
        seq = self.seq[key]
        self.seq[key] = (seq + size) & 0xFFFFFFFF
        return seq


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f">{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _mac_for(ip: str) -> bytes:
    octets = [int(p) for p in ip.split(".")]
    return bytes([0x02, 0x1C] + octets)


def _ip_bytes(ip: str) -> bytes:
    parts = [int(p) for p in ip.split(".")]
    if len(parts) != 4 or any(not 0 <= p <= 255 for p in parts):
        raise ScenarioError(f"invalid IPv4 address {ip!r}")
    return bytes(parts)


def build_ethernet_frame(record: PacketRecord, seq: int = 0, ack: int = 0) -> bytes:
    """Wrap a payload record in Ethernet/IPv4/TCP headers with checksums."""
    payload = record.tcp_payload
    tcp_header = struct.pack(
        ">HHIIBBHHH",
        record.src_port,
        record.dst_port,
        seq,
        ack,
        5 << 4,
        0x18,  # PSH|ACK
        8192,
        0,
        0,
    )
    src, dst = _ip_bytes(record.src_ip), _ip_bytes(record.dst_ip)
    pseudo = src + dst + struct.pack(">BBH", 0, 6, len(tcp_header) + len(payload))
    tcp_csum = _checksum(pseudo + tcp_header + payload)
    tcp_header = tcp_header[:16] + struct.pack(">H", tcp_csum) + tcp_header[18:]

    total_len = 20 + len(tcp_header) + len(payload)
    ip_header = struct.pack(
        ">BBHHHBBH4s4s",
        0x45,
        0,
        total_len,
        (record.ts_usec ^ record.src_port) & 0xFFFF,  # arbitrary but deterministic IP id
        0x4000,  # don't fragment
        64,
        6,
        0,
        src,
        dst,
    )
    ip_csum = _checksum(ip_header)
    ip_header = ip_header[:10] + struct.pack(">H", ip_csum) + ip_header[12:]

    eth = _mac_for(record.dst_ip) + _mac_for(record.src_ip) + struct.pack(">H", 0x0800)
    return eth + ip_header + tcp_header + payload


def write_capture_bytes(records: Sequence[PacketRecord]) -> bytes:
    """Render records as a classic little-endian microsecond pcap."""
    if not records:
        raise ScenarioError("cannot write a capture with no records")
    out = [struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, 1)]
    seq_state: dict[tuple[str, int, str, int], int] = {}
    for record in records:
        key = (record.src_ip, record.src_port, record.dst_ip, record.dst_port)
        seq = seq_state.get(key, 1)
        seq_state[key] = (seq + len(record.tcp_payload)) & 0xFFFFFFFF
        frame = build_ethernet_frame(record, seq=seq)
        out.append(struct.pack("<IIII", record.ts_sec, record.ts_usec, len(frame), len(frame)))
        out.append(frame)
    return b"".join(out)


def write_capture(records: Sequence[PacketRecord], path: str) -> int:
    """Write records to a pcap file; returns the byte count written."""
    data = write_capture_bytes(records)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise ScenarioError(f"cannot write capture to {path}: {exc}") from exc
    return len(data)


def _record(ts: float, src: str, sport: int, dst: str, dport: int, payload: bytes) -> PacketRecord:
    ts_sec = int(ts)
    ts_usec = int(round((ts - ts_sec) * 1_000_000))
    if ts_usec >= 1_000_000:
        ts_sec, ts_usec = ts_sec + 1, ts_usec - 1_000_000
    return PacketRecord(
        ts_sec=ts_sec,
        ts_usec=ts_usec,
        src_ip=src,
        dst_ip=dst,
        src_port=sport,
        dst_port=dport,
        tcp_payload=payload,
    )


class _ScenarioBuilder:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.clock = _FlowClock(spec, self.rng)
        self.records: list[PacketRecord] = []
        self.attacker_port = 40000 + int(self.rng.integers(0, 2000))
        self.background_port = 50000 + int(self.rng.integers(0, 2000))
        self.tid = 0

    def next_tid(self) -> int:
        self.tid = (self.tid + 1) & 0xFFFF
        return self.tid

    def exchange(self, request, response, src_ip=None, src_port=None) -> None:
        """Append one request/response pair on the attacker (or given) flow."""
        spec = self.spec
        src_ip = src_ip or spec.attacker_ip
        src_port = src_port or self.attacker_port
        ts = self.clock.tick()
        self.records.append(
            _record(ts, src_ip, src_port, spec.victim_ip, spec.victim_port, encode_frame(request))
        )
        if response is not None:
            ts = self.clock.reply_time()
            self.records.append(
                _record(ts, spec.victim_ip, spec.victim_port, src_ip, src_port, encode_frame(response))
            )

    def handshake(self, src_ip: str, src_port: int) -> None:
        """Empty-payload SYN/SYN-ACK/ACK; the reader must drop all three."""
        spec = self.spec
        for s_ip, s_port, d_ip, d_port in (
            (src_ip, src_port, spec.victim_ip, spec.victim_port),
            (spec.victim_ip, spec.victim_port, src_ip, src_port),
            (src_ip, src_port, spec.victim_ip, spec.victim_port),
        ):
            ts = self.clock.tick()
            self.records.append(_record(ts, s_ip, s_port, d_ip, d_port, b""))

    def scan(self) -> None:
        for fc in SCAN_FUNCTION_CODES:
            tid = self.next_tid()
            if fc in (0x01, 0x02):
                req = make_frame(fc, ReadCoils(0, 8) if fc == 0x01 else RawPdu(struct.pack(">HH", 0, 8)),
                                 tid, 1, Direction.REQUEST)
                resp = make_frame(fc, RawPdu(b"\x01\x00"), tid, 1, Direction.RESPONSE)
            elif fc in (0x03, 0x04):
                req = make_frame(fc, ReadHoldingRegisters(0, 2) if fc == 0x03 else RawPdu(struct.pack(">HH", 0, 2)),
                                 tid, 1, Direction.REQUEST)
                resp = make_frame(fc, RawPdu(b"\x04\x00\x00\x00\x00"), tid, 1, Direction.RESPONSE)
            elif fc == 0x07:
                req = make_frame(fc, RawPdu(b""), tid, 1, Direction.REQUEST)
                resp = make_frame(fc, RawPdu(b"\x00"), tid, 1, Direction.RESPONSE)
            else:
                req = make_frame(fc, RawPdu(b"\x00\x00"), tid, 1, Direction.REQUEST)
                resp = make_frame(fc | 0x80, ExceptionPdu(fc, EXC_ILLEGAL_FUNCTION),
                                  tid, 1, Direction.RESPONSE)
            self.exchange(req, resp)

    def device_identification(self) -> None:
        tid = self.next_tid()
        req = make_frame(FC_ENCAPSULATED_TRANSPORT, ReadDeviceIdentification(0x01, 0x00),
                         tid, 1, Direction.REQUEST)
        vendor = b"\x0e\x01\x01\x00\x00\x03\x00\x09SimulatedPLC"[:20]
        resp = make_frame(FC_ENCAPSULATED_TRANSPORT, RawPdu(vendor), tid, 1, Direction.RESPONSE)
        self.exchange(req, resp)

        tid = self.next_tid()
        req = make_frame(FC_REPORT_SERVER_ID, ReportServerId(), tid, 1, Direction.REQUEST)
        resp = make_frame(FC_REPORT_SERVER_ID, RawPdu(b"\x05\x11\xffPLC1"), tid, 1, Direction.RESPONSE)
        self.exchange(req, resp)

    def uid_enumeration(self) -> None:
        for unit in UID_SWEEP_RANGE:
            tid = self.next_tid()
            req = make_frame(FC_READ_COILS, ReadCoils(0, 1), tid, unit, Direction.REQUEST)
            resp = make_frame(FC_READ_COILS | 0x80,
                              ExceptionPdu(FC_READ_COILS, EXC_GATEWAY_TARGET_FAILED),
                              tid, unit, Direction.RESPONSE)
            self.exchange(req, resp)

    def state_modification(self) -> None:
        tid = self.next_tid()
        req = make_frame(FC_WRITE_SINGLE_COIL, WriteSingleCoil(0, COIL_ON), tid, 1, Direction.REQUEST)
        resp = make_frame(FC_WRITE_SINGLE_COIL, WriteSingleCoil(0, COIL_ON), tid, 1, Direction.RESPONSE)
        self.exchange(req, resp)

        tid = self.next_tid()
        value = int(self.rng.integers(0, 0x10000))
        req = make_frame(FC_WRITE_SINGLE_REGISTER, WriteSingleRegister(1, value), tid, 1, Direction.REQUEST)
        resp = make_frame(FC_WRITE_SINGLE_REGISTER, WriteSingleRegister(1, value), tid, 1, Direction.RESPONSE)
        self.exchange(req, resp)

    def background_poll(self) -> None:
        tid = self.next_tid()
        req = make_frame(FC_READ_HOLDING_REGISTERS, ReadHoldingRegisters(100, 4),
                         tid, 1, Direction.REQUEST)
        registers = b"\x08" + bytes(self.rng.integers(0, 256, size=8).tolist())
        resp = make_frame(FC_READ_HOLDING_REGISTERS, RawPdu(registers), tid, 1, Direction.RESPONSE)
        self.exchange(req, resp, src_ip=self.spec.background_ip, src_port=self.background_port)


_STEP_METHODS = {
    AttackStep.SCAN: _ScenarioBuilder.scan,
    AttackStep.DEVICE_IDENTIFICATION: _ScenarioBuilder.device_identification,
    AttackStep.UID_ENUMERATION: _ScenarioBuilder.uid_enumeration,
    AttackStep.STATE_MODIFICATION: _ScenarioBuilder.state_modification,
}


def generate_scenario(spec: ScenarioSpec) -> tuple[bytes, GroundTruth]:
    """Synthesize a scenario capture and its ground truth.

    Benign polls are spread in chunks before, between, and after the attack
    steps so the attack ranges stay contiguous. Packet indices in the ground
    truth include handshake and response packets.
    """
    spec.validate()
    builder = _ScenarioBuilder(spec)

    slots = len(spec.steps) + 1
    base, extra = divmod(spec.background_traffic, slots)
    bg_chunks = [base + (1 if i < extra else 0) for i in range(slots)]

    truths: list[StepTruth] = []
    background_connected = False

    def run_background(count: int) -> None:
        nonlocal background_connected
        for _ in range(count):
            if not background_connected:
                builder.handshake(spec.background_ip, builder.background_port)
                background_connected = True
            builder.background_poll()

    run_background(bg_chunks[0])
    attacker_connected = False
    for step_no, step in enumerate(spec.steps):
        if not attacker_connected:
            builder.handshake(spec.attacker_ip, builder.attacker_port)
            attacker_connected = True
        first = len(builder.records)
        _STEP_METHODS[step](builder)
        last = len(builder.records) - 1
        attack_type, technique_ids = STEP_EXPECTATIONS[step]
        truths.append(StepTruth(step, attack_type, first, last, technique_ids))
        run_background(bg_chunks[step_no + 1])

    truth = GroundTruth(
        attacker_ip=spec.attacker_ip,
        victim_ip=spec.victim_ip,
        victim_port=spec.victim_port,
        total_packets=len(builder.records),
        steps=tuple(truths),
    )
    return write_capture_bytes(builder.records), truth


def generate_scenario_files(spec: ScenarioSpec, capture_path: str,
                            truth_path: str | None = None) -> GroundTruth:
    """Write the scenario capture and its JSON ground-truth sidecar."""
    data, truth = generate_scenario(spec)
    with open(capture_path, "wb") as fh:
        fh.write(data)
    if truth_path:
        with open(truth_path, "w", encoding="utf-8") as fh:
            fh.write(truth.to_json() + "\n")
    return truth


def steps_from_names(names: Iterable[str]) -> tuple[AttackStep, ...]:
    """Parse step names (CLI/config input) into AttackStep values."""
    out = []
    for name in names:
        try:
            out.append(AttackStep(name.strip()))
        except ValueError:
            valid = ", ".join(s.value for s in AttackStep)
            raise ScenarioError(f"unknown step {name!r}; valid steps: {valid}") from None
    return tuple(out)
