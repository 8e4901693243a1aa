"""Declarative signature matching over decoded Modbus traffic.

Two rule families share one YAML schema: per-packet rules, which fire a
Detection on every matching frame, and windowed rules, which count distinct
key values (unit id, function code, destination port) per attacker inside a
sliding time span and fire once when the count reaches a threshold, then
stay quiet for one span before re-arming. Rules carry ATT&CK technique ids
resolved against the loaded knowledge base at load time, so every Detection
is born with verified technique and tactic labels.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterator, Mapping, Sequence

import yaml

from . import IcshuntError
from .capture import PacketRecord
from .knowledge import KnowledgeBase, UnknownEntityError
from .modbus import (
    Direction,
    ExceptionPdu,
    ModbusFrame,
    PduKind,
    classify_pdu,
    encode_frame,
)

logger = logging.getLogger(__name__)

#: Hard ceiling on tracked (attacker, rule) window states before eviction.
DEFAULT_STATE_CAP = 4096
#: Packet summaries retained per detection.
DEFAULT_EVIDENCE_CAP = 8


class RuleError(IcshuntError):
    """Rule document failed schema or reference validation."""


class Severity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class DistinctKey(str, Enum):
    UNIT_ID = "unit_id"
    FUNCTION_CODE = "function_code"
    DST_PORT = "dst_port"


@dataclass(frozen=True)
class PayloadPattern:
    """Byte pattern compared against the encoded PDU at a fixed offset."""

    offset: int
    value: bytes
    mask: bytes | None = None

    def matches(self, pdu_bytes: bytes) -> bool:
        end = self.offset + len(self.value)
        if self.offset < 0 or end > len(pdu_bytes):
            return False
        window = pdu_bytes[self.offset : end]
        if self.mask is None:
            return window == self.value
        return all(
            (w & m) == (v & m) for w, v, m in zip(window, self.value, self.mask)
        )


@dataclass(frozen=True)
class MatchSpec:
    function_codes: frozenset[int] | None = None
    pdu_kind: PduKind | None = None
    payload_pattern: PayloadPattern | None = None
    unit_id_range: tuple[int, int] | None = None
    exception_codes: frozenset[int] | None = None

    def clause_count(self) -> int:
        return sum(
            1
            for clause in (
                self.function_codes,
                self.pdu_kind,
                self.payload_pattern,
                self.unit_id_range,
                self.exception_codes,
            )
            if clause is not None
        )

    def matches(self, frame: ModbusFrame) -> bool:
        if self.function_codes is not None:
            if frame.pdu.function_code not in self.function_codes:
                return False
        if self.pdu_kind is not None:
            if classify_pdu(frame) is not self.pdu_kind:
                return False
        if self.unit_id_range is not None:
            lo, hi = self.unit_id_range
            if not lo <= frame.header.unit_id <= hi:
                return False
        if self.exception_codes is not None:
            body = frame.pdu.body
            if not isinstance(body, ExceptionPdu):
                return False
            if body.exception_code not in self.exception_codes:
                return False
        if self.payload_pattern is not None:
            pdu_bytes = encode_frame(frame)[7:]
            if not self.payload_pattern.matches(pdu_bytes):
                return False
        return True


@dataclass(frozen=True)
class WindowSpec:
    distinct_key: DistinctKey
    threshold: int
    span: float


@dataclass(frozen=True)
class SignatureRule:
    id: str
    name: str
    attack_type: str
    match: MatchSpec
    window: WindowSpec | None
    technique_ids: tuple[str, ...]
    tactic_ids: tuple[str, ...]
    severity: Severity

    def validate(self) -> None:
        if not self.id:
            raise RuleError("rule id must be non-empty")
        if self.match.clause_count() == 0 and self.window is None:
            raise RuleError(f"rule {self.id}: needs a match clause or a window")
        if not self.technique_ids:
            raise RuleError(f"rule {self.id}: technique list must be non-empty")
        if self.window is not None:
            if self.window.threshold < 2:
                raise RuleError(f"rule {self.id}: window threshold must be >= 2")
            if self.window.span <= 0:
                raise RuleError(f"rule {self.id}: window span must be positive")

    @property
    def watches_exceptions(self) -> bool:
        """Rules examining exception traffic also see response frames."""
        return (
            self.match.exception_codes is not None
            or self.match.pdu_kind is PduKind.EXCEPTION
        )


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[SignatureRule, ...]
    source: str = ""

    def __iter__(self) -> Iterator[SignatureRule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)


@dataclass(frozen=True)
class Detection:
    id: str
    timestamp: float
    attacker_ip: str
    victim_ip: str
    attack_type: str
    rule_id: str
    technique_ids: tuple[str, ...]
    tactic_ids: tuple[str, ...]
    severity: Severity
    evidence: tuple[str, ...]

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "timestamp": self.timestamp,
            "attacker_ip": self.attacker_ip,
            "victim_ip": self.victim_ip,
            "attack_type": self.attack_type,
            "rule_id": self.rule_id,
            "technique_ids": list(self.technique_ids),
            "tactic_ids": list(self.tactic_ids),
            "severity": self.severity.value,
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Detection":
        return cls(
            id=doc["id"],
            timestamp=float(doc["timestamp"]),
            attacker_ip=doc["attacker_ip"],
            victim_ip=doc["victim_ip"],
            attack_type=doc["attack_type"],
            rule_id=doc["rule_id"],
            technique_ids=tuple(doc["technique_ids"]),
            tactic_ids=tuple(doc["tactic_ids"]),
            severity=Severity(doc["severity"]),
            evidence=tuple(doc.get("evidence", ())),
        )


# --------------------------------------------------------------------------
# Rule loading


def _parse_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise RuleError(f"{context}: expected integer, got {value!r}")
    return value


def _parse_match(doc: Mapping, rule_id: str) -> MatchSpec:
    known = {"function_code", "function_codes", "pdu_kind", "payload_pattern",
             "unit_id_range", "exception_codes"}
    unknown = set(doc) - known
    if unknown:
        raise RuleError(f"rule {rule_id}: unknown match fields {sorted(unknown)}")

    function_codes = None
    if "function_code" in doc and "function_codes" in doc:
        raise RuleError(f"rule {rule_id}: use function_code or function_codes, not both")
    if "function_code" in doc:
        function_codes = frozenset({_parse_int(doc["function_code"], f"rule {rule_id}")})
    elif "function_codes" in doc:
        codes = doc["function_codes"]
        if not isinstance(codes, list) or not codes:
            raise RuleError(f"rule {rule_id}: function_codes must be a non-empty list")
        function_codes = frozenset(_parse_int(c, f"rule {rule_id}") for c in codes)

    pdu_kind = None
    if "pdu_kind" in doc:
        try:
            pdu_kind = PduKind(doc["pdu_kind"])
        except ValueError:
            raise RuleError(
                f"rule {rule_id}: unknown pdu_kind {doc['pdu_kind']!r}"
            ) from None

    payload_pattern = None
    if "payload_pattern" in doc:
        spec = doc["payload_pattern"]
        if not isinstance(spec, Mapping) or "hex" not in spec:
            raise RuleError(f"rule {rule_id}: payload_pattern needs offset and hex fields")
        try:
            value = bytes.fromhex(str(spec["hex"]))
            mask = bytes.fromhex(str(spec["mask"])) if "mask" in spec else None
        except ValueError as exc:
            raise RuleError(f"rule {rule_id}: bad hex in payload_pattern: {exc}") from None
        if mask is not None and len(mask) != len(value):
            raise RuleError(f"rule {rule_id}: payload_pattern mask length mismatch")
        payload_pattern = PayloadPattern(
            offset=_parse_int(spec.get("offset", 0), f"rule {rule_id}"),
            value=value,
            mask=mask,
        )

    unit_id_range = None
    if "unit_id_range" in doc:
        pair = doc["unit_id_range"]
        if not isinstance(pair, list) or len(pair) != 2:
            raise RuleError(f"rule {rule_id}: unit_id_range must be [low, high]")
        lo, hi = (_parse_int(v, f"rule {rule_id}") for v in pair)
        if lo > hi:
            raise RuleError(f"rule {rule_id}: unit_id_range low > high")
        unit_id_range = (lo, hi)

    exception_codes = None
    if "exception_codes" in doc:
        codes = doc["exception_codes"]
        if not isinstance(codes, list) or not codes:
            raise RuleError(f"rule {rule_id}: exception_codes must be a non-empty list")
        exception_codes = frozenset(_parse_int(c, f"rule {rule_id}") for c in codes)

    return MatchSpec(
        function_codes=function_codes,
        pdu_kind=pdu_kind,
        payload_pattern=payload_pattern,
        unit_id_range=unit_id_range,
        exception_codes=exception_codes,
    )


def _resolve_techniques(entries, kb: KnowledgeBase, rule_id: str) -> tuple[str, ...]:
    if not isinstance(entries, list) or not entries:
        raise RuleError(f"rule {rule_id}: techniques must be a non-empty list")
    resolved = []
    for entry in entries:
        if not isinstance(entry, str) or not entry:
            raise RuleError(f"rule {rule_id}: technique entries must be strings")
        try:
            if entry in kb.techniques:
                technique = kb.techniques[entry]
            else:
                technique = kb.technique_by_name(entry)
        except UnknownEntityError:
            raise RuleError(
                f"rule {rule_id}: technique {entry!r} not found in the knowledge base"
            ) from None
        if technique.id not in resolved:
            resolved.append(technique.id)
    return tuple(resolved)


def load_rules(document: str, kb: KnowledgeBase, source: str = "") -> RuleSet:
    """Parse and validate a YAML rule document against a knowledge base.

    Technique entries may be ATT&CK ids or exact technique names; tactic
    ids default to the union of the resolved techniques' tactics in matrix
    order when not given explicitly.
    """
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        raise RuleError(f"rule document is not valid YAML: {exc}") from exc
    if doc is None:
        return RuleSet(rules=(), source=source)
    if not isinstance(doc, Mapping) or not isinstance(doc.get("rules", []), list):
        raise RuleError("rule document must be a mapping with a rules list")

    rules = []
    seen_ids = set()
    for i, entry in enumerate(doc.get("rules", [])):
        if not isinstance(entry, Mapping):
            raise RuleError(f"rule #{i}: entries must be mappings")
        rule_id = entry.get("id")
        if not isinstance(rule_id, str) or not rule_id:
            raise RuleError(f"rule #{i}: missing id")
        if rule_id in seen_ids:
            raise RuleError(f"rule {rule_id}: duplicate id")
        seen_ids.add(rule_id)

        unknown = set(entry) - {"id", "name", "attack_type", "severity", "match",
                                "window", "techniques", "tactics"}
        if unknown:
            raise RuleError(f"rule {rule_id}: unknown fields {sorted(unknown)}")

        attack_type = entry.get("attack_type")
        if not isinstance(attack_type, str) or not attack_type:
            raise RuleError(f"rule {rule_id}: missing attack_type")

        try:
            severity = Severity(entry.get("severity", "medium"))
        except ValueError:
            raise RuleError(
                f"rule {rule_id}: unknown severity {entry.get('severity')!r}"
            ) from None

        match = _parse_match(entry.get("match", {}) or {}, rule_id)

        window = None
        if "window" in entry and entry["window"] is not None:
            wdoc = entry["window"]
            if not isinstance(wdoc, Mapping):
                raise RuleError(f"rule {rule_id}: window must be a mapping")
            try:
                distinct_key = DistinctKey(wdoc.get("distinct_key"))
            except ValueError:
                raise RuleError(
                    f"rule {rule_id}: unknown distinct_key {wdoc.get('distinct_key')!r}"
                ) from None
            window = WindowSpec(
                distinct_key=distinct_key,
                threshold=_parse_int(wdoc.get("threshold", 0), f"rule {rule_id}"),
                span=float(wdoc.get("span_seconds", 0)),
            )

        technique_ids = _resolve_techniques(entry.get("techniques"), kb, rule_id)

        if "tactics" in entry:
            tactic_ids = []
            for tid in entry["tactics"]:
                try:
                    kb.tactic(tid)
                except UnknownEntityError:
                    raise RuleError(
                        f"rule {rule_id}: tactic {tid!r} not found in the knowledge base"
                    ) from None
                if tid not in tactic_ids:
                    tactic_ids.append(tid)
            tactic_ids = tuple(tactic_ids)
        else:
            derived = set()
            for tid in technique_ids:
                derived.update(kb.technique(tid).tactic_ids)
            tactic_ids = tuple(sorted(derived, key=kb.tactic_order))

        rule = SignatureRule(
            id=rule_id,
            name=entry.get("name", rule_id),
            attack_type=attack_type,
            match=match,
            window=window,
            technique_ids=technique_ids,
            tactic_ids=tactic_ids,
            severity=severity,
        )
        rule.validate()
        rules.append(rule)
    return RuleSet(rules=tuple(rules), source=source)


def default_rules_text() -> str:
    """The bundled rule file covering the four honeypot attack behaviors."""
    return resources.files("icshunt").joinpath("rules", "default.yaml").read_text("utf-8")


def load_default_rules(kb: KnowledgeBase) -> RuleSet:
    return load_rules(default_rules_text(), kb, source="default")


# --------------------------------------------------------------------------
# Engine


@dataclass
class _WindowState:
    span: float
    first_seen: dict = field(default_factory=dict)  # key value -> first timestamp
    evidence: dict = field(default_factory=dict)  # key value -> packet summary
    cooldown_until: float = float("-inf")
    last_touched: float = float("-inf")

    def evict(self, now: float) -> None:
        horizon = now - self.span
        for key in [k for k, ts in self.first_seen.items() if ts <= horizon]:
            del self.first_seen[key]
            self.evidence.pop(key, None)


@dataclass
class EngineState:
    """Mutable per-pipeline matching state. Single-writer."""

    state_cap: int = DEFAULT_STATE_CAP
    evidence_cap: int = DEFAULT_EVIDENCE_CAP
    windows: dict = field(default_factory=dict)  # (attacker_ip, rule_id) -> _WindowState
    detection_count: int = 0

    def window_for(self, attacker_ip: str, rule_id: str, span: float, now: float) -> _WindowState:
        key = (attacker_ip, rule_id)
        state = self.windows.get(key)
        if state is None:
            if len(self.windows) >= self.state_cap:
                oldest = min(self.windows, key=lambda k: self.windows[k].last_touched)
                del self.windows[oldest]
                logger.warning(
                    "window state cap %d reached; evicted %s", self.state_cap, oldest
                )
            state = _WindowState(span=span)
            self.windows[key] = state
        state.last_touched = now
        return state


def _summarize(record: PacketRecord, frame: ModbusFrame) -> str:
    return (
        f"{record.timestamp:.6f} {record.src_ip}:{record.src_port} -> "
        f"{record.dst_ip}:{record.dst_port} fc=0x{frame.pdu.function_code:02X} "
        f"unit={frame.header.unit_id} kind={classify_pdu(frame).value}"
    )


def _detection_id(rule_id: str, attacker: str, victim: str, ts: float, ordinal: int) -> str:
    material = f"{rule_id}|{attacker}|{victim}|{ts:.6f}|{ordinal}"
    return hashlib.sha1(material.encode("utf-8")).hexdigest()[:16]


def _window_key(spec: WindowSpec, record: PacketRecord, frame: ModbusFrame):
    if spec.distinct_key is DistinctKey.UNIT_ID:
        return frame.header.unit_id
    if spec.distinct_key is DistinctKey.FUNCTION_CODE:
        return frame.pdu.function_code
    return record.dst_port


def _emit(
    state: EngineState,
    rule: SignatureRule,
    timestamp: float,
    attacker: str,
    victim: str,
    evidence: Sequence[str],
) -> Detection:
    detection = Detection(
        id=_detection_id(rule.id, attacker, victim, timestamp, state.detection_count),
        timestamp=timestamp,
        attacker_ip=attacker,
        victim_ip=victim,
        attack_type=rule.attack_type,
        rule_id=rule.id,
        technique_ids=rule.technique_ids,
        tactic_ids=rule.tactic_ids,
        severity=rule.severity,
        evidence=tuple(evidence[: state.evidence_cap]),
    )
    state.detection_count += 1
    return detection


def process_packet(
    state: EngineState,
    rules: RuleSet,
    record: PacketRecord,
    frames: Sequence[ModbusFrame],
) -> list[Detection]:
    """Evaluate one packet's decoded frames against every rule.

    Request-direction frames are evaluated against all rules; response
    frames only against rules that watch exception traffic (with attacker
    and victim roles swapped, since the response travels victim→attacker).
    """
    detections: list[Detection] = []
    for frame in frames:
        is_response = frame.direction is Direction.RESPONSE
        if is_response:
            attacker, victim = record.dst_ip, record.src_ip
        else:
            attacker, victim = record.src_ip, record.dst_ip
        if attacker == victim:
            logger.debug("skipping self-directed frame %s -> %s", attacker, victim)
            continue
        now = record.timestamp
        for rule in rules:
            if is_response and not rule.watches_exceptions:
                continue
            if not rule.match.matches(frame):
                continue
            if rule.window is None:
                detections.append(
                    _emit(state, rule, now, attacker, victim, [_summarize(record, frame)])
                )
                continue
            wstate = state.window_for(attacker, rule.id, rule.window.span, now)
            if now < wstate.cooldown_until:
                continue
            wstate.evict(now)
            key = _window_key(rule.window, record, frame)
            if key not in wstate.first_seen:
                wstate.first_seen[key] = now
                if len(wstate.evidence) < state.evidence_cap:
                    wstate.evidence[key] = _summarize(record, frame)
            if len(wstate.first_seen) >= rule.window.threshold:
                evidence = [wstate.evidence[k] for k in wstate.evidence]
                detections.append(_emit(state, rule, now, attacker, victim, evidence))
                wstate.first_seen.clear()
                wstate.evidence.clear()
                wstate.cooldown_until = now + rule.window.span
    return detections


def flush(state: EngineState, now: float) -> list[Detection]:
    """Evict expired window entries at end of capture.

    Sub-threshold windows emit nothing: a scan that never reached its
    distinct-key threshold is not a detection.
    """
    for key in list(state.windows):
        wstate = state.windows[key]
        wstate.evict(now)
        if not wstate.first_seen and now >= wstate.cooldown_until:
            del state.windows[key]
    return []
