"""Hunting hypotheses: who is attacking and what they will do next.

A hypothesis binds observed detections to candidate threat groups (groups
whose catalogued profile contains every observed technique, ranked by
classifier margin) and an ordered forecast of techniques those candidates
are known to use but have not shown yet, sorted along the attack lifecycle
(tactic matrix order). New detections validate, narrow, or reject the
hypothesis; rejection spawns a fresh hypothesis from the triggering
detection so the hunt never goes blind.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

from . import IcshuntError
from .classifier import TrainedModel, candidate_groups, predict_ranked
from .knowledge import KnowledgeBase, UnknownEntityError, vector_from_techniques
from .signatures import Detection

logger = logging.getLogger(__name__)

#: Detections from the same attacker/victim pair within this many seconds
#: are correlated into one hypothesis.
DEFAULT_CORRELATION_WINDOW = 3600.0


class HypothesisError(IcshuntError):
    pass


class IntegrityError(HypothesisError):
    """Detection carries technique ids that do not resolve in the KB."""


class HypothesisStatus(str, Enum):
    GENERATED = "generated"
    VALIDATED = "validated"
    REJECTED = "rejected"


@dataclass(frozen=True)
class CandidateScore:
    group_id: str
    score: float
    superset_match: bool

    def to_doc(self) -> dict:
        return {
            "group_id": self.group_id,
            "score": self.score,
            "superset_match": self.superset_match,
        }


@dataclass(frozen=True)
class Hypothesis:
    id: str
    attacker_ip: str
    victim_ip: str
    detection_ids: tuple[str, ...]
    observed_techniques: frozenset[str]
    observed_tactics: frozenset[str]
    candidates: tuple[CandidateScore, ...]
    predicted_future: tuple[tuple[str, str], ...]  # (technique_id, tactic_id)
    status: HypothesisStatus
    narrative: str
    rejection_reason: str | None
    created_at: float
    updated_at: float

    def superset_candidates(self) -> tuple[CandidateScore, ...]:
        return tuple(c for c in self.candidates if c.superset_match)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "attacker_ip": self.attacker_ip,
            "victim_ip": self.victim_ip,
            "detection_ids": list(self.detection_ids),
            "observed_techniques": sorted(self.observed_techniques),
            "observed_tactics": sorted(self.observed_tactics),
            "candidates": [c.to_doc() for c in self.candidates],
            "predicted_future": [
                {"technique_id": t, "tactic_id": ta} for t, ta in self.predicted_future
            ],
            "status": self.status.value,
            "narrative": self.narrative,
            "rejection_reason": self.rejection_reason,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Hypothesis":
        return cls(
            id=doc["id"],
            attacker_ip=doc["attacker_ip"],
            victim_ip=doc["victim_ip"],
            detection_ids=tuple(doc["detection_ids"]),
            observed_techniques=frozenset(doc["observed_techniques"]),
            observed_tactics=frozenset(doc["observed_tactics"]),
            candidates=tuple(
                CandidateScore(c["group_id"], float(c["score"]), bool(c["superset_match"]))
                for c in doc["candidates"]
            ),
            predicted_future=tuple(
                (p["technique_id"], p["tactic_id"]) for p in doc["predicted_future"]
            ),
            status=HypothesisStatus(doc["status"]),
            narrative=doc.get("narrative", ""),
            rejection_reason=doc.get("rejection_reason"),
            created_at=float(doc["created_at"]),
            updated_at=float(doc["updated_at"]),
        )


def _resolve_techniques(kb: KnowledgeBase, detections: Iterable[Detection]) -> set[str]:
    observed = set()
    for detection in detections:
        for tid in detection.technique_ids:
            try:
                kb.technique(tid)
            except UnknownEntityError:
                raise IntegrityError(
                    f"detection {detection.id} carries unknown technique {tid!r}"
                ) from None
            observed.add(tid)
    return observed


def _tactics_of(kb: KnowledgeBase, technique_ids: Iterable[str]) -> set[str]:
    tactics = set()
    for tid in technique_ids:
        tactics.update(kb.technique(tid).tactic_ids)
    return tactics


def _primary_tactic(kb: KnowledgeBase, technique_id: str) -> str:
    """Earliest-lifecycle tactic of a technique (min matrix order)."""
    technique = kb.technique(technique_id)
    return min(technique.tactic_ids, key=kb.tactic_order)


def _hypothesis_id(detection_ids: Sequence[str]) -> str:
    material = "|".join(sorted(detection_ids))
    return hashlib.sha1(material.encode("utf-8")).hexdigest()[:16]


def _first_sentence(text: str) -> str:
    head = text.strip().split(". ", 1)[0].strip()
    return head if head.endswith(".") else head + "."


def _narrative(
    kb: KnowledgeBase,
    observed: set[str],
    candidates: Sequence[CandidateScore],
    status: HypothesisStatus,
) -> str:
    lines = []
    for tid in sorted(observed):
        technique = kb.technique(tid)
        lines.append(f"{technique.id} {technique.name}: {_first_sentence(technique.description)}")
    members = [c for c in candidates if c.superset_match]
    if members:
        names = ", ".join(f"{kb.group(c.group_id).name} ({c.group_id})" for c in members[:3])
        lines.append(f"Profile-consistent groups, best first: {names}.")
    elif status is HypothesisStatus.REJECTED:
        lines.append("No catalogued group profile contains every observed technique.")
    return "\n".join(lines)


def predict_future(
    kb: KnowledgeBase,
    candidates: Iterable[str],
    observed_techniques: Iterable[str],
) -> tuple[tuple[str, str], ...]:
    """Techniques the candidate groups use that have not been observed.

    Each technique is paired with its earliest-lifecycle tactic and the
    result is ordered by tactic matrix order, then technique id.
    """
    observed = set(observed_techniques)
    future = set()
    for group_id in candidates:
        future.update(kb.group(group_id).technique_ids)
    future -= observed
    pairs = [(tid, _primary_tactic(kb, tid)) for tid in future]
    pairs.sort(key=lambda p: (kb.tactic_order(p[1]), p[0]))
    return tuple(pairs)


def generate(
    detections: Sequence[Detection],
    kb: KnowledgeBase,
    model: TrainedModel,
) -> Hypothesis:
    """Build a hypothesis from an initial batch of detections.

    Candidates are the superset-matching groups ordered by classifier
    margin; the remaining groups follow, flagged, to preserve the full
    ranking. No superset match at all means the hypothesis is born
    rejected (the observation fits no catalogued profile).
    """
    if not detections:
        raise HypothesisError("cannot generate a hypothesis from zero detections")
    observed = _resolve_techniques(kb, detections)
    observed_tactics = _tactics_of(kb, observed)
    observed_tactics.update(t for d in detections for t in d.tactic_ids)
    if not observed_tactics:
        raise IntegrityError("observed techniques resolve to zero tactics")

    vector = vector_from_techniques(kb, model.granularity, observed)
    members = candidate_groups(kb, vector)
    ranking = predict_ranked(model, vector)
    ordered = [
        CandidateScore(group_id=g, score=s, superset_match=g in members)
        for g, s in ranking.ranked
    ]
    ordered.sort(key=lambda c: not c.superset_match)  # stable: members first
    candidates = tuple(ordered)

    if members:
        status = HypothesisStatus.GENERATED
        rejection_reason = None
        future = predict_future(kb, [c.group_id for c in candidates if c.superset_match], observed)
    else:
        status = HypothesisStatus.REJECTED
        rejection_reason = "observed techniques are not a subset of any group profile"
        future = ()

    timestamps = [d.timestamp for d in detections]
    detection_ids = tuple(d.id for d in detections)
    hypothesis = Hypothesis(
        id=_hypothesis_id(detection_ids),
        attacker_ip=detections[0].attacker_ip,
        victim_ip=detections[0].victim_ip,
        detection_ids=detection_ids,
        observed_techniques=frozenset(observed),
        observed_tactics=frozenset(observed_tactics),
        candidates=candidates,
        predicted_future=future,
        status=status,
        narrative=_narrative(kb, observed, candidates, status),
        rejection_reason=rejection_reason,
        created_at=min(timestamps),
        updated_at=max(timestamps),
    )
    logger.info(
        "hypothesis %s: %d candidates (%d profile-consistent), %d predicted techniques",
        hypothesis.id, len(candidates), len(members), len(future),
    )
    return hypothesis


def validate(hypothesis: Hypothesis, new_detection: Detection, kb: KnowledgeBase) -> Hypothesis:
    """Fold a new detection into the hypothesis.

    Precedence: techniques outside every profile-consistent candidate
    reject the hypothesis; a hit on a predicted technique validates it and
    narrows the candidates; a repeat of known techniques just appends
    evidence.
    """
    if hypothesis.status is HypothesisStatus.REJECTED:
        raise HypothesisError(f"hypothesis {hypothesis.id} is already rejected")
    new_techs = _resolve_techniques(kb, [new_detection])
    detection_ids = hypothesis.detection_ids + (new_detection.id,)
    updated_at = max(hypothesis.updated_at, new_detection.timestamp)

    members = hypothesis.superset_candidates()
    consistent = [
        c for c in members
        if new_techs <= set(kb.group(c.group_id).technique_ids)
    ]
    if not consistent:
        outside = ", ".join(sorted(new_techs))
        return replace(
            hypothesis,
            detection_ids=detection_ids,
            status=HypothesisStatus.REJECTED,
            rejection_reason=(
                f"techniques {outside} are outside every candidate group profile"
            ),
            predicted_future=(),
            updated_at=updated_at,
        )

    predicted = {t for t, _ in hypothesis.predicted_future}
    if new_techs & predicted:
        observed = set(hypothesis.observed_techniques) | new_techs
        observed_tactics = set(hypothesis.observed_tactics)
        observed_tactics.update(_tactics_of(kb, new_techs))
        observed_tactics.update(new_detection.tactic_ids)
        consistent_ids = {c.group_id for c in consistent}
        reflagged = [
            replace(c, superset_match=c.superset_match and c.group_id in consistent_ids)
            for c in hypothesis.candidates
        ]
        reflagged.sort(key=lambda c: not c.superset_match)  # stable: members first
        narrowed = tuple(reflagged)
        surviving = [c.group_id for c in narrowed if c.superset_match]
        future = predict_future(kb, surviving, observed)
        return replace(
            hypothesis,
            detection_ids=detection_ids,
            observed_techniques=frozenset(observed),
            observed_tactics=frozenset(observed_tactics),
            candidates=narrowed,
            predicted_future=future,
            status=HypothesisStatus.VALIDATED,
            narrative=_narrative(kb, observed, narrowed, HypothesisStatus.VALIDATED),
            updated_at=updated_at,
        )

    # Repeat of already-observed techniques: record the evidence, no status change.
    return replace(hypothesis, detection_ids=detection_ids, updated_at=updated_at)


class HuntCorrelator:
    """Groups detections into per-(attacker, victim) hypotheses.

    Single-writer, like the signature engine. `ingest` returns every
    hypothesis snapshot the detection produced (updates, rejections, and
    respawns), in the order they should be persisted.
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        model: TrainedModel,
        correlation_window: float = DEFAULT_CORRELATION_WINDOW,
    ):
        self.kb = kb
        self.model = model
        self.correlation_window = correlation_window
        self.active: dict[tuple[str, str], Hypothesis] = {}

    def ingest(self, detection: Detection) -> list[Hypothesis]:
        key = (detection.attacker_ip, detection.victim_ip)
        current = self.active.get(key)
        if current is not None and (
            detection.timestamp - current.updated_at > self.correlation_window
        ):
            logger.info(
                "hypothesis %s aged out of the correlation window; starting fresh",
                current.id,
            )
            del self.active[key]
            current = None

        if current is None:
            fresh = generate([detection], self.kb, self.model)
            if fresh.status is not HypothesisStatus.REJECTED:
                self.active[key] = fresh
            return [fresh]

        updated = validate(current, detection, self.kb)
        out = [updated]
        if updated.status is HypothesisStatus.REJECTED:
            del self.active[key]
            respawn = generate([detection], self.kb, self.model)
            out.append(respawn)
            if respawn.status is not HypothesisStatus.REJECTED:
                self.active[key] = respawn
        else:
            self.active[key] = updated
        return out

    def snapshot(self) -> list[Hypothesis]:
        """Current active hypotheses, deterministic order."""
        return [self.active[k] for k in sorted(self.active)]
