"""ATT&CK knowledge base loading and TTP vector construction.

Parses STIX 2.x bundle files (the distribution format of the public ATT&CK
repositories) into an immutable in-memory knowledge base of tactics,
techniques, and threat groups, and derives binary TTP vectors and training
datasets from group profiles. Bundles are read from local files only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import IcshuntError

logger = logging.getLogger(__name__)

#: external_references source names that carry ATT&CK ids.
ATTACK_SOURCE_NAMES = frozenset({"mitre-attack", "mitre-ics-attack"})
#: kill_chain_phases chain names that map techniques to matrix tactics.
ATTACK_KILL_CHAINS = frozenset({"mitre-attack", "mitre-ics-attack"})

MAX_NOISE_RATE = 0.5


class Domain(str, Enum):
    ICS = "ics"
    ENTERPRISE = "enterprise"


class Granularity(str, Enum):
    TACTIC = "tactic"
    TECHNIQUE = "technique"


class KnowledgeError(IcshuntError):
    """Base error for knowledge-base loading and queries."""


class BundleParseError(KnowledgeError):
    """Bundle is not valid JSON; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class BundleStructureError(KnowledgeError):
    """Bundle parsed but lacks required structure (e.g. no matrix object)."""


class UnknownEntityError(KnowledgeError, KeyError):
    """Lookup of a tactic/technique/group id that does not exist."""

    def __str__(self) -> str:  # KeyError quotes its args; keep the message readable
        return self.args[0] if self.args else ""


class InsufficientClassesError(KnowledgeError):
    """Dataset construction needs at least two usable groups."""


@dataclass(frozen=True)
class Tactic:
    id: str
    name: str
    matrix_order: int


@dataclass(frozen=True)
class Technique:
    id: str
    name: str
    description: str
    tactic_ids: tuple[str, ...]
    domain: Domain


@dataclass(frozen=True)
class ThreatGroup:
    id: str
    name: str
    aliases: tuple[str, ...]
    technique_ids: tuple[str, ...]


@dataclass(frozen=True)
class TtpVector:
    """Binary TTP observation/profile vector.

    Bit order is the owning knowledge base's tactic matrix order (tactic
    granularity) or its sorted technique-id order (technique granularity).
    """

    granularity: Granularity
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("TTP vector entries must be 0 or 1")

    @property
    def set_count(self) -> int:
        return sum(self.bits)


@dataclass(frozen=True)
class Dataset:
    granularity: Granularity
    feature_names: tuple[str, ...]
    rows: tuple[tuple[str, TtpVector], ...]

    def labels(self) -> tuple[str, ...]:
        return tuple(sorted({label for label, _ in self.rows}))


@dataclass(frozen=True)
class AugmentSpec:
    """Seeded augmentation: noisy copies of each group profile."""

    noise_rate: float = 0.0
    copies_per_group: int = 0
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.noise_rate < MAX_NOISE_RATE:
            raise KnowledgeError(
                f"noise_rate must be in [0, {MAX_NOISE_RATE}), got {self.noise_rate}"
            )
        if self.copies_per_group < 0:
            raise KnowledgeError("copies_per_group must be >= 0")


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable view of one ATT&CK domain; safe to share across threads."""

    domain: Domain
    tactics: tuple[Tactic, ...]
    techniques: Mapping[str, Technique]
    groups: Mapping[str, ThreatGroup]
    bundle_version: str = ""

    def tactic(self, tactic_id: str) -> Tactic:
        for tactic in self.tactics:
            if tactic.id == tactic_id:
                return tactic
        raise UnknownEntityError(f"unknown tactic id {tactic_id!r}")

    def technique(self, technique_id: str) -> Technique:
        try:
            return self.techniques[technique_id]
        except KeyError:
            raise UnknownEntityError(f"unknown technique id {technique_id!r}") from None

    def group(self, group_id: str) -> ThreatGroup:
        try:
            return self.groups[group_id]
        except KeyError:
            raise UnknownEntityError(f"unknown group id {group_id!r}") from None

    def technique_by_name(self, name: str) -> Technique:
        for technique in self.techniques.values():
            if technique.name == name:
                return technique
        raise UnknownEntityError(f"no technique named {name!r}")

    def feature_names(self, granularity: Granularity) -> tuple[str, ...]:
        if granularity is Granularity.TACTIC:
            return tuple(t.id for t in self.tactics)
        return tuple(sorted(self.techniques))

    def tactic_order(self, tactic_id: str) -> int:
        return self.tactic(tactic_id).matrix_order

    def check_integrity(self) -> None:
        """Referential integrity across tactics/techniques/groups."""
        tactic_ids = {t.id for t in self.tactics}
        orders = sorted(t.matrix_order for t in self.tactics)
        if orders != list(range(len(self.tactics))):
            raise BundleStructureError("tactic matrix_order values not contiguous")
        for technique in self.techniques.values():
            if not technique.tactic_ids:
                raise BundleStructureError(f"technique {technique.id} has no tactics")
            missing = set(technique.tactic_ids) - tactic_ids
            if missing:
                raise BundleStructureError(
                    f"technique {technique.id} references unknown tactics {sorted(missing)}"
                )
        for group in self.groups.values():
            for tid in group.technique_ids:
                if tid not in self.techniques:
                    raise BundleStructureError(
                        f"group {group.id} references unknown technique {tid}"
                    )


def _attack_id(obj: dict, prefix: str) -> str | None:
    for ref in obj.get("external_references", ()):
        if ref.get("source_name") in ATTACK_SOURCE_NAMES:
            ext = ref.get("external_id", "")
            if ext.startswith(prefix):
                return ext
    return None


def _is_excluded(obj: dict) -> bool:
    return bool(obj.get("revoked")) or bool(obj.get("x_mitre_deprecated"))


def load_bundle(data: bytes | str, domain: Domain) -> KnowledgeBase:
    """Parse a STIX 2.x bundle into a KnowledgeBase.

    Revoked and deprecated objects are excluded; sub-techniques are folded
    into their parents; relationships with an unresolvable end are dropped
    with a warning. The bundle's matrix object is required — it defines
    tactic column order.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BundleParseError(f"bundle is not UTF-8: {exc}", offset=exc.start) from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise BundleParseError(
            f"bundle is not valid JSON at byte {exc.pos}: {exc.msg}", offset=exc.pos
        ) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("objects"), list):
        raise BundleStructureError("bundle document has no objects list")

    objects = [o for o in doc["objects"] if isinstance(o, dict)]
    by_type: dict[str, list[dict]] = {}
    for obj in objects:
        by_type.setdefault(obj.get("type", ""), []).append(obj)

    matrices = [m for m in by_type.get("x-mitre-matrix", []) if not _is_excluded(m)]
    if not matrices:
        raise BundleStructureError("bundle has no x-mitre-matrix object")
    matrix = matrices[0]

    bundle_version = ""
    for coll in by_type.get("x-mitre-collection", []):
        bundle_version = str(coll.get("x_mitre_version", ""))
        break

    # Tactics, ordered by the matrix's tactic_refs.
    tactic_objs = {o["id"]: o for o in by_type.get("x-mitre-tactic", []) if not _is_excluded(o)}
    tactics: list[Tactic] = []
    shortname_to_id: dict[str, str] = {}
    for order, stix_ref in enumerate(matrix.get("tactic_refs", [])):
        obj = tactic_objs.get(stix_ref)
        if obj is None:
            raise BundleStructureError(f"matrix references missing tactic {stix_ref}")
        ext_id = _attack_id(obj, "TA")
        if ext_id is None:
            raise BundleStructureError(f"tactic {stix_ref} has no ATT&CK id")
        name = obj.get("name", "")
        if not name:
            raise BundleStructureError(f"tactic {ext_id} has empty name")
        tactics.append(Tactic(id=ext_id, name=name, matrix_order=order))
        shortname_to_id[obj.get("x_mitre_shortname", "")] = ext_id
    if not tactics:
        raise BundleStructureError("matrix lists no tactics")
    skipped_tactics = set(tactic_objs) - set(matrix.get("tactic_refs", []))
    for stix_ref in sorted(skipped_tactics):
        logger.warning("tactic %s not referenced by matrix; skipped", stix_ref)

    # Techniques: fold sub-techniques into parents, resolve kill-chain phases.
    techniques: dict[str, Technique] = {}
    stix_to_attack: dict[str, str] = {}
    sub_objects: list[tuple[dict, str]] = []
    for obj in by_type.get("attack-pattern", []):
        if _is_excluded(obj):
            continue
        ext_id = _attack_id(obj, "T")
        if ext_id is None:
            logger.warning("attack-pattern %s has no ATT&CK id; skipped", obj.get("id"))
            continue
        if obj.get("x_mitre_is_subtechnique") or "." in ext_id:
            sub_objects.append((obj, ext_id))
            continue
        tactic_ids = []
        for phase in obj.get("kill_chain_phases", ()):
            if phase.get("kill_chain_name") not in ATTACK_KILL_CHAINS:
                continue
            tactic_id = shortname_to_id.get(phase.get("phase_name", ""))
            if tactic_id is None:
                logger.warning(
                    "technique %s names unknown tactic phase %r; phase dropped",
                    ext_id, phase.get("phase_name"),
                )
                continue
            if tactic_id not in tactic_ids:
                tactic_ids.append(tactic_id)
        if not tactic_ids:
            logger.warning("technique %s maps to no known tactic; excluded", ext_id)
            continue
        techniques[ext_id] = Technique(
            id=ext_id,
            name=obj.get("name", ext_id),
            description=obj.get("description", ""),
            tactic_ids=tuple(tactic_ids),
            domain=domain,
        )
        stix_to_attack[obj["id"]] = ext_id

    for obj, ext_id in sub_objects:
        parent_id = ext_id.split(".")[0]
        if parent_id in techniques:
            stix_to_attack[obj["id"]] = parent_id
        else:
            logger.warning("sub-technique %s has no parent %s; dropped", ext_id, parent_id)

    # Groups.
    groups_by_stix: dict[str, dict] = {}
    group_meta: dict[str, tuple[str, tuple[str, ...]]] = {}
    for obj in by_type.get("intrusion-set", []):
        if _is_excluded(obj):
            continue
        ext_id = _attack_id(obj, "G")
        if ext_id is None:
            logger.warning("intrusion-set %s has no ATT&CK id; skipped", obj.get("id"))
            continue
        groups_by_stix[obj["id"]] = obj
        group_meta[obj["id"]] = (ext_id, tuple(obj.get("aliases", ())))

    used: dict[str, set[str]] = {stix_id: set() for stix_id in groups_by_stix}
    for rel in by_type.get("relationship", []):
        if rel.get("relationship_type") != "uses" or _is_excluded(rel):
            continue
        src, dst = rel.get("source_ref", ""), rel.get("target_ref", "")
        if not src.startswith("intrusion-set--") or not dst.startswith("attack-pattern--"):
            continue
        if src not in groups_by_stix or dst not in stix_to_attack:
            logger.warning("dangling uses relationship %s -> %s; dropped", src, dst)
            continue
        used[src].add(stix_to_attack[dst])

    groups: dict[str, ThreatGroup] = {}
    for stix_id, obj in groups_by_stix.items():
        ext_id, aliases = group_meta[stix_id]
        groups[ext_id] = ThreatGroup(
            id=ext_id,
            name=obj.get("name", ext_id),
            aliases=aliases,
            technique_ids=tuple(sorted(used[stix_id])),
        )

    kb = KnowledgeBase(
        domain=domain,
        tactics=tuple(tactics),
        techniques=techniques,
        groups=groups,
        bundle_version=bundle_version,
    )
    kb.check_integrity()
    logger.info(
        "loaded %s bundle v%s: %d tactics, %d techniques, %d groups",
        domain.value, bundle_version or "?", len(tactics), len(techniques), len(groups),
    )
    return kb


def load_bundle_file(path: str, domain: Domain) -> KnowledgeBase:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise KnowledgeError(f"cannot read bundle file {path}: {exc}") from exc
    return load_bundle(data, domain)


def packaged_bundle_path(domain: Domain) -> str:
    """Path of the snapshot bundle shipped inside the package."""
    name = "ics-attack.json" if domain is Domain.ICS else "enterprise-attack.json"
    return str(resources.files("icshunt").joinpath("data", name))


def load_packaged_bundle(domain: Domain) -> KnowledgeBase:
    return load_bundle_file(packaged_bundle_path(domain), domain)


def group_profile(kb: KnowledgeBase, group_id: str, granularity: Granularity) -> TtpVector:
    """Binary profile of one group over the KB's feature axis."""
    group = kb.group(group_id)
    return vector_from_techniques(kb, granularity, group.technique_ids)


def vector_from_techniques(
    kb: KnowledgeBase, granularity: Granularity, technique_ids: Iterable[str]
) -> TtpVector:
    """Encode a set of observed technique ids as a TTP vector."""
    names = kb.feature_names(granularity)
    index = {name: i for i, name in enumerate(names)}
    bits = [0] * len(names)
    for tid in technique_ids:
        technique = kb.technique(tid)
        if granularity is Granularity.TECHNIQUE:
            bits[index[technique.id]] = 1
        else:
            for tactic_id in technique.tactic_ids:
                bits[index[tactic_id]] = 1
    return TtpVector(granularity=granularity, bits=tuple(bits))


def techniques_for_tactic(kb: KnowledgeBase, tactic_id: str) -> list[Technique]:
    """All techniques mapped to the tactic, sorted by technique id."""
    kb.tactic(tactic_id)  # raises UnknownEntityError for bad ids
    return sorted(
        (t for t in kb.techniques.values() if tactic_id in t.tactic_ids),
        key=lambda t: t.id,
    )


def build_dataset(
    kb: KnowledgeBase,
    granularity: Granularity,
    augment: AugmentSpec | None = None,
) -> Dataset:
    """One clean profile row per group plus seeded noisy copies.

    Groups with empty profiles are skipped; fewer than two usable groups is
    an error. Deterministic for a fixed augment seed.
    """
    augment = augment or AugmentSpec()
    augment.validate()
    feature_names = kb.feature_names(granularity)
    profiles: list[tuple[str, TtpVector]] = []
    for group_id in sorted(kb.groups):
        profile = group_profile(kb, group_id, granularity)
        if profile.set_count == 0:
            logger.warning("group %s has an empty profile; excluded from dataset", group_id)
            continue
        profiles.append((group_id, profile))
    if len(profiles) < 2:
        raise InsufficientClassesError(
            f"need >= 2 groups with non-empty profiles, found {len(profiles)}"
        )

    rows: list[tuple[str, TtpVector]] = []
    rng = np.random.default_rng(augment.seed)
    for group_id, profile in profiles:
        rows.append((group_id, profile))
        base = np.array(profile.bits, dtype=np.int8)
        for _ in range(augment.copies_per_group):
            flips = rng.random(base.shape[0]) < augment.noise_rate
            noisy = np.where(flips, 1 - base, base)
            rows.append((group_id, TtpVector(granularity, tuple(int(b) for b in noisy))))
    return Dataset(granularity=granularity, feature_names=feature_names, rows=tuple(rows))


def matrix_knowledge_base(
    profiles: Mapping[str, Sequence[int]],
    tactic_names: Sequence[str],
    domain: Domain = Domain.ICS,
) -> KnowledgeBase:
    """Build a toy KnowledgeBase from a binary group-by-tactic matrix.

    Synthesizes one technique per tactic column so tactic- and
    technique-level profiles coincide; useful for small worked examples and
    tests. Group labels become group ids verbatim.
    """
    if not tactic_names:
        raise KnowledgeError("tactic_names must be non-empty")
    tactics = tuple(
        Tactic(id=f"TA9{i:03d}", name=name, matrix_order=i)
        for i, name in enumerate(tactic_names)
    )
    techniques = {
        f"T9{i:03d}": Technique(
            id=f"T9{i:03d}",
            name=f"{name} Activity",
            description=f"Synthetic stand-in technique for the {name} column.",
            tactic_ids=(tactics[i].id,),
            domain=domain,
        )
        for i, name in enumerate(tactic_names)
    }
    groups = {}
    for label, bits in profiles.items():
        if len(bits) != len(tactic_names):
            raise KnowledgeError(
                f"profile {label!r} has {len(bits)} bits, expected {len(tactic_names)}"
            )
        groups[str(label)] = ThreatGroup(
            id=str(label),
            name=f"Group {label}",
            aliases=(),
            technique_ids=tuple(f"T9{i:03d}" for i, bit in enumerate(bits) if bit),
        )
    kb = KnowledgeBase(
        domain=domain,
        tactics=tactics,
        techniques=techniques,
        groups=groups,
        bundle_version="synthetic",
    )
    kb.check_integrity()
    return kb
