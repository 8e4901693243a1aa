import json

import pytest

import oracles
from conftest import REFERENCE_ROWS, TACTIC_NAMES
from icshunt.knowledge import (
    AugmentSpec,
    BundleParseError,
    BundleStructureError,
    Domain,
    Granularity,
    InsufficientClassesError,
    KnowledgeError,
    TtpVector,
    UnknownEntityError,
    build_dataset,
    group_profile,
    load_bundle,
    load_packaged_bundle,
    matrix_knowledge_base,
    packaged_bundle_path,
    techniques_for_tactic,
)


def test_packaged_ics_bundle_has_the_twelve_tactics(ics_kb):
    assert [t.name for t in ics_kb.tactics] == list(TACTIC_NAMES)
    assert [t.matrix_order for t in ics_kb.tactics] == list(range(12))


def test_empty_document_is_a_parse_error():
    with pytest.raises(BundleParseError):
        load_bundle(b"", Domain.ICS)
    with pytest.raises(BundleParseError):
        load_bundle(b"not json at all", Domain.ICS)


def test_non_bundle_json_is_structural_error():
    with pytest.raises(BundleStructureError):
        load_bundle(json.dumps({"type": "bundle", "objects": []}), Domain.ICS)


def test_technique_count_matches_raw_object_count(ics_kb, enterprise_kb):
    for kb, domain in ((ics_kb, Domain.ICS), (enterprise_kb, Domain.ENTERPRISE)):
        expected = oracles.count_active_techniques(packaged_bundle_path(domain))
        assert len(kb.techniques) == expected


def test_revoked_and_deprecated_techniques_excluded(ics_kb):
    raw = json.load(open(packaged_bundle_path(Domain.ICS)))
    excluded_ids = set()
    for obj in raw["objects"]:
        if obj.get("type") != "attack-pattern":
            continue
        if obj.get("revoked") or obj.get("x_mitre_deprecated"):
            for ref in obj.get("external_references", []):
                if ref.get("source_name") in ("mitre-attack", "mitre-ics-attack"):
                    excluded_ids.add(ref["external_id"])
    assert excluded_ids  # the snapshot ships at least one of each
    assert not excluded_ids & set(ics_kb.techniques)


def test_enterprise_subtechniques_fold_into_parents(enterprise_kb):
    assert all("." not in tid for tid in enterprise_kb.techniques)
    # Groups whose raw profile used sub-technique ids end up with the parent.
    apt28 = enterprise_kb.group("G0007")
    assert "T1566" in apt28.technique_ids
    assert all("." not in tid for g in enterprise_kb.groups.values() for tid in g.technique_ids)


def test_dangling_relationship_dropped_not_fatal(ics_kb):
    # The snapshot carries one dangling uses-relationship on purpose; the
    # bundle still loads and every surviving reference resolves.
    ics_kb.check_integrity()


def test_bundle_versions_recorded(ics_kb, enterprise_kb):
    assert ics_kb.bundle_version == "17.1"
    assert enterprise_kb.bundle_version == "17.1"


def test_group_profile_row_one(toy_kb):
    profile = group_profile(toy_kb, "1", Granularity.TACTIC)
    assert profile.bits == REFERENCE_ROWS["1"]


def test_group_profile_row_four(toy_kb):
    profile = group_profile(toy_kb, "4", Granularity.TACTIC)
    assert profile.bits == REFERENCE_ROWS["4"]


def test_group_with_no_techniques_has_zero_profile():
    kb = matrix_knowledge_base(
        {"a": (1, 0), "b": (0, 1), "empty": (0, 0)}, ("One", "Two")
    )
    assert group_profile(kb, "empty", Granularity.TACTIC).bits == (0, 0)


def test_unknown_group_is_not_found(toy_kb):
    with pytest.raises(UnknownEntityError):
        group_profile(toy_kb, "G9999", Granularity.TACTIC)


def test_tactic_profile_is_or_of_technique_tactics(ics_kb):
    for group_id in ics_kb.groups:
        profile = group_profile(ics_kb, group_id, Granularity.TACTIC)
        expected = [0] * len(ics_kb.tactics)
        order = {t.id: t.matrix_order for t in ics_kb.tactics}
        for tid in ics_kb.group(group_id).technique_ids:
            for tactic_id in ics_kb.technique(tid).tactic_ids:
                expected[order[tactic_id]] = 1
        assert list(profile.bits) == expected


def test_clean_dataset_reproduces_the_reference_rows(toy_kb):
    ds = build_dataset(toy_kb, Granularity.TACTIC)
    assert {label: vec.bits for label, vec in ds.rows} == REFERENCE_ROWS
    assert len(ds.rows) == 4


def test_zero_noise_copies_equal_clean_profiles(toy_kb):
    ds = build_dataset(toy_kb, Granularity.TACTIC, AugmentSpec(copies_per_group=3))
    assert len(ds.rows) == 16
    for label, vec in ds.rows:
        assert vec.bits == REFERENCE_ROWS[label]


def test_noise_flip_frequency_near_rate(toy_kb):
    spec = AugmentSpec(noise_rate=0.1, copies_per_group=100, seed=7)
    ds = build_dataset(toy_kb, Granularity.TACTIC, spec)
    flips = bits = 0
    for label, vec in ds.rows:
        flips += oracles.hamming_distance(vec.bits, REFERENCE_ROWS[label])
        bits += len(vec.bits)
    # Clean rows contribute zero flips; copies flip each bit at ~0.1.
    copy_bits = bits - 4 * 12
    assert abs(flips / copy_bits - 0.1) < 0.02


def test_dataset_deterministic_for_fixed_seed(toy_kb):
    spec = AugmentSpec(noise_rate=0.2, copies_per_group=10, seed=99)
    a = build_dataset(toy_kb, Granularity.TACTIC, spec)
    b = build_dataset(toy_kb, Granularity.TACTIC, spec)
    assert a == b


def test_dataset_needs_two_usable_groups():
    kb = matrix_knowledge_base({"a": (1, 0), "empty": (0, 0)}, ("One", "Two"))
    with pytest.raises(InsufficientClassesError):
        build_dataset(kb, Granularity.TACTIC)


def test_augment_spec_bounds():
    with pytest.raises(KnowledgeError):
        AugmentSpec(noise_rate=0.5).validate()
    with pytest.raises(KnowledgeError):
        AugmentSpec(noise_rate=-0.1).validate()
    with pytest.raises(KnowledgeError):
        AugmentSpec(copies_per_group=-1).validate()


def test_techniques_for_tactic_single_mapping():
    kb = matrix_knowledge_base({"a": (1, 0), "b": (0, 1)}, ("One", "Two"))
    only = techniques_for_tactic(kb, kb.tactics[0].id)
    assert [t.id for t in only] == ["T9000"]


def test_techniques_for_tactic_none_mapped(toy_kb):
    kb = matrix_knowledge_base({"a": (1, 0), "b": (1, 0)}, ("Used", "Unused"))
    # Both synthetic techniques exist, but techniques always map 1:1 here, so
    # query a tactic whose technique exists yet no group uses: still listed.
    assert [t.id for t in techniques_for_tactic(kb, kb.tactics[1].id)] == ["T9001"]


def test_techniques_for_tactic_matches_brute_force(ics_kb):
    for tactic in ics_kb.tactics:
        expected = sorted(
            (t for t in ics_kb.techniques.values() if tactic.id in t.tactic_ids),
            key=lambda t: t.id,
        )
        assert techniques_for_tactic(ics_kb, tactic.id) == expected


def test_techniques_for_unknown_tactic(ics_kb):
    with pytest.raises(UnknownEntityError):
        techniques_for_tactic(ics_kb, "TA0000")


def test_vector_length_invariance(ics_kb):
    for granularity in (Granularity.TACTIC, Granularity.TECHNIQUE):
        width = len(ics_kb.feature_names(granularity))
        for group_id in ics_kb.groups:
            assert len(group_profile(ics_kb, group_id, granularity).bits) == width


def test_ttp_vector_rejects_non_binary_entries():
    with pytest.raises(ValueError):
        TtpVector(Granularity.TACTIC, (0, 1, 2))


def test_referential_integrity_both_domains(ics_kb, enterprise_kb):
    for kb in (ics_kb, enterprise_kb):
        kb.check_integrity()
        for group in kb.groups.values():
            for tid in group.technique_ids:
                kb.technique(tid)
        for technique in kb.techniques.values():
            for tactic_id in technique.tactic_ids:
                kb.tactic(tactic_id)


def test_bundle_without_matrix_object_is_structural_error():
    raw = json.load(open(packaged_bundle_path(Domain.ICS)))
    objects = [o for o in raw["objects"] if o.get("type") != "x-mitre-matrix"]
    doc = json.dumps({"type": "bundle", "id": raw["id"], "objects": objects})
    with pytest.raises(BundleStructureError):
        load_bundle(doc, Domain.ICS)


def test_load_from_file_and_from_bytes_agree(ics_kb):
    path = packaged_bundle_path(Domain.ICS)
    from_bytes = load_bundle(open(path, "rb").read(), Domain.ICS)
    assert from_bytes.tactics == ics_kb.tactics
    assert set(from_bytes.techniques) == set(ics_kb.techniques)
    assert set(from_bytes.groups) == set(ics_kb.groups)


def test_group_aliases_loaded(ics_kb):
    sandworm = ics_kb.group("G0034")
    assert sandworm.name == "Sandworm Team"
    assert sandworm.aliases  # snapshot carries aliases for the profiled groups


def test_matrix_kb_rejects_mismatched_profile_width():
    with pytest.raises(KnowledgeError):
        matrix_knowledge_base({"a": (1, 0, 1)}, ("One", "Two"))
    with pytest.raises(KnowledgeError):
        matrix_knowledge_base({"a": (1,)}, ())
