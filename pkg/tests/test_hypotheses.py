import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icshunt.classifier import ModelHyperparams, train
from icshunt.hypotheses import (
    Hypothesis,
    HypothesisError,
    HypothesisStatus,
    HuntCorrelator,
    IntegrityError,
    generate,
    predict_future,
    validate,
)
from icshunt.knowledge import Granularity, build_dataset, matrix_knowledge_base
from icshunt.signatures import Detection, Severity

from conftest import REFERENCE_ROWS, TACTIC_NAMES

ATTACKER = "198.51.100.66"
VICTIM = "192.0.2.10"

# Toy KB columns: T9000=Initial Access, T9001=Execution, T9002=Persistence,
# T9003=Privilege Escalation, T9004=Evasion, T9005=Discovery,
# T9006=Lateral Movement, T9007=Collection, T9008=Command and Control,
# T9009=Inhibit Response Function, T9010=Impair Process Control, T9011=Impact.

_counter = 0


def _detection(techniques, ts=1000.0, attacker=ATTACKER, victim=VICTIM):
    global _counter
    _counter += 1
    return Detection(
        id=f"det-{_counter:04d}",
        timestamp=ts,
        attacker_ip=attacker,
        victim_ip=victim,
        attack_type="Synthetic Signal",
        rule_id="synthetic-rule",
        technique_ids=tuple(techniques),
        tactic_ids=(),
        severity=Severity.MEDIUM,
        evidence=("synthetic evidence",),
    )


def _member_ids(hypothesis):
    return [c.group_id for c in hypothesis.superset_candidates()]


def test_initial_access_only_keeps_groups_one_and_three(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    assert h.status is HypothesisStatus.GENERATED
    assert set(_member_ids(h)) == {"1", "3"}
    assert h.observed_techniques == {"T9000"}
    assert h.observed_tactics == {"TA9000"}


def test_predicted_future_is_unobserved_union_in_lifecycle_order(toy_kb):
    future = predict_future(toy_kb, ["1", "3"], ["T9000"])
    assert future == (
        ("T9002", "TA9002"),  # Persistence
        ("T9006", "TA9006"),  # Lateral Movement
        ("T9008", "TA9008"),  # Command and Control
    )


def test_exact_profile_match_predicts_nothing(toy_kb, toy_model):
    h = generate([_detection(["T9007"]), _detection(["T9011"])], toy_kb, toy_model)
    assert _member_ids(h) == ["4"]
    assert h.predicted_future == ()


def test_empty_observation_predicts_the_full_union(toy_kb):
    future = predict_future(toy_kb, ["1", "3"], [])
    assert {t for t, _ in future} == {"T9000", "T9002", "T9006", "T9008"}


def test_predict_future_orders_ties_by_technique_id(toy_kb):
    pairs = predict_future(toy_kb, ["2"], [])
    orders = [toy_kb.tactic_order(t) for _, t in pairs]
    assert orders == sorted(orders)
    assert [t for t, _ in pairs] == sorted(t for t in toy_kb.group("2").technique_ids)


def test_duplicate_techniques_collapse_but_evidence_accumulates(toy_kb, toy_model):
    d1, d2 = _detection(["T9000"]), _detection(["T9000"], ts=1010.0)
    h = generate([d1, d2], toy_kb, toy_model)
    assert h.observed_techniques == {"T9000"}
    assert h.detection_ids == (d1.id, d2.id)
    assert h.created_at == 1000.0 and h.updated_at == 1010.0


def test_generate_requires_detections(toy_kb, toy_model):
    with pytest.raises(HypothesisError):
        generate([], toy_kb, toy_model)


def test_unknown_technique_in_detection_is_an_integrity_error(toy_kb, toy_model):
    with pytest.raises(IntegrityError, match="T0000"):
        generate([_detection(["T0000"])], toy_kb, toy_model)


def test_subset_of_no_profile_is_born_rejected(toy_kb, toy_model):
    # Privilege Escalation (T9003) appears in no reference profile.
    h = generate([_detection(["T9003"])], toy_kb, toy_model)
    assert h.status is HypothesisStatus.REJECTED
    assert h.rejection_reason == (
        "observed techniques are not a subset of any group profile"
    )
    assert h.predicted_future == ()
    assert h.superset_candidates() == ()
    assert "No catalogued group profile contains every observed technique." in h.narrative


def test_candidate_list_is_a_full_ranking_members_first(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    assert sorted(c.group_id for c in h.candidates) == ["1", "2", "3", "4"]
    flags = [c.superset_match for c in h.candidates]
    assert flags == sorted(flags, reverse=True)  # members precede the rest
    member_scores = [c.score for c in h.candidates if c.superset_match]
    assert member_scores == sorted(member_scores, reverse=True)


def test_predicted_hit_validates_and_narrows(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    persistence = _detection(["T9002"], ts=1100.0)
    updated = validate(h, persistence, toy_kb)
    assert updated.status is HypothesisStatus.VALIDATED
    assert updated.id == h.id
    assert _member_ids(updated) == ["1"]
    assert updated.observed_techniques == {"T9000", "T9002"}
    assert updated.predicted_future == (("T9008", "TA9008"),)
    assert updated.detection_ids == h.detection_ids + (persistence.id,)
    assert updated.updated_at == 1100.0


def test_outside_all_candidates_rejects_and_clears_future(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    impact = _detection(["T9011"], ts=1050.0)
    rejected = validate(h, impact, toy_kb)
    assert rejected.status is HypothesisStatus.REJECTED
    assert rejected.rejection_reason == (
        "techniques T9011 are outside every candidate group profile"
    )
    assert rejected.predicted_future == ()
    assert rejected.detection_ids[-1] == impact.id


def test_repeat_observation_only_appends_evidence(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    again = _detection(["T9000"], ts=1200.0)
    updated = validate(h, again, toy_kb)
    assert updated.status is HypothesisStatus.GENERATED
    assert updated.candidates == h.candidates
    assert updated.predicted_future == h.predicted_future
    assert updated.detection_ids == h.detection_ids + (again.id,)
    assert updated.updated_at == 1200.0


def test_validating_a_rejected_hypothesis_is_an_error(toy_kb, toy_model):
    h = generate([_detection(["T9003"])], toy_kb, toy_model)
    with pytest.raises(HypothesisError, match="already rejected"):
        validate(h, _detection(["T9000"]), toy_kb)


def test_narrative_quotes_technique_descriptions(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    assert (
        "T9000 Initial Access Activity: Synthetic stand-in technique for the"
        " Initial Access column." in h.narrative
    )
    assert "Profile-consistent groups, best first:" in h.narrative


def test_document_round_trip(toy_kb, toy_model):
    h = generate([_detection(["T9000"])], toy_kb, toy_model)
    assert Hypothesis.from_doc(h.to_doc()) == h
    rejected = validate(h, _detection(["T9011"], ts=1050.0), toy_kb)
    assert Hypothesis.from_doc(rejected.to_doc()) == rejected


def test_sandworm_profile_contains_the_scenario_techniques(ics_kb, ics_model):
    observed = ["T0846", "T0888", "T0855", "T0836"]
    h = generate([_detection(observed)], ics_kb, ics_model)
    assert "G0034" in _member_ids(h)
    profile = set(ics_kb.group("G0034").technique_ids)
    assert set(observed) <= profile


def test_correlator_keys_by_attacker_victim_pair(toy_kb, toy_model):
    correlator = HuntCorrelator(toy_kb, toy_model)
    correlator.ingest(_detection(["T9000"], ts=1.0))
    correlator.ingest(_detection(["T9000"], ts=2.0, attacker="10.0.0.9"))
    snapshot = correlator.snapshot()
    assert len(snapshot) == 2
    assert [h.attacker_ip for h in snapshot] == sorted(h.attacker_ip for h in snapshot)


def test_correlator_validates_within_the_window(toy_kb, toy_model):
    correlator = HuntCorrelator(toy_kb, toy_model)
    (first,) = correlator.ingest(_detection(["T9000"], ts=0.0))
    (second,) = correlator.ingest(_detection(["T9002"], ts=100.0))
    assert second.id == first.id
    assert second.status is HypothesisStatus.VALIDATED
    assert _member_ids(second) == ["1"]


def test_correlator_ages_out_stale_hypotheses(toy_kb, toy_model):
    correlator = HuntCorrelator(toy_kb, toy_model, correlation_window=3600.0)
    (first,) = correlator.ingest(_detection(["T9000"], ts=0.0))
    (fresh,) = correlator.ingest(_detection(["T9007"], ts=4000.0))
    assert fresh.id != first.id
    assert fresh.status is HypothesisStatus.GENERATED
    assert len(fresh.detection_ids) == 1
    assert correlator.snapshot() == [fresh]


def test_correlator_respawns_after_rejection(toy_kb, toy_model):
    correlator = HuntCorrelator(toy_kb, toy_model)
    correlator.ingest(_detection(["T9000"], ts=0.0))
    out = correlator.ingest(_detection(["T9011"], ts=10.0))
    assert [h.status for h in out] == [
        HypothesisStatus.REJECTED,
        HypothesisStatus.GENERATED,
    ]
    rejected, respawn = out
    assert respawn.id != rejected.id
    assert _member_ids(respawn) == ["4"]
    assert correlator.snapshot() == [respawn]


def test_correlator_drops_born_rejected_hypotheses(toy_kb, toy_model):
    correlator = HuntCorrelator(toy_kb, toy_model)
    (born,) = correlator.ingest(_detection(["T9003"], ts=0.0))
    assert born.status is HypothesisStatus.REJECTED
    assert correlator.snapshot() == []


# ---------------------------------------------------------------------------
# Invariants over randomized detection sequences.

_MODULE_KB = matrix_knowledge_base(REFERENCE_ROWS, TACTIC_NAMES)
_MODULE_MODEL = train(
    build_dataset(_MODULE_KB, Granularity.TACTIC), ModelHyperparams(seed=0)
)

_sequences = st.lists(
    st.tuples(st.integers(min_value=0, max_value=11), st.integers(min_value=0, max_value=1)),
    min_size=1,
    max_size=12,
)


def _replay(seq):
    correlator = HuntCorrelator(_MODULE_KB, _MODULE_MODEL)
    emitted = []
    for i, (tech, victim_pick) in enumerate(seq):
        detection = Detection(
            id=f"seq-{i:03d}",
            timestamp=float(i),
            attacker_ip=ATTACKER,
            victim_ip=("192.0.2.10", "192.0.2.11")[victim_pick],
            attack_type="Synthetic Signal",
            rule_id="synthetic-rule",
            technique_ids=(f"T9{tech:03d}",),
            tactic_ids=(),
            severity=Severity.LOW,
            evidence=(),
        )
        emitted.extend(correlator.ingest(detection))
    return emitted


@settings(max_examples=60, deadline=None)
@given(_sequences)
def test_hypothesis_invariants_hold_on_random_sequences(seq):
    emitted = _replay(seq)
    assert emitted == _replay(seq)  # deterministic replay
    members_by_id = {}
    for h in emitted:
        observed = set(h.observed_techniques)
        future = [t for t, _ in h.predicted_future]
        assert not observed & set(future)
        orders = [_MODULE_KB.tactic_order(ta) for _, ta in h.predicted_future]
        assert orders == sorted(orders)
        assert sorted(c.group_id for c in h.candidates) == ["1", "2", "3", "4"]
        members = set(_member_ids(h))
        if h.id in members_by_id:
            assert members <= members_by_id[h.id]
        members_by_id[h.id] = members
        if h.status is HypothesisStatus.REJECTED:
            assert h.rejection_reason
            assert h.predicted_future == ()
        else:
            for group_id in members:
                profile = set(_MODULE_KB.group(group_id).technique_ids)
                assert observed <= profile
        assert Hypothesis.from_doc(h.to_doc()) == h


@settings(max_examples=30, deadline=None)
@given(_sequences)
def test_snapshot_hypotheses_are_never_rejected(seq):
    correlator = HuntCorrelator(_MODULE_KB, _MODULE_MODEL)
    for i, (tech, victim_pick) in enumerate(seq):
        correlator.ingest(
            dataclasses.replace(
                _detection([f"T9{tech:03d}"], ts=float(i)),
                victim_ip=("192.0.2.10", "192.0.2.11")[victim_pick],
            )
        )
    for h in correlator.snapshot():
        assert h.status is not HypothesisStatus.REJECTED
