import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import REFERENCE_ROWS
from icshunt.classifier import (
    ClassifierError,
    DimensionError,
    EmptyObservationError,
    EvaluationError,
    ModelFormatError,
    ModelHyperparams,
    candidate_groups,
    evaluate,
    load_model,
    predict_ranked,
    save_model,
    split_dataset,
    train,
)
from icshunt.knowledge import (
    Dataset,
    Granularity,
    InsufficientClassesError,
    TtpVector,
    build_dataset,
    group_profile,
    matrix_knowledge_base,
)

ROWS = [(label, bits) for label, bits in sorted(REFERENCE_ROWS.items())]


def _vec(bits):
    return TtpVector(Granularity.TACTIC, tuple(bits))


def test_reference_rows_are_pairwise_distinct():
    # Separability precondition, checked by brute force before trusting
    # any accuracy numbers.
    for i in range(len(ROWS)):
        for j in range(i + 1, len(ROWS)):
            assert ROWS[i][1] != ROWS[j][1]


def test_model_classifies_each_clean_profile(toy_kb, toy_model):
    for label, bits in ROWS:
        assert predict_ranked(toy_model, _vec(bits)).top == label


def test_single_class_dataset_rejected(toy_kb):
    ds = build_dataset(toy_kb, Granularity.TACTIC)
    one = Dataset(ds.granularity, ds.feature_names, tuple(r for r in ds.rows if r[0] == "1"))
    with pytest.raises(InsufficientClassesError):
        train(one)


def test_training_is_deterministic(toy_kb):
    ds = build_dataset(toy_kb, Granularity.TACTIC)
    a = train(ds, ModelHyperparams(seed=5))
    b = train(ds, ModelHyperparams(seed=5))
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)
    c = train(ds, ModelHyperparams(seed=6))
    assert not np.array_equal(a.weights, c.weights)


def test_predict_row_two_top_one(toy_model):
    attribution = predict_ranked(toy_model, _vec(REFERENCE_ROWS["2"]))
    assert attribution.top == "2"
    winners, distance = oracles.hamming_nearest(ROWS, REFERENCE_ROWS["2"])
    assert winners == {"2"} and distance == 0


def test_all_zero_vector_gets_full_ranking(toy_model):
    attribution = predict_ranked(toy_model, _vec([0] * 12))
    assert sorted(g for g, _ in attribution.ranked) == ["1", "2", "3", "4"]
    scores = [s for _, s in attribution.ranked]
    assert scores == sorted(scores, reverse=True)
    if attribution.ranked[0][1] < 0:
        assert attribution.low_confidence


def test_single_bit_flip_still_attributed_to_row_one(toy_model):
    # Drop the Persistence bit from row 1: Hamming distance 1 to row 1 and
    # at least 2 to every other row, so the nearest-neighbor answer is
    # unambiguous and the classifier must agree.
    perturbed = list(REFERENCE_ROWS["1"])
    perturbed[2] = 0
    winners, distance = oracles.hamming_nearest(ROWS, tuple(perturbed))
    assert winners == {"1"} and distance == 1
    assert predict_ranked(toy_model, _vec(perturbed)).top == "1"


def test_svm_matches_nearest_neighbor_on_all_single_bit_perturbations(toy_model):
    ties = 0
    for label, bits in ROWS:
        for i in range(12):
            perturbed = list(bits)
            perturbed[i] ^= 1
            winners, _ = oracles.hamming_nearest(ROWS, tuple(perturbed))
            if len(winners) > 1:
                ties += 1
                continue
            assert predict_ranked(toy_model, _vec(perturbed)).top in winners
    assert ties == 0  # reference rows are far enough apart that no tie exists


def test_candidate_groups_examples(toy_kb):
    initial_access = _vec([1] + [0] * 11)
    assert candidate_groups(toy_kb, initial_access) == {"1", "3"}

    collection_impact = _vec([0] * 7 + [1, 0, 0, 0, 1])
    assert candidate_groups(toy_kb, collection_impact) == {"4"}

    assert candidate_groups(toy_kb, _vec([1] * 12)) == set()

    with pytest.raises(EmptyObservationError):
        candidate_groups(toy_kb, _vec([0] * 12))


def test_candidate_groups_equals_brute_force(toy_kb, ics_kb, enterprise_kb):
    rng = np.random.default_rng(2024)
    for kb in (toy_kb, ics_kb, enterprise_kb):
        profiles = {
            gid: frozenset(
                i for i, b in enumerate(group_profile(kb, gid, Granularity.TECHNIQUE).bits) if b
            )
            for gid in kb.groups
        }
        width = len(kb.feature_names(Granularity.TECHNIQUE))
        for _ in range(25):
            bits = (rng.random(width) < 0.05).astype(int)
            if not bits.any():
                bits[rng.integers(width)] = 1
            observed = TtpVector(Granularity.TECHNIQUE, tuple(int(b) for b in bits))
            expected = oracles.brute_force_candidates(
                profiles, frozenset(i for i, b in enumerate(bits) if b)
            )
            assert candidate_groups(kb, observed) == expected


def test_candidate_monotonicity(toy_kb):
    base = [1] + [0] * 11
    smaller = candidate_groups(toy_kb, _vec(base))
    for i in range(1, 12):
        grown = list(base)
        grown[i] = 1
        assert candidate_groups(toy_kb, _vec(grown)) <= smaller


def test_evaluate_clean_rows_is_perfect(toy_kb, toy_model):
    ds = build_dataset(toy_kb, Granularity.TACTIC)
    assert evaluate(toy_model, ds) == 1.0


def test_evaluate_empty_test_set(toy_model, toy_kb):
    ds = build_dataset(toy_kb, Granularity.TACTIC)
    with pytest.raises(EvaluationError):
        evaluate(toy_model, Dataset(ds.granularity, ds.feature_names, ()))


def test_evaluate_feature_mismatch(toy_model, ics_kb):
    other = build_dataset(ics_kb, Granularity.TECHNIQUE)
    with pytest.raises(DimensionError):
        evaluate(toy_model, other)


def test_predict_dimension_mismatch(toy_model):
    with pytest.raises(DimensionError):
        predict_ranked(toy_model, TtpVector(Granularity.TACTIC, (1, 0)))


def test_ranking_stable_under_positive_scaling(toy_model):
    scaled = dataclasses.replace(
        toy_model, weights=toy_model.weights * 7.5, biases=toy_model.biases * 7.5
    )
    for _, bits in ROWS:
        original = [g for g, _ in predict_ranked(toy_model, _vec(bits)).ranked]
        rescaled = [g for g, _ in predict_ranked(scaled, _vec(bits)).ranked]
        assert original == rescaled


@given(st.lists(st.integers(min_value=0, max_value=1), min_size=12, max_size=12))
@settings(max_examples=100)
def test_ranking_contains_every_class_once(bits):
    # Uses a module-local model: hypothesis forbids function-scoped fixtures.
    model = _MODULE_MODEL
    attribution = predict_ranked(model, _vec(bits))
    assert sorted(g for g, _ in attribution.ranked) == ["1", "2", "3", "4"]


_MODULE_KB = matrix_knowledge_base(
    REFERENCE_ROWS,
    (
        "Initial Access", "Execution", "Persistence", "Privilege Escalation",
        "Evasion", "Discovery", "Lateral Movement", "Collection",
        "Command and Control", "Inhibit Response Function",
        "Impair Process Control", "Impact",
    ),
)
_MODULE_MODEL = train(build_dataset(_MODULE_KB, Granularity.TACTIC), ModelHyperparams(seed=0))


def test_hyperparameter_validation():
    for bad in (
        ModelHyperparams(regularization_strength=0),
        ModelHyperparams(epochs=0),
        ModelHyperparams(learning_rate=-1),
    ):
        with pytest.raises(ClassifierError):
            bad.validate()


def test_split_dataset_stratified_and_deterministic(toy_kb):
    from icshunt.knowledge import AugmentSpec

    ds = build_dataset(toy_kb, Granularity.TACTIC, AugmentSpec(copies_per_group=4))
    train_a, test_a = split_dataset(ds, 0.25, seed=3)
    train_b, test_b = split_dataset(ds, 0.25, seed=3)
    assert train_a == train_b and test_a == test_b
    assert len(train_a.rows) + len(test_a.rows) == len(ds.rows)
    train_labels = {label for label, _ in train_a.rows}
    assert train_labels == {"1", "2", "3", "4"}
    assert test_a.rows  # non-degenerate split
    with pytest.raises(ClassifierError):
        split_dataset(ds, 0.0, seed=3)
    with pytest.raises(ClassifierError):
        split_dataset(ds, 1.0, seed=3)


def test_model_save_load_round_trip(tmp_path, toy_kb, toy_model):
    path = tmp_path / "model.txt"
    save_model(toy_model, str(path))
    loaded = load_model(str(path))
    assert loaded.classes == toy_model.classes
    assert loaded.feature_names == toy_model.feature_names
    assert np.array_equal(loaded.weights, toy_model.weights)
    assert np.array_equal(loaded.biases, toy_model.biases)
    for _, bits in ROWS:
        assert predict_ranked(loaded, _vec(bits)).ranked == predict_ranked(
            toy_model, _vec(bits)
        ).ranked


def test_load_model_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("format: something-else/9\n")
    with pytest.raises(ModelFormatError):
        load_model(str(path))
    with pytest.raises(ModelFormatError):
        load_model(str(tmp_path / "missing.txt"))
