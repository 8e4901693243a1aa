"""Max-margin attribution of TTP vectors to threat groups.

One-vs-rest linear classifiers fitted with seeded mini-batch subgradient
descent on hinge loss with L2 regularization — dependency-light, fully
deterministic for a fixed seed, and fast enough to retrain on demand.
Alongside margin ranking, `candidate_groups` implements exact
superset matching: the set of groups whose profile contains every
observed TTP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import IcshuntError
from .knowledge import (
    Dataset,
    Granularity,
    InsufficientClassesError,
    KnowledgeBase,
    TtpVector,
    group_profile,
)

logger = logging.getLogger(__name__)

MODEL_FORMAT = "icshunt-model/1"
_BATCH_SIZE = 32


class ClassifierError(IcshuntError):
    """Base error for training/prediction failures."""


class DimensionError(ClassifierError):
    pass


class EmptyObservationError(ClassifierError):
    pass


class EvaluationError(ClassifierError):
    pass


class ModelFormatError(ClassifierError):
    pass


@dataclass(frozen=True)
class ModelHyperparams:
    regularization_strength: float = 0.01
    epochs: int = 300
    learning_rate: float = 0.05
    seed: int = 0

    def validate(self) -> None:
        if self.regularization_strength <= 0:
            raise ClassifierError("regularization_strength must be positive")
        if self.epochs <= 0:
            raise ClassifierError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be positive")


@dataclass(frozen=True)
class TrainingReport:
    epochs_run: int
    final_loss: float
    samples: int


@dataclass(frozen=True)
class TrainedModel:
    granularity: Granularity
    feature_names: tuple[str, ...]
    classes: tuple[str, ...]
    weights: np.ndarray  # shape (classes, features)
    biases: np.ndarray  # shape (classes,)
    hyperparams: ModelHyperparams
    report: TrainingReport

    def scores(self, vector: TtpVector) -> np.ndarray:
        if len(vector.bits) != len(self.feature_names):
            raise DimensionError(
                f"vector has {len(vector.bits)} features, model expects {len(self.feature_names)}"
            )
        x = np.asarray(vector.bits, dtype=np.float64)
        return self.weights @ x + self.biases


@dataclass(frozen=True)
class Attribution:
    """Full ranking of groups by signed margin, best first."""

    ranked: tuple[tuple[str, float], ...]
    low_confidence: bool

    @property
    def top(self) -> str:
        return self.ranked[0][0]


def _dataset_arrays(dataset: Dataset) -> tuple[np.ndarray, list[str]]:
    if not dataset.rows:
        raise ClassifierError("dataset has no rows")
    width = len(dataset.feature_names)
    if width == 0:
        raise DimensionError("dataset has zero-length vectors")
    for label, vector in dataset.rows:
        if len(vector.bits) != width:
            raise DimensionError(
                f"row for {label!r} has {len(vector.bits)} features, expected {width}"
            )
    x = np.array([vector.bits for _, vector in dataset.rows], dtype=np.float64)
    labels = [label for label, _ in dataset.rows]
    return x, labels


def train(dataset: Dataset, hp: ModelHyperparams | None = None) -> TrainedModel:
    """Fit one-vs-rest hinge-loss linear classifiers with subgradient descent.

    Deterministic: the seed fixes weight initialization and every epoch's
    shuffle order. Returns the model plus a training report (epochs run,
    final objective value).
    """
    hp = hp or ModelHyperparams()
    hp.validate()
    x, labels = _dataset_arrays(dataset)
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise InsufficientClassesError(f"training needs >= 2 classes, got {len(classes)}")

    n, f = x.shape
    c = len(classes)
    class_index = {g: i for i, g in enumerate(classes)}
    # y[k, i] = +1 when sample i belongs to class k, else -1.
    y = -np.ones((c, n), dtype=np.float64)
    for i, label in enumerate(labels):
        y[class_index[label], i] = 1.0

    rng = np.random.default_rng(hp.seed)
    weights = rng.normal(0.0, 0.01, size=(c, f))
    biases = np.zeros(c, dtype=np.float64)

    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        # Mild decay keeps late epochs from oscillating around the optimum.
        lr = hp.learning_rate / (1.0 + 0.01 * epoch)
        for start in range(0, n, _BATCH_SIZE):
            batch = order[start : start + _BATCH_SIZE]
            xb = x[batch]  # (b, f)
            yb = y[:, batch]  # (c, b)
            margins = yb * (weights @ xb.T + biases[:, None])
            active = (margins < 1.0) * yb  # (c, b)
            grad_w = hp.regularization_strength * weights - (active @ xb) / len(batch)
            grad_b = -active.sum(axis=1) / len(batch)
            weights -= lr * grad_w
            biases -= lr * grad_b

    margins = y * (weights @ x.T + biases[:, None])
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    loss = float(hinge + 0.5 * hp.regularization_strength * (weights ** 2).sum())
    model = TrainedModel(
        granularity=dataset.granularity,
        feature_names=dataset.feature_names,
        classes=classes,
        weights=weights,
        biases=biases,
        hyperparams=hp,
        report=TrainingReport(epochs_run=hp.epochs, final_loss=loss, samples=n),
    )
    logger.info(
        "trained %d-class %s model on %d rows, final loss %.6f",
        c, dataset.granularity.value, n, loss,
    )
    return model


def predict_ranked(model: TrainedModel, vector: TtpVector) -> Attribution:
    """Rank every class by margin; ties broken by lexicographic group id."""
    scores = model.scores(vector)
    order = sorted(range(len(model.classes)), key=lambda i: (-scores[i], model.classes[i]))
    ranked = tuple((model.classes[i], float(scores[i])) for i in order)
    return Attribution(ranked=ranked, low_confidence=ranked[0][1] < 0.0)


def candidate_groups(kb: KnowledgeBase, observed: TtpVector) -> set[str]:
    """Groups whose profile is a bitwise superset of the observation.

    Profiles are packed into integers so the superset test is a single
    mask operation per group.
    """
    if observed.set_count == 0:
        raise EmptyObservationError("observation vector has no set bits")
    observed_mask = _pack_bits(observed.bits)
    out = set()
    for group_id in kb.groups:
        profile = group_profile(kb, group_id, observed.granularity)
        if observed_mask & ~_pack_bits(profile.bits) == 0:
            out.add(group_id)
    return out


def _pack_bits(bits) -> int:
    mask = 0
    for i, bit in enumerate(bits):
        if bit:
            mask |= 1 << i
    return mask


def evaluate(model: TrainedModel, test: Dataset) -> float:
    """Top-1 accuracy of the model over a test dataset."""
    if not test.rows:
        raise EvaluationError("test dataset is empty")
    if test.granularity is not model.granularity or test.feature_names != model.feature_names:
        raise DimensionError("test dataset features do not match the model")
    hits = 0
    for label, vector in test.rows:
        if predict_ranked(model, vector).top == label:
            hits += 1
    return hits / len(test.rows)


def split_dataset(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split, deterministic for a fixed seed.

    Every class keeps at least one training row; classes with a single row
    contribute nothing to the test set.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ClassifierError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    by_label: dict[str, list[int]] = {}
    for i, (label, _) in enumerate(dataset.rows):
        by_label.setdefault(label, []).append(i)

    test_idx: set[int] = set()
    for label in sorted(by_label):
        idx = by_label[label]
        if len(idx) < 2:
            continue
        take = min(len(idx) - 1, max(1, round(test_fraction * len(idx))))
        chosen = rng.permutation(len(idx))[:take]
        test_idx.update(idx[j] for j in chosen)

    train_rows = tuple(row for i, row in enumerate(dataset.rows) if i not in test_idx)
    test_rows = tuple(row for i, row in enumerate(dataset.rows) if i in test_idx)
    make = lambda rows: replace(dataset, rows=rows)  # noqa: E731
    return make(train_rows), make(test_rows)


def save_model(model: TrainedModel, path: str) -> None:
    """Persist the model as a flat, diff-able text document."""
    lines = [
        f"format: {MODEL_FORMAT}",
        f"granularity: {model.granularity.value}",
        f"regularization_strength: {model.hyperparams.regularization_strength!r}",
        f"epochs: {model.hyperparams.epochs}",
        f"learning_rate: {model.hyperparams.learning_rate!r}",
        f"seed: {model.hyperparams.seed}",
        f"epochs_run: {model.report.epochs_run}",
        f"final_loss: {model.report.final_loss!r}",
        f"samples: {model.report.samples}",
    ]
    for name in model.feature_names:
        lines.append(f"feature: {name}")
    for i, group_id in enumerate(model.classes):
        weights = " ".join(repr(w) for w in model.weights[i].tolist())
        lines.append(f"class: {group_id} {float(model.biases[i])!r} {weights}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> TrainedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    fields: dict[str, str] = {}
    features: list[str] = []
    class_lines: list[str] = []
    for line in lines:
        key, _, value = line.partition(": ")
        if not _:
            raise ModelFormatError(f"malformed model line {line!r}")
        if key == "feature":
            features.append(value)
        elif key == "class":
            class_lines.append(value)
        else:
            fields[key] = value
    if fields.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"unsupported model format {fields.get('format')!r}")
    if not features or not class_lines:
        raise ModelFormatError("model file missing feature or class lines")
    try:
        granularity = Granularity(fields["granularity"])
        hp = ModelHyperparams(
            regularization_strength=float(fields["regularization_strength"]),
            epochs=int(fields["epochs"]),
            learning_rate=float(fields["learning_rate"]),
            seed=int(fields["seed"]),
        )
        report = TrainingReport(
            epochs_run=int(fields["epochs_run"]),
            final_loss=float(fields["final_loss"]),
            samples=int(fields["samples"]),
        )
        classes, biases, weights = [], [], []
        for value in class_lines:
            parts = value.split(" ")
            if len(parts) != 2 + len(features):
                raise ModelFormatError(
                    f"class line for {parts[0]!r} has {len(parts) - 2} weights, "
                    f"expected {len(features)}"
                )
            classes.append(parts[0])
            biases.append(float(parts[1]))
            weights.append([float(p) for p in parts[2:]])
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file {path}: {exc}") from exc
    return TrainedModel(
        granularity=granularity,
        feature_names=tuple(features),
        classes=tuple(classes),
        weights=np.array(weights, dtype=np.float64),
        biases=np.array(biases, dtype=np.float64),
        hyperparams=hp,
        report=report,
    )
