"""Loan-decision classifier: schema encoding, training, and config hashing.

Applications carry 18 categorical attributes that one-hot encode to 88
binary features (attribute-major). The classifier is a three-stage 1-D
convolutional network (kernels {5,5,2}, filter counts {50,50,60}, conv
strides {1,2,2}, max pooling after each stage) followed by two dropout-
regularized dense layers and a two-way softmax over {Fund, Reject}.

The full configuration, trained parameters included, serializes
canonically so it can be digest-anchored after every training run and
byte-compared after reload.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .canonical import canonical_deserialize, canonical_serialize
from .crypto import Digest, hash_canonical
from .nn import Adam, Conv1D, Dense, Dropout, Flatten, LeakyReLU, MaxPool1D, Network, softmax

__all__ = [
    "FUND",
    "REJECT",
    "LABELS",
    "AttributeSpec",
    "Schema",
    "DEFAULT_SCHEMA",
    "LoanApplication",
    "DecisionDistribution",
    "Dataset",
    "Hyperparams",
    "LoanModel",
    "encode_application",
    "auc",
    "stratified_folds",
    "cross_validate",
    "UnknownCategoryError",
    "SchemaMismatchError",
    "EmptyDatasetError",
    "SingleClassError",
    "TooFewSamplesError",
]

FUND = "Fund"
REJECT = "Reject"
LABELS = (REJECT, FUND)  # label index: Reject=0, Fund=1


class UnknownCategoryError(ValueError):
    """Attribute value outside the schema vocabulary."""


class SchemaMismatchError(ValueError):
    """Application attributes do not line up with the schema."""


class EmptyDatasetError(ValueError):
    pass


class SingleClassError(ValueError):
    """AUC needs both classes present."""


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class Schema:
    attributes: tuple[AttributeSpec, ...]

    @property
    def attribute_count(self) -> int:
        return len(self.attributes)

    @property
    def feature_count(self) -> int:
        return sum(len(a.values) for a in self.attributes)

    def offsets(self) -> list[int]:
        """Start index of each attribute's one-hot group."""
        out, total = [], 0
        for attr in self.attributes:
            out.append(total)
            total += len(attr.values)
        return out

    def group_slices(self) -> list[slice]:
        offs = self.offsets()
        return [
            slice(off, off + len(attr.values))
            for off, attr in zip(offs, self.attributes)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {"attributes": [{"name": a.name, "values": list(a.values)} for a in self.attributes]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Schema":
        return cls(tuple(AttributeSpec(a["name"], tuple(a["values"])) for a in d["attributes"]))


def _banded(name: str, count: int) -> AttributeSpec:
    return AttributeSpec(name, tuple(f"{name}_band_{i + 1}" for i in range(count)))


# 18 attributes whose vocabularies one-hot encode to exactly 88 features:
# four 9-level, six 6-level, and eight binary attributes.
DEFAULT_SCHEMA = Schema(
    (
        AttributeSpec("business_sector", (
            "retail", "food_service", "construction", "transport", "personal_services",
            "manufacturing", "agriculture", "technology", "other",
        )),
        AttributeSpec("loan_purpose", (
            "working_capital", "equipment", "inventory", "premises", "vehicle",
            "refinance", "expansion", "marketing", "emergency",
        )),
        _banded("region", 9),
        _banded("owner_age", 9),
        _banded("business_age", 6),
        _banded("requested_amount", 6),
        _banded("annual_revenue", 6),
        _banded("credit_history", 6),
        _banded("existing_debt", 6),
        _banded("cash_reserves", 6),
        AttributeSpec("has_collateral", ("no", "yes")),
        AttributeSpec("prior_default", ("no", "yes")),
        AttributeSpec("home_owner", ("no", "yes")),
        AttributeSpec("registered_business", ("no", "yes")),
        AttributeSpec("has_business_plan", ("no", "yes")),
        AttributeSpec("seasonal_business", ("no", "yes")),
        AttributeSpec("prior_relationship", ("no", "yes")),
        AttributeSpec("co_applicant", ("no", "yes")),
    )
)


@dataclass
class LoanApplication:
    customer_id: str
    attributes: dict[str, str]


def encode_application(app: LoanApplication, schema: Schema) -> np.ndarray:
    """Attribute-major one-hot encoding; exactly one active bit per attribute."""
    if set(app.attributes) != {a.name for a in schema.attributes}:
        missing = {a.name for a in schema.attributes} - set(app.attributes)
        extra = set(app.attributes) - {a.name for a in schema.attributes}
        raise SchemaMismatchError(f"missing={sorted(missing)} unexpected={sorted(extra)}")
    vec = np.zeros(schema.feature_count)
    for attr, off in zip(schema.attributes, schema.offsets()):
        value = app.attributes[attr.name]
        try:
            vec[off + attr.values.index(value)] = 1.0
        except ValueError:
            raise UnknownCategoryError(f"{attr.name}={value!r}") from None
    return vec


def decode_features(vec: np.ndarray, schema: Schema) -> dict[str, str]:
    """Inverse of encode_application for well-formed one-hot vectors."""
    out = {}
    for attr, sl in zip(schema.attributes, schema.group_slices()):
        group = vec[sl]
        if group.sum() != 1.0:
            raise ValueError(f"feature group for {attr.name} is not one-hot")
        out[attr.name] = attr.values[int(group.argmax())]
    return out


@dataclass
class DecisionDistribution:
    p_fund: float
    p_reject: float

    def __post_init__(self) -> None:
        for p in (self.p_fund, self.p_reject):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability out of range: {p}")
        if abs(self.p_fund + self.p_reject - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def decision(self) -> str:
        return FUND if self.p_fund >= self.p_reject else REJECT

    def to_dict(self) -> dict[str, float]:
        return {"p_fund": self.p_fund, "p_reject": self.p_reject}


@dataclass
class Dataset:
    """One-hot feature rows and integer labels (Reject=0, Fund=1)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must align")
        if len(self.features) == 0:
            raise EmptyDatasetError("dataset is empty")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def fund_fraction(self) -> float:
        return float(self.labels.mean())

    def subset(self, idx: Iterable[int]) -> "Dataset":
        idx = np.asarray(list(idx), dtype=int)
        return Dataset(self.features[idx], self.labels[idx])

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(
            np.concatenate([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
        )

    def save_csv(self, path: str | Path, schema: Schema) -> None:
        """Header of attribute names, then categorical values plus label."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([a.name for a in schema.attributes] + ["label"])
            for row, label in zip(self.features, self.labels):
                values = decode_features(row, schema)
                writer.writerow([values[a.name] for a in schema.attributes] + [LABELS[int(label)]])

    @classmethod
    def load_csv(cls, path: str | Path, schema: Schema) -> "Dataset":
        features, labels = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = [a.name for a in schema.attributes] + ["label"]
            if header != expected:
                raise SchemaMismatchError(f"csv header {header} != schema {expected}")
            for row in reader:
                app = LoanApplication("", dict(zip(header[:-1], row[:-1])))
                features.append(encode_application(app, schema))
                labels.append(LABELS.index(row[-1]))
        return cls(np.array(features), np.array(labels, dtype=int))


@dataclass(frozen=True)
class Hyperparams:
    input_features: int = 88
    conv_kernels: tuple[int, ...] = (5, 5, 2)
    conv_filters: tuple[int, ...] = (50, 50, 60)
    conv_strides: tuple[int, ...] = (1, 2, 2)
    pool_width: int = 2
    fc_widths: tuple[int, ...] = (100, 50)
    dropout_rate: float = 0.10
    lrelu_slope: float = 0.01
    l2_strength: float = 0.01
    batch_size: int = 100
    learning_rate: float = 0.0001
    n_classes: int = 2

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_features": self.input_features,
            "conv_kernels": list(self.conv_kernels),
            "conv_filters": list(self.conv_filters),
            "conv_strides": list(self.conv_strides),
            "pool_width": self.pool_width,
            "fc_widths": list(self.fc_widths),
            "dropout_rate": self.dropout_rate,
            "lrelu_slope": self.lrelu_slope,
            "l2_strength": self.l2_strength,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Hyperparams":
        return cls(
            input_features=d["input_features"],
            conv_kernels=tuple(d["conv_kernels"]),
            conv_filters=tuple(d["conv_filters"]),
            conv_strides=tuple(d["conv_strides"]),
            pool_width=d["pool_width"],
            fc_widths=tuple(d["fc_widths"]),
            dropout_rate=d["dropout_rate"],
            lrelu_slope=d["lrelu_slope"],
            l2_strength=d["l2_strength"],
            batch_size=d["batch_size"],
            learning_rate=d["learning_rate"],
            n_classes=d["n_classes"],
        )


class LoanModel:
    """Classifier plus everything needed to re-anchor it: hyperparams, weights, seed."""

    def __init__(self, hyper: Hyperparams | None = None, seed: int = 0):
        self.hyper = hyper or Hyperparams()
        self.seed = seed
        self.network = self._build(np.random.default_rng(seed))

    def _build(self, rng: np.random.Generator) -> Network:
        h = self.hyper
        layers = []
        channels = 1
        for i, (k, f, s) in enumerate(zip(h.conv_kernels, h.conv_filters, h.conv_strides)):
            layers.append(Conv1D(k, channels, f, s, rng=rng, name=f"conv{i + 1}"))
            layers.append(LeakyReLU(h.lrelu_slope))
            layers.append(MaxPool1D(h.pool_width))
            channels = f
        layers.append(Flatten())
        length = self.hyper.input_features
        for k, s in zip(h.conv_kernels, h.conv_strides):
            length = -(-length // s) // h.pool_width
        units = length * channels
        for i, width in enumerate(h.fc_widths):
            layers.append(Dense(units, width, rng=rng, name=f"fc{i + 1}"))
            layers.append(LeakyReLU(h.lrelu_slope))
            layers.append(Dropout(h.dropout_rate))
            units = width
        layers.append(Dense(units, h.n_classes, rng=rng, name="output"))
        return Network(layers, l2_strength=h.l2_strength)

    # -- inference -------------------------------------------------------------

    def _as_sequences(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.hyper.input_features:
            raise SchemaMismatchError(
                f"expected {self.hyper.input_features} features, got {x.shape[1]}"
            )
        return x[:, :, None]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """(N, features) -> (N, classes); column order (Reject, Fund)."""
        return softmax(self.network.forward(self._as_sequences(features)))

    def decide(self, feature_vector: np.ndarray) -> DecisionDistribution:
        probs = self.predict_proba(feature_vector)[0]
        return DecisionDistribution(p_fund=float(probs[1]), p_reject=float(probs[0]))

    def shape_trace(self) -> list[tuple[str, tuple[int, ...]]]:
        """Per-layer output shapes for a single input (introspection aid)."""
        x = np.zeros((1, self.hyper.input_features, 1))
        trace: list[tuple[str, tuple[int, ...]]] = [("input", x.shape[1:])]
        for layer in self.network.layers:
            x = layer.forward(x, train=False)
            name = getattr(layer, "name", type(layer).__name__.lower())
            trace.append((name, x.shape[1:]))
        return trace

    # -- training ----------------------------------------------------------------

    def train(self, data: Dataset, epochs: int, seed: int = 0) -> list[float]:
        """Mini-batch training; returns the dataset objective per epoch.

        The optimized objective is mean cross-entropy plus the weight
        penalty counted once per epoch: each step carries the penalty
        gradient scaled by its batch's share of the dataset. At the pinned
        learning rate, full-strength decay on every step drives all weights
        to the dead all-zero network before any fit is retained.
        """
        if len(data) == 0:
            raise EmptyDatasetError("cannot train on an empty dataset")
        rng = np.random.default_rng(seed)
        optimizer = Adam(self.network, self.hyper.learning_rate)
        x_all = self._as_sequences(data.features)
        n = len(data)
        history = []
        for _ in range(epochs):
            order = rng.permutation(n)
            ce_weighted = 0.0
            for start in range(0, n, self.hyper.batch_size):
                idx = order[start : start + self.hyper.batch_size]
                share = len(idx) / n
                loss = self.network.loss_with_grads(
                    x_all[idx], data.labels[idx], train=True, rng=rng, decay_scale=share
                )
                ce_weighted += (loss - share * self.network.l2_penalty()) * share
                optimizer.step()
            history.append(ce_weighted + self.network.l2_penalty())
        return history

    def accuracy(self, data: Dataset) -> float:
        probs = self.predict_proba(data.features)
        return float((probs.argmax(axis=1) == data.labels).mean())

    # -- serialization and anchoring ----------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        weights = {}
        for layer in self.network.trainable_layers():
            weights[layer.name] = {"W": layer.W.tolist(), "b": layer.b.tolist()}
        return {"hyperparams": self.hyper.to_dict(), "seed": self.seed, "weights": weights}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LoanModel":
        model = cls(Hyperparams.from_dict(d["hyperparams"]), seed=d["seed"])
        for layer in model.network.trainable_layers():
            layer.W = np.array(d["weights"][layer.name]["W"])
            layer.b = np.array(d["weights"][layer.name]["b"])
        return model

    def config_hash(self) -> Digest:
        return hash_canonical(self.to_dict())

    def save_bytes(self) -> bytes:
        return canonical_serialize(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.save_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "LoanModel":
        return cls.from_dict(canonical_deserialize(Path(path).read_bytes()))


# -- evaluation ---------------------------------------------------------------


def auc(scores: Iterable[float], labels: Iterable[int]) -> float:
    """Rank-based AUC: P(random positive outscores random negative), ties half."""
    s = np.asarray(list(scores), dtype=float)
    y = np.asarray(list(labels), dtype=int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("both classes required for AUC")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    ranks[order] = np.arange(1, len(s) + 1)
    # average ranks within tie groups
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Class-preserving fold assignment; fold sizes differ by at most one."""
    rng = np.random.default_rng(seed)
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for cls in sorted(np.unique(labels)):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        base, rem = divmod(len(idx), folds)
        # hand the remainder to the currently smallest folds
        order = sorted(range(folds), key=lambda f: (len(assignments[f]), f))
        sizes = [base + (1 if pos < rem else 0) for pos in range(folds)]
        start = 0
        for pos, f in enumerate(order):
            assignments[f].extend(idx[start : start + sizes[pos]].tolist())
            start += sizes[pos]
    return [np.array(sorted(a), dtype=int) for a in assignments]


def cross_validate(
    data: Dataset,
    hyper: Hyperparams | None = None,
    folds: int = 5,
    seed: int = 0,
    epochs: int = 10,
) -> tuple[float, list[float]]:
    """Stratified K-fold AUC; each fold held out once. Deterministic per seed."""
    labels = data.labels
    for cls in (0, 1):
        if int((labels == cls).sum()) < folds:
            raise TooFewSamplesError(f"need at least {folds} samples of class {cls}")
    fold_idx = stratified_folds(labels, folds, seed)
    fold_aucs = []
    for f, test_idx in enumerate(fold_idx):
        train_idx = np.setdiff1d(np.arange(len(data)), test_idx)
        model = LoanModel(hyper, seed=seed + 101 * (f + 1))
        model.train(data.subset(train_idx), epochs=epochs, seed=seed + 13 * (f + 1))
        probs = model.predict_proba(data.features[test_idx])
        fold_aucs.append(auc(probs[:, 1], labels[test_idx]))
    return float(np.mean(fold_aucs)), fold_aucs
