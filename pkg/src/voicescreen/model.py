"""Prediction contract and a deterministic trainable baseline classifier.

The prediction interface is the explicit contract between serving code and
whatever model sits behind it. The bundled implementation is L2-regularized
logistic regression on z-scored feature vectors, trained by full-batch
gradient descent from a zero start: the objective is convex, so training is
an exact function of (dataset order, config) and the serialized artifact is
reproducible byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .audio import FeatureConfig, FeatureVector

POSITIVE = "POSITIVE"
NEGATIVE = "NEGATIVE"

ARTIFACT_SCHEMA_VERSION = 1


class ModelError(Exception):
    """Base class for classifier failures."""


class DimensionMismatch(ModelError):
    """Feature vector length does not match the model."""


class EmptyDataset(ModelError):
    """Loss is undefined on an empty dataset."""


class DegenerateDataset(ModelError):
    """Training needs at least two examples covering both labels."""


class NonFiniteLoss(ModelError):
    """Training diverged; the learning rate is too high."""


class MalformedArtifact(ModelError):
    """Serialized model bytes are syntactically or structurally invalid."""


@dataclass(frozen=True)
class Prediction:
    """One classifier verdict: POSITIVE iff probability >= 0.5."""

    probability: float
    label: str
    model_version_id: str


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Trained classifier parameters plus the feature recipe they expect.

    version_id identifies the registered artifact a prediction came from;
    it is attached after registration and excluded from serialization and
    equality.
    """

    weights: np.ndarray
    bias: float
    feature_config: FeatureConfig
    norm_means: np.ndarray
    norm_scales: np.ndarray
    version_id: str = field(default="unversioned")

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.norm_means, dtype=np.float64)
        scales = np.asarray(self.norm_scales, dtype=np.float64)
        dim = 2 * self.feature_config.num_coefficients
        if w.shape != (dim,):
            raise ValueError(f"weights must have length {dim}")
        if means.shape != (dim,) or scales.shape != (dim,):
            raise ValueError(f"normalization must have length {dim}")
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)
                and np.all(np.isfinite(means)) and np.all(np.isfinite(scales))):
            raise ValueError("model parameters must be finite")
        if np.any(scales <= 0):
            raise ValueError("normalization scales must be positive")
        for name, arr in (("weights", w), ("norm_means", means), ("norm_scales", scales)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogisticModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
            and self.feature_config == other.feature_config
            and np.array_equal(self.norm_means, other.norm_means)
            and np.array_equal(self.norm_scales, other.norm_scales)
        )

    @property
    def dimension(self) -> int:
        return len(self.weights)

    def with_version(self, version_id: str) -> "LogisticModel":
        return replace(self, version_id=version_id)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    l2_lambda: float = 1e-3
    max_iterations: int = 5000
    tolerance: float = 1e-8
    seed: int = 0  # reserved for stochastic trainers; full batch ignores it

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def _sigmoid(scores: np.ndarray) -> np.ndarray:
    out = np.empty_like(scores)
    pos = scores >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-scores[pos]))
    e = np.exp(scores[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def label_for(probability: float) -> str:
    return POSITIVE if probability >= 0.5 else NEGATIVE


def predict(model: LogisticModel, features: FeatureVector) -> Prediction:
    """Probability of a positive screen for one feature vector."""
    x = features.values
    if x.shape != model.weights.shape:
        raise DimensionMismatch(
            f"feature length {len(x)} does not match model dimension {model.dimension}"
        )
    z = (x - model.norm_means) / model.norm_scales
    score = float(model.weights @ z + model.bias)
    probability = float(_sigmoid(np.array([score]))[0])
    return Prediction(
        probability=probability,
        label=label_for(probability),
        model_version_id=model.version_id,
    )


def _as_xy(
    dataset: Sequence[tuple[FeatureVector, str]], dim: int
) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    ys = []
    for vec, label in dataset:
        if len(vec.values) != dim:
            raise DimensionMismatch(
                f"feature length {len(vec.values)} does not match dimension {dim}"
            )
        if label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"unknown label {label!r}")
        rows.append(vec.values)
        ys.append(1.0 if label == POSITIVE else 0.0)
    return np.stack(rows), np.array(ys)


def _loss_and_gradient(
    z: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, l2_lambda: float
) -> tuple[float, np.ndarray, float]:
    # mean binary cross-entropy + (lambda/2)*||w||^2, in the stable
    # softplus form: loss_i = log(1+e^s) - y*s. Overflow becomes inf and
    # is surfaced by the caller's finite check.
    n = len(y)
    with np.errstate(over="ignore", invalid="ignore"):
        scores = z @ w + b
        loss = float(np.mean(np.logaddexp(0.0, scores) - y * scores))
        loss += 0.5 * l2_lambda * float(w @ w)
        residual = _sigmoid(scores) - y
        grad_w = z.T @ residual / n + l2_lambda * w
        grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def loss_and_gradient(
    model: LogisticModel,
    dataset: Sequence[tuple[FeatureVector, str]],
    l2_lambda: float,
) -> tuple[float, np.ndarray, float]:
    """Objective value and exact gradient at the model's parameters."""
    if len(dataset) == 0:
        raise EmptyDataset("dataset is empty")
    x, y = _as_xy(dataset, model.dimension)
    z = (x - model.norm_means) / model.norm_scales
    return _loss_and_gradient(z, y, model.weights, model.bias, l2_lambda)


def train(
    dataset: Sequence[tuple[FeatureVector, str]],
    config: TrainConfig = TrainConfig(),
    feature_config: FeatureConfig = FeatureConfig(),
    callback: Optional[Callable[[int, float], None]] = None,
) -> LogisticModel:
    """Fit the classifier by full-batch gradient descent from zero weights.

    The z-score normalization is fitted on the training set (constant
    dimensions get scale 1). Descent stops when the gradient max-norm
    drops below config.tolerance or after max_iterations. The result is a
    pure function of (dataset sequence, config): rerunning with equal
    inputs yields a byte-identical artifact.
    """
    if len(dataset) < 2:
        raise DegenerateDataset("need at least two examples")
    labels = {label for _, label in dataset}
    if labels != {POSITIVE, NEGATIVE}:
        raise DegenerateDataset(f"both labels required, got {sorted(labels)}")

    dim = 2 * feature_config.num_coefficients
    x, y = _as_xy(dataset, dim)
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    scales = np.where(stds > 0, stds, 1.0)
    z = (x - means) / scales

    w = np.zeros(dim)
    b = 0.0
    for iteration in range(config.max_iterations):
        loss, grad_w, grad_b = _loss_and_gradient(z, y, w, b, config.l2_lambda)
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss diverged at iteration {iteration}")
        if callback is not None:
            callback(iteration, loss)
        if max(float(np.max(np.abs(grad_w))), abs(grad_b)) < config.tolerance:
            break
        w = w - config.learning_rate * grad_w
        b = b - config.learning_rate * grad_b

    return LogisticModel(
        weights=w,
        bias=b,
        feature_config=feature_config,
        norm_means=means,
        norm_scales=scales,
    )


def serialize(model: LogisticModel) -> bytes:
    """Canonical JSON artifact: sorted keys, no insignificant whitespace,
    shortest round-tripping decimal floats. Equal models give equal bytes."""
    doc = {
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "normalization": {
            "means": model.norm_means.tolist(),
            "scales": model.norm_scales.tolist(),
        },
        "feature_config": {
            "frame_length": model.feature_config.frame_length,
            "hop_length": model.feature_config.hop_length,
            "mel_filters": model.feature_config.mel_filters,
            "num_coefficients": model.feature_config.num_coefficients,
            "pre_emphasis": model.feature_config.pre_emphasis,
            "log_floor": model.feature_config.log_floor,
            "internal_rate": model.feature_config.internal_rate,
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def deserialize(data: bytes) -> LogisticModel:
    """Inverse of serialize; raises MalformedArtifact on anything invalid."""
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedArtifact(f"invalid artifact syntax: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedArtifact("artifact root must be an object")
    try:
        if doc["schema_version"] != ARTIFACT_SCHEMA_VERSION:
            raise MalformedArtifact(
                f"unsupported schema_version {doc['schema_version']!r}"
            )
        fc = doc["feature_config"]
        feature_config = FeatureConfig(
            frame_length=float(fc["frame_length"]),
            hop_length=float(fc["hop_length"]),
            mel_filters=int(fc["mel_filters"]),
            num_coefficients=int(fc["num_coefficients"]),
            pre_emphasis=float(fc["pre_emphasis"]),
            log_floor=float(fc["log_floor"]),
            internal_rate=int(fc["internal_rate"]),
        )
        norm = doc["normalization"]
        model = LogisticModel(
            weights=np.array(doc["weights"], dtype=np.float64),
            bias=float(doc["bias"]),
            feature_config=feature_config,
            norm_means=np.array(norm["means"], dtype=np.float64),
            norm_scales=np.array(norm["scales"], dtype=np.float64),
        )
    except MalformedArtifact:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedArtifact(f"invalid artifact structure: {exc}") from exc
    return model
