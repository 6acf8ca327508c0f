"""The training pipeline: labeled WAVs -> features -> classifier -> registry.

The whole chain is bit-reproducible: features are pure functions, the
train/holdout split is seeded, training is deterministic, and the artifact
is canonical JSON, so (dataset bytes, configs) -> artifact_hash is a
mathematical function. Rerunning a pipeline never produces a model you
cannot recover.
"""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy

from . import __version__ as package_version
from . import model as model_mod
from .audio import FeatureConfig, FeatureVector
from .model import DegenerateDataset, TrainConfig
from .pipeline import features_from_wav
from .registry import FAILED, FINISHED, ModelVersion, Registry


@dataclass(frozen=True)
class PipelineResult:
    run_id: str
    model_version: ModelVersion
    holdout_accuracy: float
    losses: list[tuple[int, float]]
    n_train: int
    n_holdout: int


def load_manifest(manifest_path: Union[str, Path]) -> list[tuple[Path, str]]:
    """(wav_path, label) pairs from a manifest.jsonl, paths resolved
    relative to the manifest."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    entries = []
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        if "path" in doc:
            entries.append((base / doc["path"], doc["label"]))
        else:
            # collection-export form: one line per collection, several WAVs
            for rel in doc["audios"].values():
                entries.append((base / rel, doc["label"]))
    return entries


def split_dataset(
    entries: list, seed: int, holdout_fraction: float = 0.2
) -> tuple[list, list]:
    """Deterministic stratified split: shuffle within each label by seed,
    hold out the tail fraction (at least one example per label)."""
    rng = np.random.default_rng(seed)
    by_label: dict[str, list] = {}
    for entry in entries:
        by_label.setdefault(entry[1], []).append(entry)

    train: list = []
    holdout: list = []
    for label in sorted(by_label):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_holdout = max(1, int(round(len(group) * holdout_fraction)))
        for pos, idx in enumerate(order):
            (holdout if pos < n_holdout else train).append(group[idx])
    return train, holdout


def pinned_environment() -> dict[str, str]:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "voicescreen": package_version,
        "platform": platform.platform(),
    }


def run_training_pipeline(
    manifest_path: Union[str, Path],
    registry_root: Union[str, Path],
    train_config: TrainConfig = TrainConfig(),
    feature_config: FeatureConfig = FeatureConfig(),
    model_name: str = "screener",
    metric_every: int = 100,
) -> PipelineResult:
    """Train from a labeled manifest and register the artifact.

    Creates a run pinning all parameters and the environment, logs the
    loss curve and held-out accuracy, and registers the serialized model
    under model_name.
    """
    entries = load_manifest(manifest_path)
    if len({label for _, label in entries}) < 2:
        raise DegenerateDataset("manifest must contain both labels")

    features = [
        (features_from_wav(path.read_bytes(), feature_config), label)
        for path, label in entries
    ]
    train_set, holdout_set = split_dataset(features, train_config.seed)

    registry = Registry(registry_root)
    params = {
        "model_name": model_name,
        "n_examples": str(len(entries)),
        "holdout_fraction": "0.2",
        **{f"train.{k}": str(v) for k, v in asdict(train_config).items()},
        **{f"features.{k}": str(v) for k, v in asdict(feature_config).items()},
    }
    run = registry.create_run(params, pinned_environment())

    losses: list[tuple[int, float]] = []

    def on_iteration(step: int, loss: float) -> None:
        if step % metric_every == 0:
            losses.append((step, loss))

    try:
        model = model_mod.train(
            train_set, train_config, feature_config, callback=on_iteration
        )
        correct = sum(
            1
            for vec, label in holdout_set
            if model_mod.predict(model, vec).label == label
        )
        accuracy = correct / len(holdout_set)
    except Exception:
        registry.finalize_run(run.run_id, FAILED)
        raise

    for step, loss in losses:
        registry.log_metric(run.run_id, "loss", loss, step)
    registry.log_metric(run.run_id, "holdout_accuracy", accuracy, step=0)
    version = registry.register_model(
        model_name, run.run_id, model_mod.serialize(model)
    )
    registry.finalize_run(run.run_id, FINISHED)
    return PipelineResult(
        run_id=run.run_id,
        model_version=version,
        holdout_accuracy=accuracy,
        losses=losses,
        n_train=len(train_set),
        n_holdout=len(holdout_set),
    )


def predict_wav(
    model: model_mod.LogisticModel, wav_bytes: bytes
) -> model_mod.Prediction:
    """Convenience: one-shot prediction on raw WAV bytes."""
    vec: FeatureVector = features_from_wav(wav_bytes, model.feature_config)
    return model_mod.predict(model, vec)
