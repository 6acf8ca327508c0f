"""File-backed model registry and experiment tracker.

Every trained model is exactly recoverable: runs pin their parameters and
environment, artifacts are stored under their SHA-256, and versions per
model name are contiguous integers recorded in a manifest that is only
ever replaced atomically (write-temp-then-rename).

Layout under the registry root:

    runs/<run_id>/meta.json
    runs/<run_id>/metrics/<name>.jsonl     one {"step","value","ts"} per line
    artifacts/<sha256>                     raw artifact bytes
    models/<name>/manifest.json            {"versions":[{...}]}
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Union

from . import model as model_artifact

LATEST = "latest"

RUNNING = "RUNNING"
FINISHED = "FINISHED"
FAILED = "FAILED"


class RegistryError(Exception):
    pass


class StorageFailure(RegistryError):
    """Registry directory unusable or locked by another writer."""


class UnknownRun(RegistryError):
    pass


class RunNotActive(RegistryError):
    """Run already finalized; no further logging or transitions."""


class UnknownModel(RegistryError):
    pass


class UnknownVersion(RegistryError):
    pass


class CorruptArtifact(RegistryError):
    """Stored bytes do not hash to the manifest value."""


@dataclass
class Run:
    run_id: str
    started_at: str
    params: dict[str, str]
    environment: dict[str, str]
    status: str = RUNNING


@dataclass(frozen=True)
class ModelVersion:
    name: str
    version: int
    run_id: str
    artifact_hash: str
    created_at: str


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class Registry:
    """Single-writer, multi-reader registry rooted at a plain directory."""

    def __init__(self, base_path: Union[str, Path]):
        self.base = Path(base_path)
        try:
            for sub in ("runs", "artifacts", "models"):
                (self.base / sub).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot initialize registry: {exc}") from exc

    # -- locking ---------------------------------------------------------

    @contextlib.contextmanager
    def _mutate(self) -> Iterator[None]:
        lock = self.base / ".lock"
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StorageFailure(f"registry lock already held: {lock}")
        except OSError as exc:
            raise StorageFailure(f"cannot take registry lock: {exc}") from exc
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield
        finally:
            with contextlib.suppress(OSError):
                os.unlink(lock)

    # -- runs --------------------------------------------------------------

    def _run_dir(self, run_id: str) -> Path:
        return self.base / "runs" / run_id

    def _read_run(self, run_id: str) -> Run:
        meta = self._run_dir(run_id) / "meta.json"
        if not meta.is_file():
            raise UnknownRun(f"no such run {run_id}")
        doc = json.loads(meta.read_text())
        return Run(
            run_id=doc["run_id"],
            started_at=doc["started_at"],
            params=doc["params"],
            environment=doc["environment"],
            status=doc["status"],
        )

    def _write_run(self, run: Run) -> None:
        doc = {
            "run_id": run.run_id,
            "started_at": run.started_at,
            "params": run.params,
            "environment": run.environment,
            "status": run.status,
        }
        _write_atomic(
            self._run_dir(run.run_id) / "meta.json",
            json.dumps(doc, sort_keys=True, indent=1).encode(),
        )

    def create_run(self, params: dict[str, str], environment: dict[str, str]) -> Run:
        """Persist a fresh RUNNING run with pinned params and environment."""
        run = Run(
            run_id=str(uuid.uuid4()),
            started_at=_utcnow(),
            params=dict(params),
            environment=dict(environment),
        )
        with self._mutate():
            try:
                (self._run_dir(run.run_id) / "metrics").mkdir(parents=True)
                self._write_run(run)
            except OSError as exc:
                raise StorageFailure(f"cannot persist run: {exc}") from exc
        return run

    def get_run(self, run_id: str) -> Run:
        return self._read_run(run_id)

    def log_metric(self, run_id: str, metric_name: str, value: float, step: int) -> None:
        """Append one metric observation to the run's jsonl stream."""
        with self._mutate():
            run = self._read_run(run_id)
            if run.status != RUNNING:
                raise RunNotActive(f"run {run_id} is {run.status}")
            line = json.dumps(
                {"step": step, "value": value, "ts": _utcnow()}, sort_keys=True
            )
            path = self._run_dir(run_id) / "metrics" / f"{metric_name}.jsonl"
            with open(path, "a") as fh:
                fh.write(line + "\n")

    def read_metrics(self, run_id: str, metric_name: str) -> list[dict]:
        self._read_run(run_id)
        path = self._run_dir(run_id) / "metrics" / f"{metric_name}.jsonl"
        if not path.is_file():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def finalize_run(self, run_id: str, status: str) -> None:
        """Transition a RUNNING run to FINISHED or FAILED, exactly once."""
        if status not in (FINISHED, FAILED):
            raise ValueError(f"finalize status must be FINISHED or FAILED, got {status}")
        with self._mutate():
            run = self._read_run(run_id)
            if run.status != RUNNING:
                raise RunNotActive(f"run {run_id} already {run.status}")
            run.status = status
            self._write_run(run)

    # -- models ------------------------------------------------------------

    def _manifest_path(self, name: str) -> Path:
        return self.base / "models" / name / "manifest.json"

    def _read_manifest(self, name: str) -> list[dict]:
        path = self._manifest_path(name)
        if not path.is_file():
            raise UnknownModel(f"no such model {name!r}")
        return json.loads(path.read_text())["versions"]

    def register_model(self, name: str, run_id: str, artifact: bytes) -> ModelVersion:
        """Store artifact bytes under their hash and append the next version."""
        self._read_run(run_id)
        model_artifact.deserialize(artifact)  # MalformedArtifact on junk

        digest = hashlib.sha256(artifact).hexdigest()
        with self._mutate():
            try:
                blob = self.base / "artifacts" / digest
                if not blob.exists():
                    _write_atomic(blob, artifact)

                path = self._manifest_path(name)
                if path.is_file():
                    versions = json.loads(path.read_text())["versions"]
                else:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    versions = []
                entry = {
                    "version": max((v["version"] for v in versions), default=0) + 1,
                    "run_id": run_id,
                    "artifact_hash": digest,
                    "created_at": _utcnow(),
                }
                versions.append(entry)
                _write_atomic(
                    path,
                    json.dumps({"versions": versions}, sort_keys=True, indent=1).encode(),
                )
            except OSError as exc:
                raise StorageFailure(f"cannot register model: {exc}") from exc
        return ModelVersion(name=name, **entry)

    def resolve_model(
        self, name: str, version: Union[int, str] = LATEST
    ) -> tuple[ModelVersion, bytes]:
        """Return the version entry plus artifact bytes, hash-verified."""
        versions = self._read_manifest(name)
        if version == LATEST:
            entry = max(versions, key=lambda v: v["version"])
        else:
            matches = [v for v in versions if v["version"] == version]
            if not matches:
                raise UnknownVersion(f"model {name!r} has no version {version}")
            entry = matches[0]

        blob = self.base / "artifacts" / entry["artifact_hash"]
        if not blob.is_file():
            raise CorruptArtifact(f"artifact {entry['artifact_hash']} missing")
        data = blob.read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        if digest != entry["artifact_hash"]:
            raise CorruptArtifact(
                f"artifact bytes hash to {digest}, manifest says {entry['artifact_hash']}"
            )
        return ModelVersion(name=name, **entry), data

    def list_models(self) -> list[tuple[str, int, str]]:
        """(name, latest_version, artifact_hash) triples, sorted by name."""
        models_dir = self.base / "models"
        out = []
        try:
            names = sorted(p.name for p in models_dir.iterdir() if p.is_dir())
        except OSError as exc:
            raise StorageFailure(f"cannot list models: {exc}") from exc
        for name in names:
            try:
                versions = self._read_manifest(name)
            except UnknownModel:
                continue
            latest = max(versions, key=lambda v: v["version"])
            out.append((name, latest["version"], latest["artifact_hash"]))
        return out
