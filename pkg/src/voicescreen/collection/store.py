"""Collection storage: documents directory + audio files per collection.

Clients generate the collection UUID, which makes the offline sync loop
idempotent: any prefix of the upload sequence can be replayed any number
of times, in any order, and the store converges to the same state.
Metadata lives as one JSON document per collection; audio bytes land
beside it under <store>/<collection_id>/<step>.wav.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .. import audio

PARTIAL = "PARTIAL"
COMPLETE = "COMPLETE"


class ProtocolStep(Enum):
    """Fixed ordered recording protocol; a config constant, not a schema."""

    SUSTAINED_VOWEL = "sustained_vowel"
    SENTENCE_READ = "sentence_read"
    COUNTING = "counting"


PROTOCOL_STEPS = tuple(ProtocolStep)

# per-step duration bounds in seconds (min, max)
STEP_BOUNDS = {
    ProtocolStep.SUSTAINED_VOWEL: (1.0, 30.0),
    ProtocolStep.SENTENCE_READ: (3.0, 60.0),
    ProtocolStep.COUNTING: (3.0, 60.0),
}


class CollectionError(Exception):
    pass


class ValidationError(CollectionError):
    pass


class UnknownCollection(CollectionError):
    pass


class ConflictingResubmission(CollectionError):
    """Same collection id resubmitted with different fields."""


class StepConflict(CollectionError):
    """Different audio bytes for a step that is already stored."""


class DurationOutOfBounds(CollectionError):
    pass


class IncompleteCollection(CollectionError):
    pass


@dataclass(frozen=True)
class AudioRef:
    step: ProtocolStep
    content_hash: str
    file_path: str
    duration: float
    sample_rate: int


@dataclass
class CollectionRecord:
    collection_id: str
    participant_ref: str
    collector_id: str
    hospital_code: str
    created_at: str
    info: dict[str, str] = field(default_factory=dict)
    audios: dict[ProtocolStep, AudioRef] = field(default_factory=dict)

    @property
    def sync_state(self) -> str:
        return COMPLETE if set(self.audios) == set(PROTOCOL_STEPS) else PARTIAL


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _record_to_doc(record: CollectionRecord) -> dict:
    return {
        "collection_id": record.collection_id,
        "participant_ref": record.participant_ref,
        "collector_id": record.collector_id,
        "hospital_code": record.hospital_code,
        "created_at": record.created_at,
        "info": record.info,
        "audios": {
            step.value: {
                "step": ref.step.value,
                "content_hash": ref.content_hash,
                "file_path": ref.file_path,
                "duration": ref.duration,
                "sample_rate": ref.sample_rate,
            }
            for step, ref in record.audios.items()
        },
        "sync_state": record.sync_state,
    }


def _record_from_doc(doc: dict) -> CollectionRecord:
    audios = {}
    for key, raw in doc.get("audios", {}).items():
        step = ProtocolStep(key)
        audios[step] = AudioRef(
            step=step,
            content_hash=raw["content_hash"],
            file_path=raw["file_path"],
            duration=raw["duration"],
            sample_rate=raw["sample_rate"],
        )
    return CollectionRecord(
        collection_id=doc["collection_id"],
        participant_ref=doc["participant_ref"],
        collector_id=doc["collector_id"],
        hospital_code=doc["hospital_code"],
        created_at=doc["created_at"],
        info=dict(doc.get("info", {})),
        audios=audios,
    )


def parse_step(value: Union[str, ProtocolStep]) -> ProtocolStep:
    if isinstance(value, ProtocolStep):
        return value
    try:
        return ProtocolStep(value)
    except ValueError:
        raise ValidationError(
            f"unknown protocol step {value!r}; expected one of "
            f"{[s.value for s in PROTOCOL_STEPS]}"
        )


class CollectionStore:
    """Documents + audio files under one root directory.

    Mutations for the same collection are serialized per id; reads see a
    consistent document (atomic replace).
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.documents = self.root / "documents"
        self.documents.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, collection_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(collection_id, threading.Lock())

    def _doc_path(self, collection_id: str) -> Path:
        return self.documents / f"{collection_id}.json"

    def _load(self, collection_id: str) -> CollectionRecord:
        path = self._doc_path(collection_id)
        if not path.is_file():
            raise UnknownCollection(f"no collection {collection_id}")
        return _record_from_doc(json.loads(path.read_text()))

    def _persist(self, record: CollectionRecord) -> None:
        _write_atomic(
            self._doc_path(record.collection_id),
            json.dumps(_record_to_doc(record), sort_keys=True, indent=1).encode(),
        )

    # -- operations ---------------------------------------------------------

    def create_collection(
        self,
        collection_id: str,
        participant_ref: str,
        collector_id: str,
        hospital_code: str,
        info: Optional[dict[str, str]] = None,
    ) -> tuple[CollectionRecord, bool]:
        """Create (or idempotently re-acknowledge) a collection.

        Returns (record, created). A resubmission with identical fields is
        a no-op returning the stored record; different fields raise
        ConflictingResubmission.
        """
        try:
            uuid.UUID(collection_id)
        except (ValueError, AttributeError, TypeError):
            raise ValidationError(f"collection_id {collection_id!r} is not a UUID")
        if not participant_ref:
            raise ValidationError("participant_ref must be nonempty")
        info = dict(info or {})

        with self._lock_for(collection_id):
            with contextlib.suppress(UnknownCollection):
                existing = self._load(collection_id)
                same = (
                    existing.participant_ref == participant_ref
                    and existing.collector_id == collector_id
                    and existing.hospital_code == hospital_code
                    and existing.info == info
                )
                if not same:
                    raise ConflictingResubmission(
                        f"collection {collection_id} already exists with different fields"
                    )
                return existing, False

            record = CollectionRecord(
                collection_id=collection_id,
                participant_ref=participant_ref,
                collector_id=collector_id,
                hospital_code=hospital_code,
                created_at=_utcnow(),
                info=info,
            )
            self._persist(record)
            return record, True

    def upload_audio(
        self,
        collection_id: str,
        step: Union[str, ProtocolStep],
        wav_bytes: bytes,
    ) -> tuple[AudioRef, CollectionRecord]:
        """Store one protocol step's WAV, rejecting anything not PCM16.

        Replaying identical bytes is a no-op; different bytes for a stored
        step raise StepConflict. The collection flips to COMPLETE when the
        last step lands.
        """
        step = parse_step(step)
        with self._lock_for(collection_id):
            record = self._load(collection_id)
            clip = audio.decode_wav(wav_bytes)  # audio.* errors propagate
            lo, hi = STEP_BOUNDS[step]
            if not lo <= clip.duration <= hi:
                raise DurationOutOfBounds(
                    f"{step.value} must last {lo}-{hi} s, got {clip.duration:.2f} s"
                )

            digest = hashlib.sha256(wav_bytes).hexdigest()
            existing = record.audios.get(step)
            if existing is not None:
                if existing.content_hash == digest:
                    return existing, record
                raise StepConflict(
                    f"step {step.value} already stored with different content"
                )

            rel_path = f"{collection_id}/{step.value}.wav"
            target = self.root / rel_path
            target.parent.mkdir(parents=True, exist_ok=True)
            _write_atomic(target, wav_bytes)
            ref = AudioRef(
                step=step,
                content_hash=digest,
                file_path=rel_path,
                duration=clip.duration,
                sample_rate=clip.sample_rate,
            )
            record.audios[step] = ref
            self._persist(record)
            return ref, record

    def get_collection(self, collection_id: str) -> CollectionRecord:
        return self._load(collection_id)

    def list_collections(
        self,
        hospital_code: Optional[str] = None,
        state: Optional[str] = None,
    ) -> list[CollectionRecord]:
        records = []
        for path in self.documents.glob("*.json"):
            record = _record_from_doc(json.loads(path.read_text()))
            if hospital_code is not None and record.hospital_code != hospital_code:
                continue
            if state is not None and record.sync_state != state:
                continue
            records.append(record)
        records.sort(key=lambda r: (r.created_at, r.collection_id))
        return records

    def export_dataset(
        self, destination: Union[str, Path], label_map: dict[str, str]
    ) -> Path:
        """Join external labels onto complete collections for training.

        Writes manifest.jsonl (one line per collection: id, label, per-step
        relative WAV paths) and copies the audio files. Deterministic:
        exporting twice produces byte-identical manifests.
        """
        destination = Path(destination)
        records = {}
        for collection_id in label_map:
            record = self._load(collection_id)
            if record.sync_state != COMPLETE:
                raise IncompleteCollection(
                    f"collection {collection_id} is {record.sync_state}"
                )
            records[collection_id] = record

        destination.mkdir(parents=True, exist_ok=True)
        lines = []
        for collection_id in sorted(records):
            record = records[collection_id]
            paths = {}
            for step in PROTOCOL_STEPS:
                ref = record.audios[step]
                rel = f"{collection_id}/{step.value}.wav"
                target = destination / rel
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes((self.root / ref.file_path).read_bytes())
                paths[step.value] = rel
            lines.append(
                json.dumps(
                    {
                        "collection_id": collection_id,
                        "label": label_map[collection_id],
                        "audios": paths,
                    },
                    sort_keys=True,
                )
            )
        manifest = destination / "manifest.jsonl"
        _write_atomic(manifest, ("\n".join(lines) + "\n").encode())
        return manifest

    def verify_integrity(self) -> list[str]:
        """Hash-check every stored audio file; returns human-readable problems."""
        problems = []
        for record in self.list_collections():
            for ref in record.audios.values():
                path = self.root / ref.file_path
                if not path.is_file():
                    problems.append(f"{record.collection_id}: missing {ref.file_path}")
                    continue
                digest = hashlib.sha256(path.read_bytes()).hexdigest()
                if digest != ref.content_hash:
                    problems.append(f"{record.collection_id}: hash mismatch {ref.file_path}")
        return problems
