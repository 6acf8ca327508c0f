"""Protocol-driven audio collection with idempotent offline sync."""

from .store import (
    PROTOCOL_STEPS,
    STEP_BOUNDS,
    AudioRef,
    CollectionError,
    CollectionRecord,
    CollectionStore,
    ConflictingResubmission,
    DurationOutOfBounds,
    IncompleteCollection,
    ProtocolStep,
    StepConflict,
    UnknownCollection,
    ValidationError,
    COMPLETE,
    PARTIAL,
)
from .http import create_app

__all__ = [
    "PROTOCOL_STEPS",
    "STEP_BOUNDS",
    "AudioRef",
    "CollectionError",
    "CollectionRecord",
    "CollectionStore",
    "ConflictingResubmission",
    "DurationOutOfBounds",
    "IncompleteCollection",
    "ProtocolStep",
    "StepConflict",
    "UnknownCollection",
    "ValidationError",
    "COMPLETE",
    "PARTIAL",
    "create_app",
]
