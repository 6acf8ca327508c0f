"""Ports: the contracts between the inference core and the world.

Adapters implement these against real infrastructure; tests implement them
in memory. The core imports nothing below this boundary.
"""

from __future__ import annotations

import uuid
from datetime import datetime, timezone
from typing import Callable, Optional, Protocol

from ..audio import FeatureVector
from ..model import Prediction
from .records import InferenceRecord


class BusUnavailable(Exception):
    """The message bus cannot accept a publish right now."""


class ResultStore(Protocol):
    """Persistence for inference records with atomic status transitions."""

    def save(self, record: InferenceRecord) -> None: ...

    def get(self, request_id: str) -> Optional[InferenceRecord]: ...

    def list(
        self, status: Optional[str] = None, model: Optional[str] = None
    ) -> list[InferenceRecord]: ...

    def transition(self, request_id: str, expect_status: str, **updates) -> bool:
        """Compare-and-set: apply updates only while status matches.

        Returns False when the record is missing or already moved on.
        """
        ...

    def publish_pending(self) -> list[InferenceRecord]:
        """Records whose request event has not (yet) reached the bus."""
        ...


class MessageBus(Protocol):
    def publish(self, subject: str, payload: bytes) -> None:
        """Hand one event to the bus; raises BusUnavailable on outage."""
        ...

    def subscribe_responses(self, handler: Callable[[bytes], None]) -> None:
        """Route every response event payload to handler (at least once)."""
        ...


class Clock(Protocol):
    def now(self) -> str: ...


class IdGen(Protocol):
    def new_id(self) -> str: ...


class Predictor(Protocol):
    """Shared prediction contract; the model server binds a real model."""

    def predict_features(self, features: FeatureVector) -> Prediction: ...


class SystemClock:
    def now(self) -> str:
        return datetime.now(timezone.utc).isoformat()


class UuidGen:
    def new_id(self) -> str:
        return str(uuid.uuid4())
