"""Inference use cases, independent of transport and storage."""

from __future__ import annotations

import hashlib
import base64
import logging
from typing import Optional, Union

from .. import audio
from ..model import Prediction
from .ports import BusUnavailable, Clock, IdGen, MessageBus, ResultStore, SystemClock, UuidGen
from .records import (
    COMPLETED,
    FAILED,
    LATEST,
    PENDING,
    RESPONSES_SUBJECT,
    EventDecodeError,
    InferenceRecord,
    RequestEvent,
    decode_response_event,
    encode_request_event,
    requests_subject,
)

log = logging.getLogger(__name__)


class UnknownRequest(Exception):
    pass


class InferenceCore:
    """Submit requests, absorb response events, answer history queries.

    Submission persists the PENDING record before anything is published,
    so a crash or bus outage between the two steps loses nothing: the
    record keeps its publish_pending mark and republish_pending() sends
    the event later. Response handling is idempotent under the broker's
    at-least-once delivery.
    """

    def __init__(
        self,
        store: ResultStore,
        bus: MessageBus,
        clock: Optional[Clock] = None,
        ids: Optional[IdGen] = None,
    ):
        self.store = store
        self.bus = bus
        self.clock = clock if clock is not None else SystemClock()
        self.ids = ids if ids is not None else UuidGen()
        self.quarantine: list[bytes] = []

    # -- submission ---------------------------------------------------------

    def submit(
        self,
        model_name: str,
        model_version: Union[int, str, None],
        wav_bytes: bytes,
    ) -> str:
        """Validate, persist PENDING, then emit the request event."""
        subject = requests_subject(model_name)  # ValueError on a bad name
        audio.decode_wav(wav_bytes)  # fail fast; audio errors propagate
        version: Union[int, str] = LATEST if model_version is None else model_version

        request_id = self.ids.new_id()
        record = InferenceRecord(
            request_id=request_id,
            model_name=model_name,
            model_version=version,
            audio_hash=hashlib.sha256(wav_bytes).hexdigest(),
            status=PENDING,
            submitted_at=self.clock.now(),
            publish_pending=True,
            wav_base64=base64.b64encode(wav_bytes).decode("ascii"),
        )
        self.store.save(record)

        event = RequestEvent(
            request_id=request_id,
            model_name=model_name,
            model_version=version,
            wav_bytes=wav_bytes,
        )
        try:
            self.bus.publish(subject, encode_request_event(event))
        except BusUnavailable:
            log.warning("bus unavailable; request %s awaits republish", request_id)
            return request_id
        self.store.transition(request_id, expect_status=PENDING, publish_pending=False)
        return request_id

    def republish_pending(self) -> int:
        """Resend request events that never reached the bus. Returns how
        many were successfully republished."""
        sent = 0
        for record in self.store.publish_pending():
            event = RequestEvent(
                request_id=record.request_id,
                model_name=record.model_name,
                model_version=record.model_version,
                wav_bytes=base64.b64decode(record.wav_base64),
            )
            try:
                self.bus.publish(
                    requests_subject(record.model_name), encode_request_event(event)
                )
            except BusUnavailable:
                continue
            self.store.transition(
                record.request_id, expect_status=PENDING, publish_pending=False
            )
            sent += 1
        return sent

    # -- response events ------------------------------------------------------

    def handle_response(self, payload: bytes) -> None:
        """Apply one response event; never raises toward the bus adapter.

        Undecodable events and events for unknown request ids land in the
        quarantine list. Duplicate or late events for settled records are
        dropped silently: transitions happen at most once.
        """
        try:
            event = decode_response_event(payload)
        except EventDecodeError as exc:
            log.warning("quarantining poison response event: %s", exc)
            self.quarantine.append(payload)
            return

        record = self.store.get(event.request_id)
        if record is None:
            log.warning("response for unknown request %s dropped", event.request_id)
            self.quarantine.append(payload)
            return
        if record.status != PENDING:
            return

        if event.outcome == "OK":
            self.store.transition(
                event.request_id,
                expect_status=PENDING,
                status=COMPLETED,
                result=Prediction(
                    probability=event.probability,
                    label=event.label,
                    model_version_id=event.model_version_id,
                ),
                completed_at=self.clock.now(),
                publish_pending=False,
            )
        else:
            self.store.transition(
                event.request_id,
                expect_status=PENDING,
                status=FAILED,
                error_reason=event.error_reason,
                completed_at=self.clock.now(),
                publish_pending=False,
            )

    # -- queries ---------------------------------------------------------------

    def get(self, request_id: str) -> InferenceRecord:
        record = self.store.get(request_id)
        if record is None:
            raise UnknownRequest(f"no inference request {request_id}")
        return record

    def list(
        self, status: Optional[str] = None, model: Optional[str] = None
    ) -> list[InferenceRecord]:
        records = self.store.list(status=status, model=model)
        records.sort(key=lambda r: (r.submitted_at, r.request_id), reverse=True)
        return records
