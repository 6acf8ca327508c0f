"""Inference lifecycle records and the broker event payloads."""

from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from ..model import Prediction

PENDING = "PENDING"
COMPLETED = "COMPLETED"
FAILED = "FAILED"

LATEST = "latest"
RESPONSES_SUBJECT = "inference.responses"

_MODEL_NAME = re.compile(r"[a-z0-9_-]+\Z")


class EventDecodeError(Exception):
    """Event payload is not a valid request/response document."""


def requests_subject(model_name: str) -> str:
    if not _MODEL_NAME.match(model_name):
        raise ValueError(
            f"model name {model_name!r} must match [a-z0-9_-]+ to route on a subject"
        )
    return f"inference.requests.{model_name}"


@dataclass
class InferenceRecord:
    """One prediction request from submission to terminal state.

    wav_base64 and publish_pending are internal plumbing: the audio is kept
    so an unsent request event can be republished after a crash or bus
    outage; neither field appears in API responses.
    """

    request_id: str
    model_name: str
    model_version: Union[int, str]  # integer or "latest"
    audio_hash: str
    status: str = PENDING
    result: Optional[Prediction] = None
    error_reason: Optional[str] = None
    submitted_at: str = ""
    completed_at: Optional[str] = None
    publish_pending: bool = field(default=False, repr=False)
    wav_base64: str = field(default="", repr=False)

    def to_api_json(self) -> dict:
        return {
            "request_id": self.request_id,
            "model_name": self.model_name,
            "model_version": self.model_version,
            "audio_hash": self.audio_hash,
            "status": self.status,
            "result": None
            if self.result is None
            else {
                "probability": self.result.probability,
                "label": self.result.label,
                "model_version_id": self.result.model_version_id,
            },
            "error_reason": self.error_reason,
            "submitted_at": self.submitted_at,
            "completed_at": self.completed_at,
        }

    def to_doc(self) -> dict:
        doc = self.to_api_json()
        doc["publish_pending"] = self.publish_pending
        doc["wav_base64"] = self.wav_base64
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "InferenceRecord":
        result = doc.get("result")
        return cls(
            request_id=doc["request_id"],
            model_name=doc["model_name"],
            model_version=doc["model_version"],
            audio_hash=doc["audio_hash"],
            status=doc["status"],
            result=None
            if result is None
            else Prediction(
                probability=result["probability"],
                label=result["label"],
                model_version_id=result["model_version_id"],
            ),
            error_reason=doc.get("error_reason"),
            submitted_at=doc.get("submitted_at", ""),
            completed_at=doc.get("completed_at"),
            publish_pending=doc.get("publish_pending", False),
            wav_base64=doc.get("wav_base64", ""),
        )

    def copy(self) -> "InferenceRecord":
        return replace(self)


@dataclass(frozen=True)
class RequestEvent:
    request_id: str
    model_name: str
    model_version: Union[int, str]
    wav_bytes: bytes


@dataclass(frozen=True)
class ResponseEvent:
    request_id: str
    outcome: str  # OK | ERROR
    probability: Optional[float] = None
    label: Optional[str] = None
    model_version_id: Optional[str] = None
    error_reason: Optional[str] = None


def encode_request_event(event: RequestEvent) -> bytes:
    doc = {
        "request_id": event.request_id,
        "model_name": event.model_name,
        "model_version": event.model_version,
        "wav_base64": base64.b64encode(event.wav_bytes).decode("ascii"),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def decode_request_event(payload: bytes) -> RequestEvent:
    try:
        doc = json.loads(payload.decode("utf-8"))
        event = RequestEvent(
            request_id=doc["request_id"],
            model_name=doc["model_name"],
            model_version=doc["model_version"],
            wav_bytes=base64.b64decode(doc["wav_base64"], validate=True),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise EventDecodeError(f"bad request event: {exc}") from exc
    if not isinstance(event.request_id, str) or not event.request_id:
        raise EventDecodeError("request_id must be a nonempty string")
    if event.model_version != LATEST and not isinstance(event.model_version, int):
        raise EventDecodeError("model_version must be an integer or 'latest'")
    return event


def encode_response_event(event: ResponseEvent) -> bytes:
    doc = {"request_id": event.request_id, "outcome": event.outcome}
    if event.outcome == "OK":
        doc.update(
            probability=event.probability,
            label=event.label,
            model_version_id=event.model_version_id,
        )
    else:
        doc["error_reason"] = event.error_reason
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def decode_response_event(payload: bytes) -> ResponseEvent:
    try:
        doc = json.loads(payload.decode("utf-8"))
        outcome = doc["outcome"]
        if outcome == "OK":
            event = ResponseEvent(
                request_id=doc["request_id"],
                outcome="OK",
                probability=float(doc["probability"]),
                label=doc["label"],
                model_version_id=doc["model_version_id"],
            )
        elif outcome == "ERROR":
            event = ResponseEvent(
                request_id=doc["request_id"],
                outcome="ERROR",
                error_reason=str(doc["error_reason"]),
            )
        else:
            raise EventDecodeError(f"unknown outcome {outcome!r}")
    except EventDecodeError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise EventDecodeError(f"bad response event: {exc}") from exc
    if event.outcome == "OK" and not 0.0 <= event.probability <= 1.0:
        raise EventDecodeError(f"probability {event.probability} outside [0, 1]")
    if not isinstance(event.request_id, str) or not event.request_id:
        raise EventDecodeError("request_id must be a nonempty string")
    return event
