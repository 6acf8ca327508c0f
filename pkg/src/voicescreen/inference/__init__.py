"""Event-driven inference API built as a hexagonal core.

The core holds the use cases (submit, record responses, query history) and
touches the outside world only through ports: a result store, a message
bus, a clock, and an id generator. Adapters bind those ports to real
infrastructure (files + the broker) or to in-memory fakes; the same core
test suite must pass against both.
"""

from .ports import (
    BusUnavailable,
    Clock,
    IdGen,
    MessageBus,
    Predictor,
    ResultStore,
    SystemClock,
    UuidGen,
)
from .records import (
    COMPLETED,
    FAILED,
    PENDING,
    RESPONSES_SUBJECT,
    EventDecodeError,
    InferenceRecord,
    RequestEvent,
    ResponseEvent,
    decode_request_event,
    decode_response_event,
    encode_request_event,
    encode_response_event,
    requests_subject,
)
from .core import InferenceCore, UnknownRequest
from .adapters import (
    BrokerBus,
    FileResultStore,
    InMemoryBus,
    InMemoryResultStore,
)
from .http import create_app

__all__ = [
    "BusUnavailable",
    "Clock",
    "IdGen",
    "MessageBus",
    "Predictor",
    "ResultStore",
    "SystemClock",
    "UuidGen",
    "COMPLETED",
    "FAILED",
    "PENDING",
    "RESPONSES_SUBJECT",
    "EventDecodeError",
    "InferenceRecord",
    "RequestEvent",
    "ResponseEvent",
    "decode_request_event",
    "decode_response_event",
    "encode_request_event",
    "encode_response_event",
    "requests_subject",
    "InferenceCore",
    "UnknownRequest",
    "BrokerBus",
    "FileResultStore",
    "InMemoryBus",
    "InMemoryResultStore",
    "create_app",
]
