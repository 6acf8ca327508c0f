"""Durable publish/subscribe broker with queue groups and at-least-once
delivery, plus its wire protocol and client."""

from .wire import (
    AckFrame,
    ConnectFrame,
    ErrFrame,
    Frame,
    MsgFrame,
    OkFrame,
    PingFrame,
    PongFrame,
    ProtocolError,
    PubFrame,
    SubFrame,
    UnsubFrame,
    decode_frame,
    encode_frame,
    validate_subject,
)
from .core import (
    BrokerCore,
    BrokerError,
    Delivery,
    DuplicateSid,
    NotConnected,
    PayloadTooLarge,
    UnknownPending,
    UnknownSid,
    DEFAULT_PORT,
    MAX_PAYLOAD,
)
from .server import BrokerServer
from .client import BrokerClient, BrokerClientError

__all__ = [
    "AckFrame",
    "ConnectFrame",
    "ErrFrame",
    "Frame",
    "MsgFrame",
    "OkFrame",
    "PingFrame",
    "PongFrame",
    "ProtocolError",
    "PubFrame",
    "SubFrame",
    "UnsubFrame",
    "decode_frame",
    "encode_frame",
    "validate_subject",
    "BrokerCore",
    "BrokerError",
    "Delivery",
    "DuplicateSid",
    "NotConnected",
    "PayloadTooLarge",
    "UnknownPending",
    "UnknownSid",
    "DEFAULT_PORT",
    "MAX_PAYLOAD",
    "BrokerServer",
    "BrokerClient",
    "BrokerClientError",
]
