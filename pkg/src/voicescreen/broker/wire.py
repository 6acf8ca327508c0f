"""Text wire protocol: UTF-8 lines terminated \\r\\n, opaque payloads.

Client to server::

    CONNECT <client-name>
    PUB <subject> [reply-to] <nbytes>\\r\\n<payload>\\r\\n
    SUB <subject> [queue-group] <sid>
    UNSUB <sid>
    ACK <msg-id>
    PING

Server to client::

    +OK
    -ERR <reason>
    MSG <subject> <sid> <msg-id> <delivery-count> [reply-to] <nbytes>\\r\\n<payload>\\r\\n
    PONG

Payload bytes are length-delimited, never line-parsed. Subjects are
dot-separated tokens of [a-z0-9_-]+, at most 8 tokens; dead-letter
subjects carry a ninth leading "dlq" token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

_TOKEN = re.compile(r"[a-z0-9_-]+\Z")
_NAME = re.compile(r"[A-Za-z0-9_.-]+\Z")
MAX_SUBJECT_TOKENS = 8

# hard parser bound, above any broker payload cap: a declared length past
# this is a protocol error, not a frame to buffer for
MAX_WIRE_PAYLOAD = 64 * 1024 * 1024


class ProtocolError(Exception):
    """Malformed frame: bad verb, bad argument counts, bad payload framing."""


def validate_subject(subject: str) -> str:
    tokens = subject.split(".")
    limit = MAX_SUBJECT_TOKENS + 1 if tokens[0] == "dlq" else MAX_SUBJECT_TOKENS
    if not 1 <= len(tokens) <= limit:
        raise ProtocolError(f"subject has {len(tokens)} tokens, max {limit}")
    for token in tokens:
        if not _TOKEN.match(token):
            raise ProtocolError(f"bad subject token {token!r}")
    return subject


def _validate_name(value: str, what: str) -> str:
    if not _NAME.match(value):
        raise ProtocolError(f"bad {what} {value!r}")
    return value


@dataclass(frozen=True)
class ConnectFrame:
    client_name: str


@dataclass(frozen=True)
class PubFrame:
    subject: str
    payload: bytes
    reply_to: Optional[str] = None


@dataclass(frozen=True)
class SubFrame:
    subject: str
    sid: str
    queue_group: Optional[str] = None


@dataclass(frozen=True)
class UnsubFrame:
    sid: str


@dataclass(frozen=True)
class AckFrame:
    msg_id: int


@dataclass(frozen=True)
class PingFrame:
    pass


@dataclass(frozen=True)
class PongFrame:
    pass


@dataclass(frozen=True)
class OkFrame:
    pass


@dataclass(frozen=True)
class ErrFrame:
    reason: str


@dataclass(frozen=True)
class MsgFrame:
    subject: str
    sid: str
    msg_id: int
    delivery_count: int
    payload: bytes
    reply_to: Optional[str] = None


Frame = Union[
    ConnectFrame, PubFrame, SubFrame, UnsubFrame, AckFrame,
    PingFrame, PongFrame, OkFrame, ErrFrame, MsgFrame,
]

_CRLF = b"\r\n"


def encode_frame(frame: Frame) -> bytes:
    if isinstance(frame, PingFrame):
        return b"PING\r\n"
    if isinstance(frame, PongFrame):
        return b"PONG\r\n"
    if isinstance(frame, OkFrame):
        return b"+OK\r\n"
    if isinstance(frame, ErrFrame):
        return f"-ERR {frame.reason}".encode("utf-8") + _CRLF
    if isinstance(frame, ConnectFrame):
        return f"CONNECT {_validate_name(frame.client_name, 'client name')}".encode() + _CRLF
    if isinstance(frame, SubFrame):
        parts = ["SUB", validate_subject(frame.subject)]
        if frame.queue_group is not None:
            parts.append(_validate_name(frame.queue_group, "queue group"))
        parts.append(_validate_name(frame.sid, "sid"))
        return " ".join(parts).encode() + _CRLF
    if isinstance(frame, UnsubFrame):
        return f"UNSUB {_validate_name(frame.sid, 'sid')}".encode() + _CRLF
    if isinstance(frame, AckFrame):
        return f"ACK {frame.msg_id}".encode() + _CRLF
    if isinstance(frame, PubFrame):
        parts = ["PUB", validate_subject(frame.subject)]
        if frame.reply_to is not None:
            parts.append(validate_subject(frame.reply_to))
        parts.append(str(len(frame.payload)))
        return " ".join(parts).encode() + _CRLF + frame.payload + _CRLF
    if isinstance(frame, MsgFrame):
        parts = [
            "MSG", validate_subject(frame.subject),
            _validate_name(frame.sid, "sid"),
            str(frame.msg_id), str(frame.delivery_count),
        ]
        if frame.reply_to is not None:
            parts.append(validate_subject(frame.reply_to))
        parts.append(str(len(frame.payload)))
        return " ".join(parts).encode() + _CRLF + frame.payload + _CRLF
    raise ProtocolError(f"cannot encode {type(frame).__name__}")


def _int_arg(text: str, what: str) -> int:
    if not text.isdigit():
        raise ProtocolError(f"bad {what} {text!r}")
    return int(text)


def _length_arg(text: str) -> int:
    length = _int_arg(text, "payload length")
    if length > MAX_WIRE_PAYLOAD:
        raise ProtocolError(f"declared payload of {length} bytes exceeds wire limit")
    return length


def parse_frame(buffer: bytes) -> tuple[Optional[Frame], int]:
    """Parse one frame from the head of buffer.

    Returns (frame, bytes_consumed), or (None, 0) if the buffer does not
    yet hold a complete frame. Raises ProtocolError on malformed input.
    """
    end = buffer.find(_CRLF)
    if end < 0:
        if len(buffer) > 1 << 20:
            raise ProtocolError("control line too long")
        return None, 0
    try:
        line = buffer[:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"control line is not UTF-8: {exc}") from exc
    consumed = end + 2

    if line == "PING":
        return PingFrame(), consumed
    if line == "PONG":
        return PongFrame(), consumed
    if line == "+OK":
        return OkFrame(), consumed
    if line.startswith("-ERR "):
        return ErrFrame(reason=line[5:]), consumed
    if line == "-ERR":
        return ErrFrame(reason=""), consumed

    args = line.split(" ")
    if "" in args:
        raise ProtocolError(f"malformed control line {line!r}")
    verb, rest = args[0], args[1:]

    if verb == "CONNECT":
        if len(rest) != 1:
            raise ProtocolError("CONNECT takes exactly one argument")
        return ConnectFrame(client_name=_validate_name(rest[0], "client name")), consumed
    if verb == "SUB":
        if len(rest) == 2:
            subject, group, sid = rest[0], None, rest[1]
        elif len(rest) == 3:
            subject, group, sid = rest
            _validate_name(group, "queue group")
        else:
            raise ProtocolError("SUB takes two or three arguments")
        return (
            SubFrame(subject=validate_subject(subject), sid=_validate_name(sid, "sid"),
                     queue_group=group),
            consumed,
        )
    if verb == "UNSUB":
        if len(rest) != 1:
            raise ProtocolError("UNSUB takes exactly one argument")
        return UnsubFrame(sid=_validate_name(rest[0], "sid")), consumed
    if verb == "ACK":
        if len(rest) != 1:
            raise ProtocolError("ACK takes exactly one argument")
        return AckFrame(msg_id=_int_arg(rest[0], "msg-id")), consumed

    if verb == "PUB":
        if len(rest) == 2:
            subject, reply_to, nbytes = rest[0], None, rest[1]
        elif len(rest) == 3:
            subject, reply_to, nbytes = rest
            validate_subject(reply_to)
        else:
            raise ProtocolError("PUB takes two or three arguments")
        validate_subject(subject)
        length = _length_arg(nbytes)
        total = consumed + length + 2
        if len(buffer) < total:
            return None, 0
        payload = bytes(buffer[consumed : consumed + length])
        if buffer[consumed + length : total] != _CRLF:
            raise ProtocolError("payload length mismatch")
        return PubFrame(subject=subject, payload=payload, reply_to=reply_to), total

    if verb == "MSG":
        if len(rest) == 5:
            subject, sid, msg_id, count, nbytes = rest
            reply_to = None
        elif len(rest) == 6:
            subject, sid, msg_id, count, reply_to, nbytes = rest
            validate_subject(reply_to)
        else:
            raise ProtocolError("MSG takes five or six arguments")
        validate_subject(subject)
        _validate_name(sid, "sid")
        length = _length_arg(nbytes)
        total = consumed + length + 2
        if len(buffer) < total:
            return None, 0
        payload = bytes(buffer[consumed : consumed + length])
        if buffer[consumed + length : total] != _CRLF:
            raise ProtocolError("payload length mismatch")
        return (
            MsgFrame(
                subject=subject, sid=sid, msg_id=_int_arg(msg_id, "msg-id"),
                delivery_count=_int_arg(count, "delivery-count"),
                payload=payload, reply_to=reply_to,
            ),
            total,
        )

    raise ProtocolError(f"unknown verb {verb!r}")


def decode_frame(data: bytes) -> Frame:
    """Decode exactly one frame; the buffer must hold it and nothing else."""
    frame, consumed = parse_frame(data)
    if frame is None:
        raise ProtocolError("incomplete frame")
    if consumed != len(data):
        raise ProtocolError(f"{len(data) - consumed} trailing bytes after frame")
    return frame


class FrameDecoder:
    """Incremental decoder for a byte stream of frames."""

    def __init__(self) -> None:
        self._buffer = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        self._buffer.extend(data)
        frames = []
        while True:
            frame, consumed = parse_frame(bytes(self._buffer))
            if frame is None:
                return frames
            del self._buffer[:consumed]
            frames.append(frame)
