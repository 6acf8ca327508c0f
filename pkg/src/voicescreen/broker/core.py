"""Broker state machine: subjects, queue groups, at-least-once delivery.

All mutations run under one internal lock, so commands take effect in a
single total order witnessed by msg_id. The core performs no socket I/O:
every mutation returns the list of Delivery records the transport layer
must write out, and every time-dependent method takes an explicit `now`,
which keeps redelivery schedules testable with virtual clocks.

Durability: one append-only log per subject, records framed as 4-byte
big-endian length + JSON payload + 4-byte big-endian CRC32. A torn tail is
discarded on recovery. Publishes hit the log before they are acknowledged;
queue-group consumption (acks and dead-letter parking) is logged too, so a
restarted broker neither loses nor re-serves consumed messages. Delivery
attempts themselves are connection-scoped and deliberately not persisted.
"""

from __future__ import annotations

import base64
import json
import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .wire import validate_subject

DEFAULT_PORT = 4333
MAX_PAYLOAD = 16 * 1024 * 1024
DEFAULT_ACK_TIMEOUT = 30.0
DEFAULT_MAX_DELIVERIES = 5

_LEN = struct.Struct(">I")


class BrokerError(Exception):
    pass


class NotConnected(BrokerError):
    """Command issued before CONNECT."""


class PayloadTooLarge(BrokerError):
    pass


class DuplicateSid(BrokerError):
    pass


class UnknownSid(BrokerError):
    pass


class UnknownPending(BrokerError):
    """Ack for a message that is not pending for this consumer (soft error)."""


@dataclass(frozen=True)
class StoredMessage:
    msg_id: int
    subject: str
    payload: bytes
    reply_to: Optional[str]


@dataclass(frozen=True)
class Delivery:
    """One MSG the transport must write to a connection."""

    conn_id: int
    sid: str
    subject: str
    msg_id: int
    delivery_count: int
    payload: bytes
    reply_to: Optional[str]


@dataclass
class _Inflight:
    conn_id: int
    sid: str
    delivered_at: float


class _Group:
    """Durable consumer: a queue group on one subject."""

    def __init__(self) -> None:
        self.consumed: set[int] = set()
        self.counts: dict[int, int] = {}
        self.inflight: dict[int, _Inflight] = {}
        self.members: list[tuple[int, str]] = []
        self.rr = 0


class _PlainSub:
    """Ephemeral consumer: one plain subscription on one connection."""

    def __init__(self, subject: str) -> None:
        self.subject = subject
        self.consumed: set[int] = set()
        self.counts: dict[int, int] = {}
        self.inflight: dict[int, float] = {}


class SubjectLog:
    """Append-only record log with CRC-framed entries."""

    def __init__(self, path: Path):
        self.path = path
        records, valid = self.read_records(path)
        self.records = records
        if path.exists() and valid < path.stat().st_size:
            with open(path, "r+b") as fh:
                fh.truncate(valid)
        self._fh = open(path, "ab")

    @staticmethod
    def read_records(path: Path) -> tuple[list[dict], int]:
        """All intact records plus the byte offset of the last good one."""
        if not path.exists():
            return [], 0
        data = path.read_bytes()
        records = []
        offset = 0
        while True:
            if offset + 4 > len(data):
                break
            (length,) = _LEN.unpack_from(data, offset)
            end = offset + 4 + length + 4
            if end > len(data):
                break
            body = data[offset + 4 : offset + 4 + length]
            (crc,) = _LEN.unpack_from(data, offset + 4 + length)
            if zlib.crc32(body) != crc:
                break
            try:
                records.append(json.loads(body))
            except ValueError:
                break
            offset = end
        return records, offset

    def append(self, record: dict) -> None:
        body = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        self._fh.write(_LEN.pack(len(body)) + body + _LEN.pack(zlib.crc32(body)))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class BrokerCore:
    """Pub/sub semantics behind the wire protocol.

    data_dir=None runs fully in memory (no durability), which the
    randomized failure-schedule tests use for speed.
    """

    def __init__(
        self,
        data_dir: Union[str, Path, None],
        *,
        ack_timeout: float = DEFAULT_ACK_TIMEOUT,
        max_deliveries: int = DEFAULT_MAX_DELIVERIES,
        max_payload: int = MAX_PAYLOAD,
    ):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.ack_timeout = ack_timeout
        self.max_deliveries = max_deliveries
        self.max_payload = max_payload

        self._lock = threading.RLock()
        self.messages: dict[str, dict[int, StoredMessage]] = {}
        self.groups: dict[tuple[str, str], _Group] = {}
        self.plain: dict[tuple[int, str], _PlainSub] = {}
        self.connections: dict[int, dict[str, tuple]] = {}
        self.client_names: dict[int, str] = {}
        self._logs: dict[str, SubjectLog] = {}
        self.next_msg_id = 1
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._recover()

    # -- persistence -------------------------------------------------------

    def _recover(self) -> None:
        assert self.data_dir is not None
        for path in sorted(self.data_dir.glob("*.log")):
            subject = path.name[: -len(".log")]
            log = SubjectLog(path)
            self._logs[subject] = log
            store = self.messages.setdefault(subject, {})
            for record in log.records:
                if record["t"] == "pub":
                    msg = StoredMessage(
                        msg_id=record["id"],
                        subject=subject,
                        payload=base64.b64decode(record["p"]),
                        reply_to=record["rt"],
                    )
                    store[msg.msg_id] = msg
                    self.next_msg_id = max(self.next_msg_id, msg.msg_id + 1)
                elif record["t"] == "ack":
                    group = self.groups.setdefault((subject, record["g"]), _Group())
                    group.consumed.add(record["id"])

    def _log_for(self, subject: str) -> Optional[SubjectLog]:
        if self.data_dir is None:
            return None
        log = self._logs.get(subject)
        if log is None:
            log = SubjectLog(self.data_dir / f"{subject}.log")
            self._logs[subject] = log
        return log

    def _log_pub(self, msg: StoredMessage) -> None:
        log = self._log_for(msg.subject)
        if log is not None:
            log.append(
                {
                    "t": "pub",
                    "id": msg.msg_id,
                    "rt": msg.reply_to,
                    "p": base64.b64encode(msg.payload).decode("ascii"),
                }
            )

    def _log_ack(self, subject: str, group_name: str, msg_id: int) -> None:
        log = self._log_for(subject)
        if log is not None:
            log.append({"t": "ack", "id": msg_id, "g": group_name})

    def close(self) -> None:
        with self._lock:
            for log in self._logs.values():
                log.close()
            self._logs.clear()

    # -- connection lifecycle ------------------------------------------------

    def connect(self, conn_id: int, client_name: str) -> None:
        with self._lock:
            self.connections.setdefault(conn_id, {})
            self.client_names[conn_id] = client_name

    def is_connected(self, conn_id: int) -> bool:
        with self._lock:
            return conn_id in self.connections

    def disconnect(self, conn_id: int, now: float) -> list[Delivery]:
        """Drop a connection, releasing its unacked messages for redelivery."""
        with self._lock:
            if conn_id not in self.connections:
                return []
            deliveries = []
            for sid in list(self.connections[conn_id]):
                deliveries.extend(self._drop_subscription(conn_id, sid, now))
            del self.connections[conn_id]
            self.client_names.pop(conn_id, None)
            return deliveries

    # -- publish -------------------------------------------------------------

    def publish(
        self,
        conn_id: Optional[int],
        subject: str,
        payload: bytes,
        reply_to: Optional[str] = None,
        *,
        now: float = 0.0,
    ) -> tuple[int, list[Delivery]]:
        """Durably append a message, then fan it out.

        Returns the assigned msg_id and the deliveries to perform. The log
        append happens before this method returns, so the transport's +OK
        never precedes durability. conn_id None marks an internal publish
        (dead-letter parking).
        """
        validate_subject(subject)
        if reply_to is not None:
            validate_subject(reply_to)
        with self._lock:
            if conn_id is not None and conn_id not in self.connections:
                raise NotConnected("CONNECT required before PUB")
            if len(payload) > self.max_payload:
                raise PayloadTooLarge(
                    f"payload of {len(payload)} bytes exceeds {self.max_payload}"
                )
            msg = StoredMessage(
                msg_id=self.next_msg_id,
                subject=subject,
                payload=bytes(payload),
                reply_to=reply_to,
            )
            self.next_msg_id += 1
            self._log_pub(msg)
            self.messages.setdefault(subject, {})[msg.msg_id] = msg

            deliveries = []
            for (cid, sid), sub in self.plain.items():
                if sub.subject == subject:
                    deliveries.append(self._deliver_plain(cid, sid, sub, msg, now))
            for (subj, gname), group in self.groups.items():
                if subj == subject and group.members:
                    deliveries.append(self._deliver_group(group, msg, now))
            return msg.msg_id, deliveries

    def _deliver_plain(
        self, conn_id: int, sid: str, sub: _PlainSub, msg: StoredMessage, now: float
    ) -> Delivery:
        count = sub.counts.get(msg.msg_id, 0) + 1
        sub.counts[msg.msg_id] = count
        sub.inflight[msg.msg_id] = now
        return Delivery(
            conn_id=conn_id, sid=sid, subject=msg.subject, msg_id=msg.msg_id,
            delivery_count=count, payload=msg.payload, reply_to=msg.reply_to,
        )

    def _deliver_group(
        self, group: _Group, msg: StoredMessage, now: float,
        member: Optional[tuple[int, str]] = None,
    ) -> Delivery:
        if member is None:
            member = group.members[group.rr % len(group.members)]
            group.rr += 1
        conn_id, sid = member
        count = group.counts.get(msg.msg_id, 0) + 1
        group.counts[msg.msg_id] = count
        group.inflight[msg.msg_id] = _Inflight(conn_id, sid, now)
        return Delivery(
            conn_id=conn_id, sid=sid, subject=msg.subject, msg_id=msg.msg_id,
            delivery_count=count, payload=msg.payload, reply_to=msg.reply_to,
        )

    # -- subscriptions ---------------------------------------------------------

    def subscribe(
        self,
        conn_id: int,
        sid: str,
        subject: str,
        queue_group: Optional[str] = None,
        *,
        now: float = 0.0,
    ) -> list[Delivery]:
        """Register a subscription and replay what the consumer is owed.

        A queue-group member receives every retained message its group has
        neither consumed nor currently in flight; a plain subscriber starts
        from the beginning of the subject.
        """
        validate_subject(subject)
        with self._lock:
            if conn_id not in self.connections:
                raise NotConnected("CONNECT required before SUB")
            if sid in self.connections[conn_id]:
                raise DuplicateSid(f"sid {sid!r} already in use")

            deliveries: list[Delivery] = []
            retained = self.messages.get(subject, {})
            if queue_group is None:
                sub = _PlainSub(subject)
                self.plain[(conn_id, sid)] = sub
                self.connections[conn_id][sid] = ("plain", subject, None)
                for msg_id in sorted(retained):
                    deliveries.append(
                        self._deliver_plain(conn_id, sid, sub, retained[msg_id], now)
                    )
            else:
                group = self.groups.setdefault((subject, queue_group), _Group())
                member = (conn_id, sid)
                group.members.append(member)
                self.connections[conn_id][sid] = ("group", subject, queue_group)
                for msg_id in sorted(retained):
                    if msg_id in group.consumed or msg_id in group.inflight:
                        continue
                    deliveries.extend(
                        self._redeliver_or_park(
                            subject, queue_group, group, retained[msg_id], now,
                            member=member,
                        )
                    )
            return deliveries

    def unsubscribe(self, conn_id: int, sid: str, now: float = 0.0) -> list[Delivery]:
        with self._lock:
            if conn_id not in self.connections:
                raise NotConnected("CONNECT required before UNSUB")
            if sid not in self.connections[conn_id]:
                raise UnknownSid(f"no subscription with sid {sid!r}")
            return self._drop_subscription(conn_id, sid, now)

    def _drop_subscription(self, conn_id: int, sid: str, now: float) -> list[Delivery]:
        kind, subject, gname = self.connections[conn_id].pop(sid)
        if kind == "plain":
            del self.plain[(conn_id, sid)]
            return []
        group = self.groups[(subject, gname)]
        group.members.remove((conn_id, sid))
        released = sorted(
            mid for mid, inf in group.inflight.items()
            if (inf.conn_id, inf.sid) == (conn_id, sid)
        )
        deliveries = []
        for mid in released:
            del group.inflight[mid]
            if group.members:
                deliveries.extend(
                    self._redeliver_or_park(
                        subject, gname, group, self.messages[subject][mid], now
                    )
                )
            # with no members left the message returns to the undelivered
            # pool and is replayed to the next subscriber
        return deliveries

    # -- consumption -------------------------------------------------------------

    def ack(self, conn_id: int, msg_id: int) -> None:
        """Mark a delivered message consumed for this connection's consumer.

        Raises UnknownPending when nothing on this connection has the
        message in flight (including double-acks); state is unchanged.
        """
        with self._lock:
            if conn_id not in self.connections:
                raise NotConnected("CONNECT required before ACK")
            matched = False
            for sid, (kind, subject, gname) in self.connections[conn_id].items():
                if kind == "plain":
                    sub = self.plain[(conn_id, sid)]
                    if msg_id in sub.inflight:
                        del sub.inflight[msg_id]
                        sub.consumed.add(msg_id)
                        matched = True
                else:
                    group = self.groups[(subject, gname)]
                    inf = group.inflight.get(msg_id)
                    if inf is not None and (inf.conn_id, inf.sid) == (conn_id, sid):
                        del group.inflight[msg_id]
                        group.consumed.add(msg_id)
                        group.counts.pop(msg_id, None)
                        self._log_ack(subject, gname, msg_id)
                        matched = True
            if not matched:
                raise UnknownPending(f"message {msg_id} is not pending for this consumer")

    def _park(self, subject: str, msg: StoredMessage, now: float) -> list[Delivery]:
        """Copy a capped-out message onto the dead-letter subject.

        Messages already on a dlq subject are not re-parked, which keeps
        chronically failing consumers from growing dlq.dlq... chains.
        """
        if subject.startswith("dlq."):
            return []
        _, deliveries = self.publish(
            None, f"dlq.{subject}", msg.payload, msg.reply_to, now=now
        )
        return deliveries

    def _redeliver_or_park(
        self,
        subject: str,
        gname: str,
        group: _Group,
        msg: StoredMessage,
        now: float,
        member: Optional[tuple[int, str]] = None,
    ) -> list[Delivery]:
        """Deliver once more, or park on the dead-letter subject at the cap."""
        if group.counts.get(msg.msg_id, 0) >= self.max_deliveries:
            group.consumed.add(msg.msg_id)
            group.counts.pop(msg.msg_id, None)
            self._log_ack(subject, gname, msg.msg_id)
            return self._park(subject, msg, now)
        return [self._deliver_group(group, msg, now, member=member)]

    def sweep(self, now: float) -> tuple[int, list[Delivery]]:
        """Redeliver (or park) every message unacked past ack_timeout.

        Returns how many messages were redelivered or parked, plus the
        deliveries to perform.
        """
        with self._lock:
            acted = 0
            deliveries: list[Delivery] = []
            for (subject, gname), group in list(self.groups.items()):
                expired = sorted(
                    mid for mid, inf in group.inflight.items()
                    if now - inf.delivered_at >= self.ack_timeout
                )
                for mid in expired:
                    del group.inflight[mid]
                    if not group.members:
                        continue
                    deliveries.extend(
                        self._redeliver_or_park(
                            subject, gname, group, self.messages[subject][mid], now
                        )
                    )
                    acted += 1
            for (conn_id, sid), sub in list(self.plain.items()):
                expired = sorted(
                    mid for mid, at in sub.inflight.items()
                    if now - at >= self.ack_timeout
                )
                for mid in expired:
                    del sub.inflight[mid]
                    msg = self.messages[sub.subject][mid]
                    if sub.counts.get(mid, 0) >= self.max_deliveries:
                        # a plain subscriber's failure is private: stop
                        # redelivering to it, but do not publish to the dlq
                        sub.consumed.add(mid)
                        sub.counts.pop(mid, None)
                    else:
                        deliveries.append(self._deliver_plain(conn_id, sid, sub, msg, now))
                    acted += 1
            return acted, deliveries

    # -- introspection ---------------------------------------------------------

    def snapshot(self) -> dict:
        """Durable state, field by field: retained messages and per-group
        consumption. Used to compare a broker against its restarted self."""
        with self._lock:
            return {
                "next_msg_id": self.next_msg_id,
                "messages": {
                    subject: [
                        (
                            m.msg_id,
                            base64.b64encode(m.payload).decode("ascii"),
                            m.reply_to,
                        )
                        for _, m in sorted(store.items())
                    ]
                    for subject, store in sorted(self.messages.items())
                    if store
                },
                "consumed": {
                    f"{subject}/{gname}": sorted(group.consumed)
                    for (subject, gname), group in sorted(self.groups.items())
                    if group.consumed
                },
            }

    def pending_count(self) -> int:
        with self._lock:
            total = sum(len(g.inflight) for g in self.groups.values())
            total += sum(len(s.inflight) for s in self.plain.values())
            return total
