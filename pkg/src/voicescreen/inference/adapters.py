"""Port adapters: in-memory fakes for tests, files + broker for production."""

from __future__ import annotations

import json
import os
import threading
from collections import deque
from pathlib import Path
from typing import Callable, Optional, Union

from ..broker import BrokerClient, BrokerClientError
from .ports import BusUnavailable
from .records import RESPONSES_SUBJECT, InferenceRecord


class InMemoryResultStore:
    def __init__(self) -> None:
        self._records: dict[str, InferenceRecord] = {}
        self._lock = threading.Lock()

    def save(self, record: InferenceRecord) -> None:
        with self._lock:
            self._records[record.request_id] = record.copy()

    def get(self, request_id: str) -> Optional[InferenceRecord]:
        with self._lock:
            record = self._records.get(request_id)
            return None if record is None else record.copy()

    def list(self, status=None, model=None) -> list[InferenceRecord]:
        with self._lock:
            return [
                r.copy()
                for r in self._records.values()
                if (status is None or r.status == status)
                and (model is None or r.model_name == model)
            ]

    def transition(self, request_id: str, expect_status: str, **updates) -> bool:
        with self._lock:
            record = self._records.get(request_id)
            if record is None or record.status != expect_status:
                return False
            for key, value in updates.items():
                setattr(record, key, value)
            return True

    def publish_pending(self) -> list[InferenceRecord]:
        with self._lock:
            return [
                r.copy()
                for r in self._records.values()
                if r.publish_pending and r.status == "PENDING"
            ]


class FileResultStore:
    """One JSON document per record, replaced atomically on transition."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, request_id: str) -> Path:
        return self.root / f"{request_id}.json"

    def _write(self, record: InferenceRecord) -> None:
        path = self._path(record.request_id)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(record.to_doc(), sort_keys=True))
        os.replace(tmp, path)

    def _read(self, request_id: str) -> Optional[InferenceRecord]:
        path = self._path(request_id)
        if not path.is_file():
            return None
        return InferenceRecord.from_doc(json.loads(path.read_text()))

    def save(self, record: InferenceRecord) -> None:
        with self._lock:
            self._write(record)

    def get(self, request_id: str) -> Optional[InferenceRecord]:
        with self._lock:
            return self._read(request_id)

    def list(self, status=None, model=None) -> list[InferenceRecord]:
        with self._lock:
            out = []
            for path in self.root.glob("*.json"):
                record = InferenceRecord.from_doc(json.loads(path.read_text()))
                if status is not None and record.status != status:
                    continue
                if model is not None and record.model_name != model:
                    continue
                out.append(record)
            return out

    def transition(self, request_id: str, expect_status: str, **updates) -> bool:
        with self._lock:
            record = self._read(request_id)
            if record is None or record.status != expect_status:
                return False
            for key, value in updates.items():
                setattr(record, key, value)
            self._write(record)
            return True

    def publish_pending(self) -> list[InferenceRecord]:
        return [r for r in self.list(status="PENDING") if r.publish_pending]


class InMemoryBus:
    """Fake bus with an explicit delivery queue and an outage switch.

    publish() enqueues; pump() dispatches queued events to subscribers,
    mimicking the asynchrony of the real broker without threads.
    """

    def __init__(self) -> None:
        self.down = False
        self.published: list[tuple[str, bytes]] = []
        self._queue: deque[tuple[str, bytes]] = deque()
        self._subscribers: dict[str, list[Callable[[bytes], None]]] = {}

    def publish(self, subject: str, payload: bytes) -> None:
        if self.down:
            raise BusUnavailable("bus is down")
        self.published.append((subject, payload))
        self._queue.append((subject, payload))

    def subscribe(self, subject: str, handler: Callable[[bytes], None]) -> None:
        self._subscribers.setdefault(subject, []).append(handler)

    def subscribe_responses(self, handler: Callable[[bytes], None]) -> None:
        self.subscribe(RESPONSES_SUBJECT, handler)

    def pump(self, limit: int = 1000) -> int:
        """Deliver queued events; returns how many were dispatched."""
        dispatched = 0
        while self._queue and dispatched < limit:
            subject, payload = self._queue.popleft()
            for handler in self._subscribers.get(subject, []):
                handler(payload)
            dispatched += 1
        return dispatched


class BrokerBus:
    """MessageBus adapter over the broker client.

    Reconnects lazily: a failed publish raises BusUnavailable and the next
    call retries the connection, resubscribing the response handler so that
    durable queue-group replay fills any gap.
    """

    def __init__(
        self,
        host: str,
        port: int,
        client_name: str = "inference-api",
        queue_group: str = "inference-api",
    ):
        self.host = host
        self.port = port
        self.client_name = client_name
        self.queue_group = queue_group
        self._client: Optional[BrokerClient] = None
        self._handler: Optional[Callable[[bytes], None]] = None
        self._lock = threading.Lock()

    def _ensure_client(self) -> BrokerClient:
        with self._lock:
            if self._client is not None and self._client.connected:
                return self._client
            client = BrokerClient(self.host, self.port, client_name=self.client_name)
            try:
                client.connect()
                if self._handler is not None:
                    self._subscribe(client)
            except BrokerClientError as exc:
                raise BusUnavailable(str(exc)) from exc
            self._client = client
            return client

    def _subscribe(self, client: BrokerClient) -> None:
        handler = self._handler

        def on_msg(frame) -> None:
            assert handler is not None
            handler(frame.payload)
            client.ack(frame.msg_id)  # poison events are quarantined, never retried

        client.subscribe(
            RESPONSES_SUBJECT, "responses", on_msg, queue_group=self.queue_group
        )

    def publish(self, subject: str, payload: bytes) -> None:
        client = self._ensure_client()
        try:
            client.publish(subject, payload)
        except BrokerClientError as exc:
            raise BusUnavailable(str(exc)) from exc

    def subscribe_responses(self, handler: Callable[[bytes], None]) -> None:
        self._handler = handler
        try:
            client = self._ensure_client()
        except BusUnavailable:
            return  # next publish/republish attempt will resubscribe
        if self._client is client and not client.has_subscription("responses"):
            self._subscribe(client)

    def close(self) -> None:
        with self._lock:
            if self._client is not None:
                self._client.close()
                self._client = None
