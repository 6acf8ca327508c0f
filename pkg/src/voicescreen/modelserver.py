"""Model server: consumes request events, applies the classifier, publishes
response events.

One model per process. The model version is resolved from the registry
once at startup and pinned for the server's lifetime, so every response it
produces is mutually comparable. Broker loss is never fatal: the server
reconnects with exponential backoff and resubscribes, and the durable
queue group replays whatever arrived in the gap.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import audio
from . import model as model_mod
from .broker import BrokerClient, BrokerClientError, wire
from .inference.records import (
    EventDecodeError,
    RequestEvent,
    ResponseEvent,
    RESPONSES_SUBJECT,
    decode_request_event,
    encode_response_event,
    requests_subject,
)
from .pipeline import features_from_wav
from .registry import LATEST, Registry, UnknownModel, UnknownVersion

log = logging.getLogger(__name__)

_STOP = object()


@dataclass
class ServerConfig:
    model_name: str
    registry_root: Union[str, Path]
    broker_host: str = "127.0.0.1"
    broker_port: int = 4333
    model_version: Union[int, str] = LATEST
    queue_group: str = ""
    workers: int = 2
    reconnect_initial: float = 0.5
    reconnect_factor: float = 2.0
    reconnect_cap: float = 30.0

    def __post_init__(self) -> None:
        if not self.queue_group:
            self.queue_group = f"models.{self.model_name}"
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if not (0 < self.reconnect_initial and self.reconnect_factor > 1):
            raise ValueError("backoff must be strictly increasing")


def handle_request(
    event: RequestEvent, model: model_mod.LogisticModel
) -> ResponseEvent:
    """Map one request event to exactly one response event.

    Bad audio is data, not a crash: decoding or prediction failures come
    back as ERROR responses carrying the failure's name, so the clinician
    sees why a clip was rejected and the pipeline keeps flowing.
    """
    try:
        features = features_from_wav(event.wav_bytes, model.feature_config)
        prediction = model_mod.predict(model, features)
    except (audio.AudioError, model_mod.ModelError) as exc:
        return ResponseEvent(
            request_id=event.request_id,
            outcome="ERROR",
            error_reason=type(exc).__name__,
        )
    return ResponseEvent(
        request_id=event.request_id,
        outcome="OK",
        probability=prediction.probability,
        label=prediction.label,
        model_version_id=prediction.model_version_id,
    )


class ModelServer:
    def __init__(self, config: ServerConfig):
        self.config = config
        self.model: Optional[model_mod.LogisticModel] = None
        self.version_id = ""
        self._client: Optional[BrokerClient] = None
        self._work: "queue.Queue" = queue.Queue()
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._reconnect_lock = threading.Lock()

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> "ModelServer":
        """Resolve + pin the model, then subscribe with retry. UnknownModel
        and UnknownVersion are fatal; broker unavailability is not."""
        registry = Registry(self.config.registry_root)
        version, artifact = registry.resolve_model(
            self.config.model_name, self.config.model_version
        )
        self.version_id = f"{version.name}:{version.version}"
        self.model = model_mod.deserialize(artifact).with_version(self.version_id)
        log.info(
            "serving model %s (artifact %s)", self.version_id, version.artifact_hash[:12]
        )

        for i in range(self.config.workers):
            thread = threading.Thread(
                target=self._worker_loop, name=f"model-worker-{i}", daemon=True
            )
            thread.start()
            self._threads.append(thread)

        self._connect_with_backoff(block=True)
        return self

    def stop(self) -> None:
        self._stop.set()
        for _ in self._threads:
            self._work.put(_STOP)
        if self._client is not None:
            self._client.close()
        for thread in self._threads:
            thread.join(timeout=5)

    def run_forever(self) -> None:
        try:
            while not self._stop.wait(1.0):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    @property
    def connected(self) -> bool:
        return self._client is not None and self._client.connected

    # -- broker plumbing ---------------------------------------------------------

    def _connect_once(self) -> None:
        client = BrokerClient(
            self.config.broker_host,
            self.config.broker_port,
            client_name=f"model-server-{self.config.model_name}",
            on_disconnect=self._on_disconnect,
        )
        client.connect()
        client.subscribe(
            requests_subject(self.config.model_name),
            "requests",
            self._on_message,
            queue_group=self.config.queue_group,
        )
        self._client = client

    def _connect_with_backoff(self, block: bool) -> None:
        def attempt_loop() -> None:
            delay = self.config.reconnect_initial
            while not self._stop.is_set():
                try:
                    self._connect_once()
                    log.info("subscribed to %s", requests_subject(self.config.model_name))
                    return
                except (BrokerClientError, OSError) as exc:
                    log.warning("broker unavailable (%s); retrying in %.1fs", exc, delay)
                    if self._stop.wait(delay):
                        return
                    delay = min(delay * self.config.reconnect_factor,
                                self.config.reconnect_cap)

        if block:
            attempt_loop()
        else:
            threading.Thread(
                target=attempt_loop, name="model-server-reconnect", daemon=True
            ).start()

    def _on_disconnect(self) -> None:
        if self._stop.is_set():
            return
        with self._reconnect_lock:
            log.warning("broker connection lost; reconnecting")
            self._connect_with_backoff(block=False)

    def _on_message(self, frame: wire.MsgFrame) -> None:
        self._work.put(frame)

    # -- request processing ---------------------------------------------------------

    def _worker_loop(self) -> None:
        while True:
            item = self._work.get()
            if item is _STOP:
                return
            self._process(item)

    def _process(self, frame: wire.MsgFrame) -> None:
        started = time.monotonic()
        try:
            event = decode_request_event(frame.payload)
        except EventDecodeError as exc:
            # unparseable payload: never ack, let the broker's redelivery
            # budget park it on the dead-letter subject
            log.error("poison request event (msg %d): %s", frame.msg_id, exc)
            return

        assert self.model is not None
        response = handle_request(event, self.model)
        client = self._client
        try:
            if client is None:
                raise BrokerClientError("not connected")
            # response must be durable before the request is acked: a crash
            # in between redelivers the request, and the inference service
            # absorbs the duplicate response idempotently
            client.publish(RESPONSES_SUBJECT, encode_response_event(response))
            client.ack(frame.msg_id)
        except BrokerClientError as exc:
            log.warning(
                "could not publish response for %s (%s); broker will redeliver",
                event.request_id, exc,
            )
            return
        latency_ms = (time.monotonic() - started) * 1000.0
        log.info(
            "%s",
            json.dumps(
                {
                    "request_id": event.request_id,
                    "outcome": response.outcome,
                    "latency_ms": round(latency_ms, 3),
                }
            ),
        )
