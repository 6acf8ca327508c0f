"""Blocking broker client used by the services and the CLI harness.

A reader thread routes incoming frames: command responses (+OK/-ERR/PONG)
wake the oldest waiter in FIFO order, which matches the server's in-order
replies. MSG frames are handed to a separate dispatcher thread that invokes
the per-sid callbacks, so a callback may itself issue blocking commands
(publish a result, then ack) without starving the reader.
"""

from __future__ import annotations

import queue
import socket
import threading
from collections import deque
from typing import Callable, Optional

from . import wire
from .core import DEFAULT_PORT

MessageHandler = Callable[[wire.MsgFrame], None]

_STOP = object()


class BrokerClientError(Exception):
    """Connection failure, timeout, or -ERR from the broker."""


class _Waiter:
    __slots__ = ("event", "frame")

    def __init__(self) -> None:
        self.event = threading.Event()
        self.frame: Optional[wire.Frame] = None


class BrokerClient:
    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        client_name: str = "client",
        *,
        response_timeout: float = 10.0,
        on_disconnect: Optional[Callable[[], None]] = None,
    ):
        self.host = host
        self.port = port
        self.client_name = client_name
        self.response_timeout = response_timeout
        self.on_disconnect = on_disconnect
        self._sock: Optional[socket.socket] = None
        self._send_lock = threading.Lock()
        self._waiters: deque[_Waiter] = deque()
        self._waiters_lock = threading.Lock()
        self._handlers: dict[str, MessageHandler] = {}
        self._inbox: "queue.Queue" = queue.Queue()
        self._reader: Optional[threading.Thread] = None
        self._dispatcher: Optional[threading.Thread] = None
        self._closing = False
        self._connected = False

    @property
    def connected(self) -> bool:
        return self._connected

    def connect(self) -> "BrokerClient":
        if self._connected:
            return self
        self._closing = False
        try:
            sock = socket.create_connection((self.host, self.port), timeout=5.0)
        except OSError as exc:
            raise BrokerClientError(f"cannot reach broker at {self.host}:{self.port}: {exc}")
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self._connected = True
        self._reader = threading.Thread(
            target=self._read_loop, name="broker-client-reader", daemon=True
        )
        self._reader.start()
        self._dispatcher = threading.Thread(
            target=self._dispatch_loop, name="broker-client-dispatch", daemon=True
        )
        self._dispatcher.start()
        try:
            self._request(wire.ConnectFrame(client_name=self.client_name))
        except BrokerClientError:
            self.close()
            raise
        return self

    def close(self) -> None:
        self._closing = True
        self._connected = False
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        self._inbox.put(_STOP)
        current = threading.current_thread()
        for thread in (self._reader, self._dispatcher):
            if thread is not None and thread is not current:
                thread.join(timeout=2)

    # -- commands ------------------------------------------------------------

    def publish(self, subject: str, payload: bytes, reply_to: Optional[str] = None) -> None:
        """Publish and wait for the broker's durable +OK."""
        self._request(wire.PubFrame(subject=subject, payload=payload, reply_to=reply_to))

    def subscribe(
        self,
        subject: str,
        sid: str,
        callback: MessageHandler,
        queue_group: Optional[str] = None,
    ) -> None:
        self._handlers[sid] = callback
        try:
            self._request(wire.SubFrame(subject=subject, sid=sid, queue_group=queue_group))
        except BrokerClientError:
            self._handlers.pop(sid, None)
            raise

    def unsubscribe(self, sid: str) -> None:
        self._request(wire.UnsubFrame(sid=sid))
        self._handlers.pop(sid, None)

    def has_subscription(self, sid: str) -> bool:
        return sid in self._handlers

    def ack(self, msg_id: int) -> bool:
        """Acknowledge a delivery. False means the broker no longer had it
        pending (duplicate ack after redelivery); state is unchanged."""
        try:
            self._request(wire.AckFrame(msg_id=msg_id))
            return True
        except BrokerClientError as exc:
            if "unknown-pending" in str(exc):
                return False
            raise

    def ping(self) -> bool:
        try:
            response = self._request(wire.PingFrame(), expect_pong=True)
        except BrokerClientError:
            return False
        return isinstance(response, wire.PongFrame)

    # -- plumbing ----------------------------------------------------------------

    def _request(self, frame: wire.Frame, expect_pong: bool = False) -> wire.Frame:
        if not self._connected or self._sock is None:
            raise BrokerClientError("not connected")
        waiter = _Waiter()
        try:
            # append and send under one lock: waiter order must equal wire
            # order or responses would pair with the wrong callers
            with self._send_lock:
                with self._waiters_lock:
                    self._waiters.append(waiter)
                self._sock.sendall(wire.encode_frame(frame))
        except OSError as exc:
            with self._waiters_lock:
                if waiter in self._waiters:
                    self._waiters.remove(waiter)
            self._lost_connection()
            raise BrokerClientError(f"send failed: {exc}")
        if not waiter.event.wait(self.response_timeout):
            # leave the waiter queued: a late response must still consume
            # it, or every later response would wake the wrong caller
            raise BrokerClientError("timed out waiting for broker response")
        response = waiter.frame
        if response is None:
            raise BrokerClientError("connection lost")
        if isinstance(response, wire.ErrFrame):
            raise BrokerClientError(response.reason)
        if expect_pong and not isinstance(response, wire.PongFrame):
            raise BrokerClientError(f"expected PONG, got {type(response).__name__}")
        return response

    def _read_loop(self) -> None:
        decoder = wire.FrameDecoder()
        sock = self._sock
        assert sock is not None
        while True:
            try:
                data = sock.recv(65536)
            except OSError:
                break
            if not data:
                break
            try:
                frames = decoder.feed(data)
            except wire.ProtocolError:
                break
            for frame in frames:
                if isinstance(frame, wire.MsgFrame):
                    self._inbox.put(frame)
                else:
                    with self._waiters_lock:
                        waiter = self._waiters.popleft() if self._waiters else None
                    if waiter is not None:
                        waiter.frame = frame
                        waiter.event.set()
        self._lost_connection()

    def _dispatch_loop(self) -> None:
        while True:
            frame = self._inbox.get()
            if frame is _STOP:
                return
            handler = self._handlers.get(frame.sid)
            if handler is not None:
                try:
                    handler(frame)
                except Exception:  # noqa: BLE001 - keep dispatching
                    pass

    def _lost_connection(self) -> None:
        was_connected = self._connected
        self._connected = False
        with self._waiters_lock:
            pending = list(self._waiters)
            self._waiters.clear()
        for waiter in pending:
            waiter.frame = None
            waiter.event.set()
        if was_connected and not self._closing and self.on_disconnect is not None:
            self.on_disconnect()
