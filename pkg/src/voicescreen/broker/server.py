"""TCP transport for the broker core.

Each connection gets a reader thread (parses frames, applies them to the
core) and a writer thread draining an outbound queue. Frames produced by a
single core mutation are enqueued while the core lock is still held, so
every connection observes MSGs in the core's total order. A sweeper thread
drives redelivery.
"""

from __future__ import annotations

import itertools
import logging
import queue
import socket
import threading
import time
from pathlib import Path
from typing import Optional, Union

from . import wire
from .core import (
    DEFAULT_ACK_TIMEOUT,
    DEFAULT_MAX_DELIVERIES,
    DEFAULT_PORT,
    MAX_PAYLOAD,
    BrokerCore,
    Delivery,
    DuplicateSid,
    NotConnected,
    PayloadTooLarge,
    UnknownPending,
    UnknownSid,
)

log = logging.getLogger(__name__)

_CLOSE = object()


class _Connection:
    def __init__(self, conn_id: int, sock: socket.socket):
        self.conn_id = conn_id
        self.sock = sock
        self.outbound: queue.Queue = queue.Queue()
        self.connected = False  # CONNECT received
        self.closing = False

    def send(self, frame: wire.Frame) -> None:
        self.outbound.put(wire.encode_frame(frame))

    def close(self) -> None:
        self.closing = True
        self.outbound.put(_CLOSE)


class BrokerServer:
    """Accepts wire-protocol clients on top of a durable BrokerCore."""

    def __init__(
        self,
        data_dir: Union[str, Path, None],
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        *,
        ack_timeout: float = DEFAULT_ACK_TIMEOUT,
        max_deliveries: int = DEFAULT_MAX_DELIVERIES,
        max_payload: int = MAX_PAYLOAD,
        sweep_interval: Optional[float] = None,
    ):
        self.core = BrokerCore(
            data_dir,
            ack_timeout=ack_timeout,
            max_deliveries=max_deliveries,
            max_payload=max_payload,
        )
        self.host = host
        self._requested_port = port
        self.sweep_interval = (
            sweep_interval if sweep_interval is not None else max(ack_timeout / 4, 0.05)
        )
        self._ids = itertools.count(1)
        self._connections: dict[int, _Connection] = {}
        self._conn_lock = threading.Lock()
        # serializes each core mutation together with the enqueueing of its
        # deliveries, so per-connection MSG order matches msg_id order
        self._order_lock = threading.Lock()
        self._listener: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> "BrokerServer":
        self._listener = socket.create_server(
            (self.host, self._requested_port), reuse_port=False
        )
        self._listener.settimeout(0.2)
        for target, name in (
            (self._accept_loop, "broker-accept"),
            (self._sweep_loop, "broker-sweeper"),
        ):
            thread = threading.Thread(target=target, name=name, daemon=True)
            thread.start()
            self._threads.append(thread)
        log.info("broker listening on %s:%d", self.host, self.port)
        return self

    @property
    def port(self) -> int:
        assert self._listener is not None, "server not started"
        return self._listener.getsockname()[1]

    @property
    def address(self) -> tuple[str, int]:
        return (self.host, self.port)

    def stop(self) -> None:
        self._stop.set()
        if self._listener is not None:
            self._listener.close()
        with self._conn_lock:
            conns = list(self._connections.values())
        for conn in conns:
            conn.close()
        for thread in self._threads:
            thread.join(timeout=5)
        self.core.close()

    # -- threads ---------------------------------------------------------------

    def _accept_loop(self) -> None:
        assert self._listener is not None
        while not self._stop.is_set():
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn = _Connection(next(self._ids), sock)
            with self._conn_lock:
                self._connections[conn.conn_id] = conn
            threading.Thread(
                target=self._read_loop, args=(conn,),
                name=f"broker-read-{conn.conn_id}", daemon=True,
            ).start()
            threading.Thread(
                target=self._write_loop, args=(conn,),
                name=f"broker-write-{conn.conn_id}", daemon=True,
            ).start()

    def _sweep_loop(self) -> None:
        while not self._stop.wait(self.sweep_interval):
            with self._order_lock:
                _, deliveries = self.core.sweep(time.time())
                self._dispatch(deliveries)

    def _write_loop(self, conn: _Connection) -> None:
        try:
            while True:
                item = conn.outbound.get()
                if item is _CLOSE:
                    return
                conn.sock.sendall(item)
        except OSError:
            pass
        finally:
            try:
                conn.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.sock.close()

    def _read_loop(self, conn: _Connection) -> None:
        decoder = wire.FrameDecoder()
        try:
            while not conn.closing:
                try:
                    data = conn.sock.recv(65536)
                except OSError:
                    break
                if not data:
                    break
                try:
                    frames = decoder.feed(data)
                except wire.ProtocolError as exc:
                    conn.send(wire.ErrFrame(f"protocol-error: {exc}"))
                    break
                for frame in frames:
                    self._handle(conn, frame)
        finally:
            self._teardown(conn)

    def _teardown(self, conn: _Connection) -> None:
        with self._conn_lock:
            self._connections.pop(conn.conn_id, None)
        with self._order_lock:
            deliveries = self.core.disconnect(conn.conn_id, time.time())
            self._dispatch(deliveries)
        conn.close()

    # -- command handling ----------------------------------------------------------

    def _handle(self, conn: _Connection, frame: wire.Frame) -> None:
        now = time.time()
        try:
            if isinstance(frame, wire.PingFrame):
                conn.send(wire.PongFrame())
            elif isinstance(frame, wire.ConnectFrame):
                self.core.connect(conn.conn_id, frame.client_name)
                conn.connected = True
                conn.send(wire.OkFrame())
            elif isinstance(frame, wire.PubFrame):
                with self._order_lock:
                    _, deliveries = self.core.publish(
                        conn.conn_id, frame.subject, frame.payload, frame.reply_to,
                        now=now,
                    )
                    conn.send(wire.OkFrame())
                    self._dispatch(deliveries)
            elif isinstance(frame, wire.SubFrame):
                with self._order_lock:
                    deliveries = self.core.subscribe(
                        conn.conn_id, frame.sid, frame.subject, frame.queue_group,
                        now=now,
                    )
                    conn.send(wire.OkFrame())
                    self._dispatch(deliveries)
            elif isinstance(frame, wire.UnsubFrame):
                with self._order_lock:
                    deliveries = self.core.unsubscribe(conn.conn_id, frame.sid, now)
                    conn.send(wire.OkFrame())
                    self._dispatch(deliveries)
            elif isinstance(frame, wire.AckFrame):
                self.core.ack(conn.conn_id, frame.msg_id)
                conn.send(wire.OkFrame())
            else:
                conn.send(wire.ErrFrame("protocol-error: unexpected server frame"))
        except NotConnected:
            conn.send(wire.ErrFrame("not-connected"))
        except PayloadTooLarge:
            conn.send(wire.ErrFrame("payload-too-large"))
        except DuplicateSid:
            conn.send(wire.ErrFrame("duplicate-sid"))
        except UnknownSid:
            conn.send(wire.ErrFrame("unknown-sid"))
        except UnknownPending:
            conn.send(wire.ErrFrame("unknown-pending"))
        except wire.ProtocolError as exc:
            conn.send(wire.ErrFrame(f"protocol-error: {exc}"))

    def _dispatch(self, deliveries: list[Delivery]) -> None:
        for d in deliveries:
            with self._conn_lock:
                conn = self._connections.get(d.conn_id)
            if conn is None:
                continue
            conn.send(
                wire.MsgFrame(
                    subject=d.subject, sid=d.sid, msg_id=d.msg_id,
                    delivery_count=d.delivery_count, payload=d.payload,
                    reply_to=d.reply_to,
                )
            )
