"""Load/soak harness: hammer the inference API, wait for terminal states.

This is the executable form of the system's resilience claim: submissions
must survive a model server that shows up late, because the broker holds
every request until someone consumes it.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import httpx
import numpy as np

from .audio import AudioClip, encode_wav


class SimulationTimeout(Exception):
    """Requests still pending when the overall deadline passed. The partial
    report survives on .report (nothing is lost, merely not yet served)."""

    def __init__(self, message: str, report: "LoadReport"):
        super().__init__(message)
        self.report = report


@dataclass
class LoadReport:
    requested: int
    completed: int = 0
    failed: int = 0
    pending: int = 0
    p50_ms: Optional[float] = None
    p95_ms: Optional[float] = None
    timed_out: bool = False
    rows: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.completed == self.requested and not self.timed_out

    def summary(self) -> dict:
        return {
            "requested": self.requested,
            "completed": self.completed,
            "failed": self.failed,
            "pending": self.pending,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "timed_out": self.timed_out,
        }


def default_wav_factory(index: int) -> bytes:
    rng = np.random.default_rng(1000 + index)
    t = np.arange(16000) / 16000.0
    tone = 0.5 * np.sin(2 * np.pi * 220.0 * t) + 0.25 * np.sin(2 * np.pi * 660.0 * t)
    tone += rng.normal(0, 0.05, len(t))
    samples = np.rint(tone / np.max(np.abs(tone)) * 0.8 * 32767).astype(np.int16)
    return encode_wav(AudioClip(16000, samples))


def percentile(values: list[float], q: float) -> Optional[float]:
    if not values:
        return None
    return float(np.percentile(np.array(values), q))


def simulate_load(
    api_base: str,
    n_requests: int,
    concurrency: int = 8,
    timeout: float = 120.0,
    model_name: str = "screener",
    model_version: Optional[int] = None,
    poll_interval: float = 0.2,
    wav_factory: Callable[[int], bytes] = default_wav_factory,
    late_server_delay: Optional[float] = None,
    server_factory: Optional[Callable[[], object]] = None,
    http_client: Optional[httpx.Client] = None,
) -> LoadReport:
    """Submit n_requests clips, poll until every record is terminal.

    With late_server_delay and server_factory set, a model server is
    started that many seconds after the first submission; the factory's
    result must expose stop(). Raises SimulationTimeout when the deadline
    passes with requests still pending.
    """
    client = http_client or httpx.Client(base_url=api_base, timeout=30.0)
    owns_client = http_client is None
    report = LoadReport(requested=n_requests)
    late_server: list[object] = []
    timer: Optional[threading.Timer] = None
    try:
        if n_requests == 0:
            return report

        if late_server_delay is not None and server_factory is not None:
            timer = threading.Timer(
                late_server_delay, lambda: late_server.append(server_factory())
            )
            timer.daemon = True
            timer.start()

        data: dict[str, str] = {"model_name": model_name}
        if model_version is not None:
            data["model_version"] = str(model_version)

        submitted_at: dict[str, float] = {}

        def submit(index: int) -> str:
            response = client.post(
                "/inferences",
                data=data,
                files={"file": (f"clip-{index}.wav", wav_factory(index), "audio/wav")},
            )
            response.raise_for_status()
            request_id = response.json()["request_id"]
            submitted_at[request_id] = time.monotonic()
            return request_id

        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            request_ids = list(pool.map(submit, range(n_requests)))

        outstanding = set(request_ids)
        terminal: dict[str, tuple[str, Optional[float]]] = {}
        deadline = time.monotonic() + timeout
        while outstanding and time.monotonic() < deadline:
            for request_id in list(outstanding):
                record = client.get(f"/inferences/{request_id}").json()
                if record["status"] in ("COMPLETED", "FAILED"):
                    latency_ms = (time.monotonic() - submitted_at[request_id]) * 1000.0
                    terminal[request_id] = (record["status"], latency_ms)
                    outstanding.discard(request_id)
            if outstanding:
                time.sleep(poll_interval)

        for request_id in request_ids:
            status, latency_ms = terminal.get(request_id, ("PENDING", None))
            report.rows.append(
                {"request_id": request_id, "status": status, "latency_ms": latency_ms}
            )
        report.completed = sum(1 for s, _ in terminal.values() if s == "COMPLETED")
        report.failed = sum(1 for s, _ in terminal.values() if s == "FAILED")
        report.pending = len(outstanding)
        completed_latencies = [
            lat for s, lat in terminal.values() if s == "COMPLETED" and lat is not None
        ]
        report.p50_ms = percentile(completed_latencies, 50)
        report.p95_ms = percentile(completed_latencies, 95)
        if outstanding:
            report.timed_out = True
            raise SimulationTimeout(
                f"{len(outstanding)} of {n_requests} requests still pending "
                f"after {timeout:.0f}s",
                report,
            )
        return report
    finally:
        if timer is not None:
            timer.cancel()
        for server in late_server:
            stop = getattr(server, "stop", None)
            if callable(stop):
                stop()
        if owns_client:
            client.close()
