"""Inference core against both port bundles (the hexagonal contract made
executable), plus the HTTP surface."""

import time
from collections import Counter

import pytest
from fastapi.testclient import TestClient

import inference_scenarios as scenarios
from voicescreen.broker import BrokerClient, BrokerServer
from voicescreen.inference import (
    BrokerBus,
    FileResultStore,
    InferenceCore,
    InMemoryBus,
    InMemoryResultStore,
    RESPONSES_SUBJECT,
    create_app,
    decode_request_event,
    encode_response_event,
    requests_subject,
)


class FakeBundle:
    """In-memory adapters; events move only when pumped."""

    def __init__(self):
        self.bus = InMemoryBus()
        self.store = InMemoryResultStore()
        self.core = InferenceCore(self.store, self.bus)
        self.bus.subscribe_responses(self.core.handle_response)

    def install_collector(self) -> Counter:
        counts: Counter = Counter()

        def on_request(payload):
            counts[decode_request_event(payload).request_id] += 1

        self.bus.subscribe(requests_subject(scenarios.MODEL), on_request)
        return counts

    def install_responder(self, fn) -> None:
        def on_request(payload):
            event = decode_request_event(payload)
            self.bus.publish(RESPONSES_SUBJECT, encode_response_event(fn(event)))

        self.bus.subscribe(requests_subject(scenarios.MODEL), on_request)

    def inject_response(self, payload: bytes) -> None:
        self.bus.publish(RESPONSES_SUBJECT, payload)

    def set_bus_down(self, down: bool) -> None:
        self.bus.down = down

    def settle(self, predicate) -> bool:
        for _ in range(100):
            if predicate():
                return True
            if self.bus.pump() == 0:
                break
        return predicate()

    def drain(self) -> None:
        self.bus.pump()

    def close(self) -> None:
        pass


class RealBundle:
    """File store + live broker over TCP behind the same ports."""

    def __init__(self, tmp_path):
        self.tmp_path = tmp_path
        self.server = BrokerServer(
            tmp_path / "broker", port=0, ack_timeout=1.0, sweep_interval=0.1
        ).start()
        self.port = self.server.port
        self.store = FileResultStore(tmp_path / "records")
        self.bus = BrokerBus("127.0.0.1", self.port, client_name="inference-api")
        self.core = InferenceCore(self.store, self.bus)
        self.bus.subscribe_responses(self.core.handle_response)
        self._aux: list[BrokerClient] = []

    def _aux_client(self, name: str) -> BrokerClient:
        client = BrokerClient("127.0.0.1", self.port, client_name=name).connect()
        self._aux.append(client)
        return client

    def install_collector(self) -> Counter:
        counts: Counter = Counter()
        client = self._aux_client("collector")

        def on_msg(frame):
            counts[decode_request_event(frame.payload).request_id] += 1
            client.ack(frame.msg_id)

        client.subscribe(
            requests_subject(scenarios.MODEL), "collect", on_msg,
            queue_group=f"models.{scenarios.MODEL}",
        )
        return counts

    def install_responder(self, fn) -> None:
        client = self._aux_client("responder")

        def on_msg(frame):
            event = decode_request_event(frame.payload)
            client.publish(RESPONSES_SUBJECT, encode_response_event(fn(event)))
            client.ack(frame.msg_id)

        client.subscribe(
            requests_subject(scenarios.MODEL), "respond", on_msg,
            queue_group=f"models.{scenarios.MODEL}",
        )

    def inject_response(self, payload: bytes) -> None:
        client = self._aux_client("injector")
        client.publish(RESPONSES_SUBJECT, payload)

    def set_bus_down(self, down: bool) -> None:
        if down:
            for client in self._aux:
                client.close()
            self._aux.clear()
            self.server.stop()
        else:
            self.server = BrokerServer(
                self.tmp_path / "broker", port=self.port,
                ack_timeout=1.0, sweep_interval=0.1,
            ).start()

    def settle(self, predicate, timeout: float = 8.0) -> bool:
        deadline = time.time() + timeout
        while time.time() < deadline:
            if predicate():
                return True
            time.sleep(0.02)
        return predicate()

    def drain(self) -> None:
        time.sleep(0.3)

    def close(self) -> None:
        for client in self._aux:
            client.close()
        self.bus.close()
        self.server.stop()


@pytest.fixture(params=["memory", "real"])
def bundle(request, tmp_path):
    b = FakeBundle() if request.param == "memory" else RealBundle(tmp_path)
    yield b
    b.close()


@pytest.mark.parametrize(
    "scenario", scenarios.SCENARIOS, ids=lambda s: s.__name__
)
def test_scenario(bundle, scenario):
    scenario(bundle)


class TestCrashRecovery:
    def test_crash_between_persist_and_publish_never_loses_request(self, tmp_path):
        store = FileResultStore(tmp_path / "records")

        class DyingBus:
            def publish(self, subject, payload):
                raise RuntimeError("process killed mid-submit")

            def subscribe_responses(self, handler):
                pass

        crashing = InferenceCore(store, DyingBus())
        with pytest.raises(RuntimeError):
            crashing.submit("demo", None, scenarios.valid_wav())

        # the record hit disk before the publish attempt; after restart a
        # healthy core republishes exactly one event for it
        survivors = store.publish_pending()
        assert len(survivors) == 1

        good_bus = InMemoryBus()
        recovered = InferenceCore(store, good_bus)
        assert recovered.republish_pending() == 1
        assert len(good_bus.published) == 1
        subject, payload = good_bus.published[0]
        assert subject == requests_subject("demo")
        assert decode_request_event(payload).request_id == survivors[0].request_id
        assert not store.publish_pending()


class TestHttpSurface:
    @pytest.fixture
    def harness(self):
        b = FakeBundle()
        return b, TestClient(create_app(b.core))

    def test_submit_accepted(self, harness):
        bundle, client = harness
        response = client.post(
            "/inferences",
            data={"model_name": "demo"},
            files={"file": ("clip.wav", scenarios.valid_wav(), "audio/wav")},
        )
        assert response.status_code == 202
        rid = response.json()["request_id"]
        got = client.get(f"/inferences/{rid}")
        assert got.status_code == 200
        assert got.json()["status"] == "PENDING"
        assert "wav_base64" not in got.json()

    def test_lossy_415(self, harness):
        _, client = harness
        response = client.post(
            "/inferences",
            data={"model_name": "demo"},
            files={"file": ("clip.wav", scenarios.lossy_wav(), "audio/wav")},
        )
        assert response.status_code == 415
        assert response.json()["error"] == "UnsupportedCodec"

    def test_unknown_404(self, harness):
        _, client = harness
        assert client.get("/inferences/does-not-exist").status_code == 404

    def test_missing_fields_422(self, harness):
        _, client = harness
        response = client.post(
            "/inferences",
            files={"file": ("clip.wav", scenarios.valid_wav(), "audio/wav")},
        )
        assert response.status_code == 422

    def test_bad_version_422(self, harness):
        _, client = harness
        response = client.post(
            "/inferences",
            data={"model_name": "demo", "model_version": "newest"},
            files={"file": ("clip.wav", scenarios.valid_wav(), "audio/wav")},
        )
        assert response.status_code == 422

    def test_bad_model_name_422(self, harness):
        _, client = harness
        response = client.post(
            "/inferences",
            data={"model_name": "Not Valid!"},
            files={"file": ("clip.wav", scenarios.valid_wav(), "audio/wav")},
        )
        assert response.status_code == 422

    def test_completed_after_response(self, harness):
        bundle, client = harness
        bundle.install_responder(
            lambda event: scenarios.ResponseEvent(
                request_id=event.request_id, outcome="OK", probability=0.9,
                label="POSITIVE", model_version_id="demo:1",
            )
        )
        response = client.post(
            "/inferences",
            data={"model_name": "demo"},
            files={"file": ("clip.wav", scenarios.valid_wav(), "audio/wav")},
        )
        rid = response.json()["request_id"]
        bundle.drain()
        got = client.get(f"/inferences/{rid}").json()
        assert got["status"] == "COMPLETED"
        assert got["result"]["label"] == "POSITIVE"

    def test_list_filter(self, harness):
        bundle, client = harness
        client.post(
            "/inferences",
            data={"model_name": "demo"},
            files={"file": ("a.wav", scenarios.valid_wav(1), "audio/wav")},
        )
        client.post(
            "/inferences",
            data={"model_name": "other"},
            files={"file": ("b.wav", scenarios.valid_wav(2), "audio/wav")},
        )
        assert len(client.get("/inferences").json()) == 2
        assert len(client.get("/inferences", params={"model": "demo"}).json()) == 1
        assert len(client.get("/inferences", params={"status": "PENDING"}).json()) == 2
