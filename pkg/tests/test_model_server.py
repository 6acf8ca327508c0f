"""Model server: request handling, version pinning, queue-group scale-out,
publish-before-ack, reconnect after broker loss."""

import json
import queue
import time

import numpy as np
import pytest

from voicescreen import model as m
from voicescreen.audio import AudioClip, FeatureConfig, encode_wav
from voicescreen.broker import BrokerClient, BrokerServer
from voicescreen.inference.records import (
    RESPONSES_SUBJECT,
    RequestEvent,
    decode_response_event,
    encode_request_event,
    requests_subject,
)
from voicescreen.modelserver import ModelServer, ServerConfig, handle_request
from voicescreen.registry import Registry, UnknownModel


def acking_collector(client, q):
    """Collect MSG frames and ack them (plain subscribers get redeliveries
    for anything left unacked)."""

    def on_msg(frame):
        q.put(frame)
        client.ack(frame.msg_id)

    return on_msg


def make_artifact(num_coefficients=13):
    cfg = FeatureConfig(num_coefficients=num_coefficients)
    dim = 2 * num_coefficients
    model = m.LogisticModel(
        weights=np.linspace(-0.5, 0.5, dim),
        bias=0.1,
        feature_config=cfg,
        norm_means=np.zeros(dim),
        norm_scales=np.ones(dim),
    )
    return m.serialize(model)


def valid_wav(seed=0, rate=16000, seconds=0.5):
    rng = np.random.default_rng(seed)
    samples = rng.integers(-5000, 5000, int(rate * seconds)).astype(np.int16)
    return encode_wav(AudioClip(rate, samples))


@pytest.fixture
def registry(tmp_path):
    registry = Registry(tmp_path / "registry")
    run = registry.create_run({}, {})
    registry.register_model("demo", run.run_id, make_artifact())
    return registry


@pytest.fixture
def broker(tmp_path):
    srv = BrokerServer(
        tmp_path / "broker", port=0, ack_timeout=0.5, sweep_interval=0.05
    ).start()
    yield srv
    srv.stop()


def server_config(registry, broker, **kwargs):
    return ServerConfig(
        model_name="demo",
        registry_root=registry.base,
        broker_host=broker.host,
        broker_port=broker.port,
        **kwargs,
    )


class TestHandleRequest:
    def model(self):
        return m.deserialize(make_artifact()).with_version("demo:1")

    def test_ok_response(self):
        event = RequestEvent("r1", "demo", "latest", valid_wav())
        response = handle_request(event, self.model())
        assert response.outcome == "OK"
        assert 0.0 <= response.probability <= 1.0
        assert response.model_version_id == "demo:1"

    def test_resamples_foreign_rates(self):
        event = RequestEvent("r2", "demo", "latest", valid_wav(rate=48000))
        assert handle_request(event, self.model()).outcome == "OK"

    def test_truncated_wav_is_error_data(self):
        event = RequestEvent("r3", "demo", "latest", valid_wav()[:-100])
        response = handle_request(event, self.model())
        assert response.outcome == "ERROR"
        assert response.error_reason == "TruncatedData"

    def test_too_short_clip_is_error(self):
        tiny = encode_wav(AudioClip(16000, np.zeros(10, dtype=np.int16) + 1))
        response = handle_request(RequestEvent("r4", "demo", "latest", tiny), self.model())
        assert response.outcome == "ERROR"
        assert response.error_reason == "ClipTooShort"


class TestLifecycle:
    def test_unknown_model_fatal(self, registry, broker):
        config = ServerConfig(
            model_name="ghost",
            registry_root=registry.base,
            broker_host=broker.host,
            broker_port=broker.port,
        )
        with pytest.raises(UnknownModel):
            ModelServer(config).start()

    def test_processes_requests_end_to_end(self, registry, broker):
        server = ModelServer(server_config(registry, broker)).start()
        responses = queue.Queue()
        probe = BrokerClient(broker.host, broker.port, client_name="probe").connect()
        probe.subscribe(RESPONSES_SUBJECT, "r", acking_collector(probe, responses))

        event = RequestEvent("req-1", "demo", "latest", valid_wav())
        probe.publish(requests_subject("demo"), encode_request_event(event))

        frame = responses.get(timeout=5)
        response = decode_response_event(frame.payload)
        assert response.request_id == "req-1"
        assert response.outcome == "OK"
        assert response.model_version_id == "demo:1"
        probe.close()
        server.stop()

    def test_version_pinned_at_startup(self, registry, broker):
        server = ModelServer(server_config(registry, broker)).start()
        # a new version registered after startup must not affect responses
        run = registry.create_run({}, {})
        registry.register_model("demo", run.run_id, make_artifact())

        responses = queue.Queue()
        probe = BrokerClient(broker.host, broker.port, client_name="probe").connect()
        probe.subscribe(RESPONSES_SUBJECT, "r", acking_collector(probe, responses))
        for i in range(3):
            event = RequestEvent(f"req-{i}", "demo", "latest", valid_wav(i))
            probe.publish(requests_subject("demo"), encode_request_event(event))
        seen = [decode_response_event(responses.get(timeout=5).payload) for _ in range(3)]
        assert {r.model_version_id for r in seen} == {"demo:1"}
        probe.close()
        server.stop()

    def test_two_servers_share_queue_group(self, registry, broker):
        s1 = ModelServer(server_config(registry, broker)).start()
        s2 = ModelServer(server_config(registry, broker)).start()
        responses = queue.Queue()
        probe = BrokerClient(broker.host, broker.port, client_name="probe").connect()
        probe.subscribe(RESPONSES_SUBJECT, "r", acking_collector(probe, responses))
        n = 20
        for i in range(n):
            event = RequestEvent(f"req-{i}", "demo", "latest", valid_wav(i))
            probe.publish(requests_subject("demo"), encode_request_event(event))
        seen = [decode_response_event(responses.get(timeout=10).payload) for _ in range(n)]
        # every request answered exactly once across both servers
        assert sorted(r.request_id for r in seen) == sorted(f"req-{i}" for i in range(n))
        time.sleep(1.0)  # several ack timeouts: no redeliveries -> no duplicates
        assert responses.empty()
        s1.stop()
        s2.stop()
        probe.close()

    def test_poison_event_reaches_dlq(self, registry, broker):
        server = ModelServer(server_config(registry, broker)).start()
        dlq = queue.Queue()
        probe = BrokerClient(broker.host, broker.port, client_name="probe").connect()
        probe.subscribe("dlq.inference.requests.demo", "d", lambda f: dlq.put(f))
        probe.publish(requests_subject("demo"), b"not an event")
        frame = dlq.get(timeout=10)  # after max_deliveries sweeps
        assert frame.payload == b"not an event"
        probe.ack(frame.msg_id)
        server.stop()
        probe.close()

    def test_reconnects_after_broker_restart(self, registry, tmp_path):
        broker_dir = tmp_path / "broker2"
        srv = BrokerServer(broker_dir, port=0, ack_timeout=0.5, sweep_interval=0.05).start()
        port = srv.port
        config = ServerConfig(
            model_name="demo",
            registry_root=registry.base,
            broker_host=srv.host,
            broker_port=port,
            reconnect_initial=0.1,
            reconnect_cap=0.5,
        )
        server = ModelServer(config).start()
        assert server.connected
        srv.stop()
        time.sleep(0.2)

        srv2 = BrokerServer(broker_dir, port=port, ack_timeout=0.5, sweep_interval=0.05).start()
        deadline = time.time() + 5
        while time.time() < deadline and not server.connected:
            time.sleep(0.05)
        assert server.connected

        # the resubscribed server still serves requests
        responses = queue.Queue()
        probe = BrokerClient(srv2.host, port, client_name="probe").connect()
        probe.subscribe(RESPONSES_SUBJECT, "r", acking_collector(probe, responses))
        event = RequestEvent("after-restart", "demo", "latest", valid_wav())
        probe.publish(requests_subject("demo"), encode_request_event(event))
        response = decode_response_event(responses.get(timeout=5).payload)
        assert response.request_id == "after-restart"
        probe.close()
        server.stop()
        srv2.stop()


class TestConfig:
    def test_queue_group_default(self, tmp_path):
        config = ServerConfig(model_name="abc", registry_root=tmp_path)
        assert config.queue_group == "models.abc"

    def test_structured_log_line(self, registry, broker, caplog):
        import logging
        server = ModelServer(server_config(registry, broker)).start()
        probe = BrokerClient(broker.host, broker.port, client_name="probe").connect()
        responses = queue.Queue()
        probe.subscribe(RESPONSES_SUBJECT, "r", acking_collector(probe, responses))
        with caplog.at_level(logging.INFO, logger="voicescreen.modelserver"):
            event = RequestEvent("logged", "demo", "latest", valid_wav())
            probe.publish(requests_subject("demo"), encode_request_event(event))
            responses.get(timeout=5)
            time.sleep(0.1)
        lines = [
            json.loads(r.message)
            for r in caplog.records
            if r.message.startswith("{")
        ]
        assert any(
            l["request_id"] == "logged" and l["outcome"] == "OK" and "latency_ms" in l
            for l in lines
        )
        probe.close()
        server.stop()
