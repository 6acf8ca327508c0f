"""CLI: subcommands, TOML config precedence, report artifacts, and the
simulate harness against live services."""

import json
import threading

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from voicescreen.cli import main
from voicescreen.broker import BrokerServer
from voicescreen.inference import BrokerBus, FileResultStore, InferenceCore, create_app
from voicescreen.modelserver import ModelServer, ServerConfig
from voicescreen.simulate import SimulationTimeout, simulate_load
from voicescreen.synth import SyntheticSpec, generate_synthetic_dataset
from voicescreen.training import run_training_pipeline


@pytest.fixture
def runner():
    return CliRunner()


class TestGenData:
    def test_writes_dataset(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["gen-data", "--out", str(tmp_path / "d"), "--per-class", "1",
             "--duration", "0.5"],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "d" / "manifest.jsonl").is_file()
        assert len(list((tmp_path / "d").glob("*.wav"))) == 2

    def test_same_seed_identical(self, runner, tmp_path):
        for sub in ("a", "b"):
            result = runner.invoke(
                main,
                ["gen-data", "--out", str(tmp_path / sub), "--per-class", "1",
                 "--duration", "0.5", "--seed", "9"],
            )
            assert result.exit_code == 0
        wav = "negative_000.wav"
        assert (tmp_path / "a" / wav).read_bytes() == (tmp_path / "b" / wav).read_bytes()


class TestTrainCommand:
    def test_train_and_registry_ls(self, runner, tmp_path):
        manifest = generate_synthetic_dataset(
            SyntheticSpec(n_per_class=10, duration=1.0), tmp_path / "data"
        )
        registry_dir = str(tmp_path / "registry")
        result = runner.invoke(
            main,
            ["train", "--manifest", str(manifest), "--registry", registry_dir,
             "--name", "clitest", "--report-dir", str(tmp_path / "report")],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output[result.output.index("{"):])
        assert payload["name"] == "clitest"
        assert payload["version"] == 1
        assert payload["holdout_accuracy"] >= 0.9
        assert (tmp_path / "report" / "metrics.csv").is_file()
        assert (tmp_path / "report" / "loss_curve.png").stat().st_size > 0

        listing = runner.invoke(main, ["registry", "ls", "--registry", registry_dir])
        assert listing.exit_code == 0
        assert "clitest\t1\t" + payload["artifact_hash"] in listing.output

    def test_registry_ls_empty(self, runner, tmp_path):
        result = runner.invoke(main, ["registry", "ls", "--registry", str(tmp_path / "r")])
        assert result.exit_code == 0
        assert "no models" in result.output


class TestConfigFile:
    def test_toml_defaults_and_flag_override(self, runner, tmp_path):
        config = tmp_path / "cli.toml"
        config.write_text(
            '[gen-data]\nper_class = 2\nduration = 0.5\nout = "%s"\n'
            % (tmp_path / "from-toml")
        )  # keys are option names with underscores
        result = runner.invoke(main, ["--config", str(config), "gen-data"])
        assert result.exit_code == 0, result.output
        assert len(list((tmp_path / "from-toml").glob("*.wav"))) == 4

        result = runner.invoke(
            main,
            ["--config", str(config), "gen-data", "--per-class", "1",
             "--out", str(tmp_path / "flag-wins")],
        )
        assert result.exit_code == 0
        assert len(list((tmp_path / "flag-wins").glob("*.wav"))) == 2


@pytest.fixture(scope="module")
def trained_stack(tmp_path_factory):
    """Dataset + registry + broker + inference app, ready for simulation."""
    root = tmp_path_factory.mktemp("stack")
    manifest = generate_synthetic_dataset(
        SyntheticSpec(n_per_class=10, duration=1.0), root / "data"
    )
    run_training_pipeline(manifest, root / "registry", model_name="screener")

    broker = BrokerServer(root / "broker", port=0, ack_timeout=2.0, sweep_interval=0.1).start()
    bus = BrokerBus(broker.host, broker.port)
    core = InferenceCore(FileResultStore(root / "records"), bus)
    bus.subscribe_responses(core.handle_response)
    app = create_app(core)
    yield {"root": root, "broker": broker, "core": core, "app": app}
    bus.close()
    broker.stop()


class TestSimulate:
    def test_zero_requests_ok(self, trained_stack):
        with TestClient(trained_stack["app"]) as http:
            report = simulate_load("http://test", 0, http_client=http)
        assert report.ok
        assert report.requested == 0

    def test_late_server_processes_everything(self, trained_stack):
        stack = trained_stack
        broker = stack["broker"]

        def factory():
            return ModelServer(
                ServerConfig(
                    model_name="screener",
                    registry_root=stack["root"] / "registry",
                    broker_host=broker.host,
                    broker_port=broker.port,
                )
            ).start()

        with TestClient(stack["app"]) as http:
            report = simulate_load(
                "http://test",
                10,
                concurrency=4,
                timeout=30.0,
                late_server_delay=1.0,
                server_factory=factory,
                http_client=http,
            )
        assert report.completed == 10
        assert report.ok
        assert report.p95_ms is not None

    def test_no_server_times_out_nothing_lost(self, trained_stack):
        stack = trained_stack
        with TestClient(stack["app"]) as http:
            with pytest.raises(SimulationTimeout) as excinfo:
                simulate_load(
                    "http://test", 3, timeout=2.0, model_name="ghost-model",
                    http_client=http,
                )
        report = excinfo.value.report
        assert report.completed == 0
        assert report.pending == 3
        # nothing lost: all records still PENDING
        pending = [r for r in stack["core"].list() if r.status == "PENDING"]
        assert len(pending) >= 3
