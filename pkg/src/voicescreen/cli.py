"""Operator CLI: data generation, training, service launchers, load harness.

Configuration can come from a TOML file (one table per subcommand, keys
matching option names with underscores); explicit flags always win.
"""

from __future__ import annotations

import json
import logging
import sys
import threading
import time
from pathlib import Path

import click

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

from .audio import FeatureConfig
from .model import TrainConfig
from .registry import LATEST, Registry
from .synth import SyntheticSpec, generate_synthetic_dataset


def _apply_config(ctx: click.Context, param: click.Parameter, value: str | None):
    if value:
        with open(value, "rb") as fh:
            ctx.default_map = tomllib.load(fh)
    return value


def _parse_address(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"expected host:port, got {value!r}")
    return host, int(port)


def _parse_version(value: str | None):
    if value is None or value == LATEST:
        return LATEST
    if value.isdigit():
        return int(value)
    raise click.BadParameter(f"version must be an integer or {LATEST!r}")


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    is_eager=True,
    expose_value=False,
    help="TOML config file; flags override its values.",
    callback=_apply_config,
)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    """Voice screening platform: train models, run services, soak-test."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if not verbose:
        logging.getLogger("httpx").setLevel(logging.WARNING)


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--per-class", default=100, show_default=True)
@click.option("--duration", default=3.0, show_default=True)
@click.option("--sample-rate", default=16000, show_default=True)
@click.option("--seed", default=42, show_default=True)
def gen_data(out: str, per_class: int, duration: float, sample_rate: int, seed: int):
    """Generate the synthetic two-class dataset."""
    spec = SyntheticSpec(
        n_per_class=per_class, duration=duration, sample_rate=sample_rate, seed=seed
    )
    manifest = generate_synthetic_dataset(spec, out)
    click.echo(f"wrote {2 * per_class} clips, manifest at {manifest}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--registry", required=True, type=click.Path(file_okay=False))
@click.option("--name", default="screener", show_default=True, help="Model name to register.")
@click.option("--learning-rate", default=0.1, show_default=True)
@click.option("--l2-lambda", default=1e-3, show_default=True)
@click.option("--max-iterations", default=5000, show_default=True)
@click.option("--tolerance", default=1e-8, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Train/holdout split seed.")
@click.option("--report-dir", default=None, type=click.Path(file_okay=False),
              help="Write metrics.csv and loss_curve.png here.")
def train(manifest, registry, name, learning_rate, l2_lambda, max_iterations,
          tolerance, seed, report_dir):
    """Run the training pipeline and register the model."""
    from .training import run_training_pipeline

    result = run_training_pipeline(
        manifest,
        registry,
        TrainConfig(
            learning_rate=learning_rate,
            l2_lambda=l2_lambda,
            max_iterations=max_iterations,
            tolerance=tolerance,
            seed=seed,
        ),
        FeatureConfig(),
        model_name=name,
    )
    if report_dir:
        from .report import write_training_report

        paths = write_training_report(report_dir, result.losses, result.holdout_accuracy)
        click.echo("report: " + ", ".join(str(p) for p in paths))
    click.echo(
        json.dumps(
            {
                "run_id": result.run_id,
                "name": result.model_version.name,
                "version": result.model_version.version,
                "artifact_hash": result.model_version.artifact_hash,
                "holdout_accuracy": result.holdout_accuracy,
            },
            indent=2,
        )
    )


@main.group()
def registry() -> None:
    """Registry inspection."""


@registry.command("ls")
@click.option("--registry", "registry_dir", required=True, type=click.Path(file_okay=False))
def registry_ls(registry_dir: str):
    """List registered models: name, latest version, artifact hash."""
    rows = Registry(registry_dir).list_models()
    if not rows:
        click.echo("(no models registered)")
        return
    for name, version, artifact_hash in rows:
        click.echo(f"{name}\t{version}\t{artifact_hash}")


@main.command("serve-broker")
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=4333, show_default=True)
@click.option("--ack-timeout", default=30.0, show_default=True)
@click.option("--max-deliveries", default=5, show_default=True)
def serve_broker(data_dir, host, port, ack_timeout, max_deliveries):
    """Run the durable message broker."""
    from .broker import BrokerServer

    server = BrokerServer(
        data_dir, host=host, port=port,
        ack_timeout=ack_timeout, max_deliveries=max_deliveries,
    ).start()
    click.echo(f"broker on {server.host}:{server.port}, data in {data_dir}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()


@main.command("serve-collection")
@click.option("--store", required=True, type=click.Path(file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8001, show_default=True)
def serve_collection(store, host, port):
    """Run the data collection HTTP API."""
    import uvicorn

    from .collection import CollectionStore, create_app

    app = create_app(CollectionStore(store))
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("serve-inference")
@click.option("--store", required=True, type=click.Path(file_okay=False))
@click.option("--broker", default="127.0.0.1:4333", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8002, show_default=True)
@click.option("--republish-interval", default=5.0, show_default=True,
              help="Seconds between sweeps for unsent request events.")
def serve_inference(store, broker, host, port, republish_interval):
    """Run the inference HTTP API wired to the broker."""
    import uvicorn

    from .inference import BrokerBus, FileResultStore, InferenceCore, create_app

    broker_host, broker_port = _parse_address(broker)
    bus = BrokerBus(broker_host, broker_port)
    core = InferenceCore(FileResultStore(store), bus)
    bus.subscribe_responses(core.handle_response)

    def republish_loop() -> None:
        while True:
            time.sleep(republish_interval)
            try:
                sent = core.republish_pending()
                if sent:
                    logging.getLogger("voicescreen.inference").info(
                        "republished %d request event(s)", sent
                    )
            except Exception:  # noqa: BLE001 - sweeper must survive outages
                pass

    threading.Thread(target=republish_loop, name="republish-sweeper", daemon=True).start()
    uvicorn.run(create_app(core), host=host, port=port, log_level="info")


@main.command("serve-model")
@click.option("--model", required=True)
@click.option("--version", default=LATEST, show_default=True)
@click.option("--registry", "registry_dir", required=True, type=click.Path(file_okay=False))
@click.option("--broker", default="127.0.0.1:4333", show_default=True)
@click.option("--workers", default=2, show_default=True)
def serve_model(model, version, registry_dir, broker, workers):
    """Run a model server for one registered model."""
    from .modelserver import ModelServer, ServerConfig

    broker_host, broker_port = _parse_address(broker)
    config = ServerConfig(
        model_name=model,
        registry_root=registry_dir,
        broker_host=broker_host,
        broker_port=broker_port,
        model_version=_parse_version(version),
        workers=workers,
    )
    server = ModelServer(config).start()
    click.echo(f"model server for {server.version_id} consuming from {broker}")
    server.run_forever()


@main.command()
@click.option("--api", required=True, help="Inference API base URL.")
@click.option("--requests", default=100, show_default=True)
@click.option("--concurrency", default=8, show_default=True)
@click.option("--timeout", default=120.0, show_default=True)
@click.option("--model", default="screener", show_default=True)
@click.option("--late-server-delay", default=None, type=float,
              help="Start a model server this many seconds in (needs --registry/--broker).")
@click.option("--registry", "registry_dir", default=None, type=click.Path(file_okay=False))
@click.option("--broker", default="127.0.0.1:4333", show_default=True)
@click.option("--report-dir", default=None, type=click.Path(file_okay=False),
              help="Write requests.csv, summary.csv and latency.png here.")
def simulate(api, requests, concurrency, timeout, model,
             late_server_delay, registry_dir, broker, report_dir):
    """Submit a batch of clips and wait until every one is terminal."""
    from .simulate import SimulationTimeout, simulate_load

    server_factory = None
    if late_server_delay is not None:
        if not registry_dir:
            raise click.UsageError("--late-server-delay needs --registry")
        from .modelserver import ModelServer, ServerConfig

        broker_host, broker_port = _parse_address(broker)

        def server_factory():
            return ModelServer(
                ServerConfig(
                    model_name=model,
                    registry_root=registry_dir,
                    broker_host=broker_host,
                    broker_port=broker_port,
                )
            ).start()

    try:
        report = simulate_load(
            api,
            requests,
            concurrency=concurrency,
            timeout=timeout,
            model_name=model,
            late_server_delay=late_server_delay,
            server_factory=server_factory,
        )
    except SimulationTimeout as exc:
        report = exc.report
    if report_dir:
        from .report import write_load_report

        paths = write_load_report(report_dir, report.rows, report.summary())
        click.echo("report: " + ", ".join(str(p) for p in paths))
    click.echo(json.dumps(report.summary(), indent=2))
    if not report.ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
