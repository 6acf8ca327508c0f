"""Registry: run tracking, content-addressed artifacts, crash safety."""

import hashlib
import json
import os

import numpy as np
import pytest

from voicescreen import model as m
from voicescreen import registry as reg
from voicescreen.audio import FeatureConfig


@pytest.fixture
def registry(tmp_path):
    return reg.Registry(tmp_path / "registry")


@pytest.fixture
def artifact():
    cfg = FeatureConfig(mel_filters=1, num_coefficients=1)
    model = m.LogisticModel(
        weights=np.array([0.5, -0.25]),
        bias=0.125,
        feature_config=cfg,
        norm_means=np.zeros(2),
        norm_scales=np.ones(2),
    )
    return m.serialize(model)


class TestRuns:
    def test_create_empty(self, registry):
        run = registry.create_run({}, {})
        assert run.status == reg.RUNNING
        assert run.params == {} and run.environment == {}

    def test_distinct_ids(self, registry):
        assert registry.create_run({}, {}).run_id != registry.create_run({}, {}).run_id

    def test_params_survive_reopen(self, registry, tmp_path):
        run = registry.create_run({"lr": "0.1"}, {"numpy": np.__version__})
        reopened = reg.Registry(registry.base)
        got = reopened.get_run(run.run_id)
        assert got.params == {"lr": "0.1"}
        assert got.environment == {"numpy": np.__version__}

    def test_metrics_append_in_order(self, registry):
        run = registry.create_run({}, {})
        for step, value in enumerate([0.9, 0.5, 0.3]):
            registry.log_metric(run.run_id, "loss", value, step)
        entries = registry.read_metrics(run.run_id, "loss")
        assert [e["step"] for e in entries] == [0, 1, 2]
        assert [e["value"] for e in entries] == [0.9, 0.5, 0.3]

    def test_finalize_once(self, registry):
        run = registry.create_run({}, {})
        registry.finalize_run(run.run_id, reg.FINISHED)
        with pytest.raises(reg.RunNotActive):
            registry.finalize_run(run.run_id, reg.FAILED)

    def test_log_after_finalize(self, registry):
        run = registry.create_run({}, {})
        registry.finalize_run(run.run_id, reg.FAILED)
        with pytest.raises(reg.RunNotActive):
            registry.log_metric(run.run_id, "loss", 1.0, 0)

    def test_unknown_run(self, registry):
        with pytest.raises(reg.UnknownRun):
            registry.log_metric("e2b0a0f4-0000-0000-0000-000000000000", "x", 1.0, 0)


class TestRegisterResolve:
    def test_first_version_is_one(self, registry, artifact):
        run = registry.create_run({}, {})
        mv = registry.register_model("screener", run.run_id, artifact)
        assert mv.version == 1

    def test_same_bytes_two_versions_same_hash(self, registry, artifact):
        run = registry.create_run({}, {})
        a = registry.register_model("screener", run.run_id, artifact)
        b = registry.register_model("screener", run.run_id, artifact)
        assert (a.version, b.version) == (1, 2)
        assert a.artifact_hash == b.artifact_hash

    def test_hash_matches_external_sha256(self, registry, artifact):
        run = registry.create_run({}, {})
        mv = registry.register_model("screener", run.run_id, artifact)
        assert mv.artifact_hash == hashlib.sha256(artifact).hexdigest()

    def test_register_unknown_run(self, registry, artifact):
        with pytest.raises(reg.UnknownRun):
            registry.register_model("screener", "not-a-run", artifact)

    def test_register_junk_artifact(self, registry):
        run = registry.create_run({}, {})
        with pytest.raises(m.MalformedArtifact):
            registry.register_model("screener", run.run_id, b"not a model")

    def test_resolve_latest_reads_back(self, registry, artifact):
        run = registry.create_run({}, {})
        registry.register_model("screener", run.run_id, artifact)
        mv, data = registry.resolve_model("screener", reg.LATEST)
        assert data == artifact
        assert mv.version == 1

    def test_resolve_specific_version(self, registry, artifact):
        run = registry.create_run({}, {})
        registry.register_model("screener", run.run_id, artifact)
        registry.register_model("screener", run.run_id, artifact)
        mv, _ = registry.resolve_model("screener", 1)
        assert mv.version == 1

    def test_unknown_version(self, registry, artifact):
        run = registry.create_run({}, {})
        registry.register_model("screener", run.run_id, artifact)
        registry.register_model("screener", run.run_id, artifact)
        with pytest.raises(reg.UnknownVersion):
            registry.resolve_model("screener", 99)

    def test_unknown_model(self, registry):
        with pytest.raises(reg.UnknownModel):
            registry.resolve_model("ghost")

    def test_corrupt_artifact_detected(self, registry, artifact):
        run = registry.create_run({}, {})
        mv = registry.register_model("screener", run.run_id, artifact)
        blob = registry.base / "artifacts" / mv.artifact_hash
        raw = bytearray(blob.read_bytes())
        raw[5] ^= 0xFF
        blob.write_bytes(raw)
        with pytest.raises(reg.CorruptArtifact):
            registry.resolve_model("screener")


class TestListModels:
    def test_empty(self, registry):
        assert registry.list_models() == []

    def test_lexicographic(self, registry, artifact):
        run = registry.create_run({}, {})
        registry.register_model("bravo", run.run_id, artifact)
        registry.register_model("alpha", run.run_id, artifact)
        names = [name for name, _, _ in registry.list_models()]
        assert names == ["alpha", "bravo"]

    def test_latest_version_reported(self, registry, artifact):
        run = registry.create_run({}, {})
        for _ in range(3):
            registry.register_model("alpha", run.run_id, artifact)
        assert registry.list_models() == [
            ("alpha", 3, hashlib.sha256(artifact).hexdigest())
        ]


class TestDurability:
    def test_versions_contiguous_across_reopen(self, registry, artifact):
        run = registry.create_run({}, {})
        registry.register_model("screener", run.run_id, artifact)
        reopened = reg.Registry(registry.base)
        mv = reopened.register_model("screener", run.run_id, artifact)
        assert mv.version == 2
        versions = json.loads(
            (registry.base / "models" / "screener" / "manifest.json").read_text()
        )["versions"]
        assert [v["version"] for v in versions] == [1, 2]

    def test_interrupted_manifest_write_keeps_old_state(
        self, registry, artifact, monkeypatch
    ):
        run = registry.create_run({}, {})
        registry.register_model("screener", run.run_id, artifact)

        real_replace = os.replace

        def explode(src, dst):
            if "manifest" in str(dst):
                raise OSError("simulated crash between temp write and rename")
            return real_replace(src, dst)

        monkeypatch.setattr(os, "replace", explode)
        with pytest.raises(reg.StorageFailure):
            registry.register_model("screener", run.run_id, artifact)
        monkeypatch.undo()

        reopened = reg.Registry(registry.base)
        mv, data = reopened.resolve_model("screener", reg.LATEST)
        assert mv.version == 1
        assert data == artifact

    def test_lock_excludes_second_writer(self, registry, artifact):
        lock = registry.base / ".lock"
        lock.write_text("12345")
        with pytest.raises(reg.StorageFailure):
            registry.create_run({}, {})
        lock.unlink()
        registry.create_run({}, {})
