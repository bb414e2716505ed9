"""Tests for checkpoint save/load, hashing and the block-CSR export."""

import json

import numpy as np
import pytest

from dsnn.checkpoint import load_bsr, load_checkpoint, read_manifest, save_checkpoint, verify_checkpoint
from dsnn.errors import CheckpointError
from dsnn.training.trainer import train_dsnn

DATA = {"task": "clusters", "seed": 0, "n_train": 192, "n_eval": 64, "classes": 4, "dim": 10, "noise": 0.3}


@pytest.fixture
def trained(pretrained, clusters, train_plan):
    return train_dsnn(pretrained, clusters, train_plan.replace(total_steps=12, freeze_steps=2))


class TestSaveLoad:
    def test_round_trip(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "dsnn", data_config=DATA)
        net = load_checkpoint(path)
        for name, p in trained.model.parameters.items():
            np.testing.assert_array_equal(net.model.parameters[name].value, p.value)
            np.testing.assert_array_equal(net.model.parameters[name].ema, p.ema)
        assert net.masks == trained.masks
        for w, g in trained.score_grads.items():
            np.testing.assert_array_equal(net.score_grads[w], g)
        assert net.plan == trained.plan
        assert net.trained_configs == trained.trained_configs
        assert (net.step, net.ema_updates, net.variant, net.label) == (
            trained.step, trained.ema_updates, trained.variant, trained.label
        )
        assert [r.deterministic() for r in net.history] == [r.deterministic() for r in trained.history]

    def test_manifest_records_data(self, trained, tmp_path):
        save_checkpoint(trained, tmp_path / "dsnn", data_config=DATA)
        manifest = read_manifest(tmp_path / "dsnn")
        assert manifest["data"] == DATA
        assert manifest["kind"] == "mlp"
        assert manifest["block_height"] == 2

    def test_identical_runs_identical_bytes(self, pretrained, clusters, train_plan, tmp_path):
        tp = train_plan.replace(total_steps=6, freeze_steps=1)
        a = save_checkpoint(train_dsnn(pretrained, clusters, tp), tmp_path / "a", data_config=DATA)
        b = save_checkpoint(train_dsnn(pretrained, clusters, tp), tmp_path / "b", data_config=DATA)
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
        for rel in read_manifest(a)["files"]:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_overwrites_checkpoint(self, trained, tmp_path):
        save_checkpoint(trained, tmp_path / "dsnn")
        save_checkpoint(trained, tmp_path / "dsnn")
        verify_checkpoint(tmp_path / "dsnn")

    def test_refuses_foreign_directory(self, trained, tmp_path):
        target = tmp_path / "notes"
        target.mkdir()
        (target / "todo.txt").write_text("keep me")
        with pytest.raises(CheckpointError) as exc:
            save_checkpoint(trained, target)
        assert exc.value.exit_code == 1
        assert (target / "todo.txt").exists()

    def test_float32_export(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "f32", export_dtype="float32")
        net = load_checkpoint(path)
        w = trained.model.parameters["fc0.w"].value
        np.testing.assert_allclose(net.model.parameters["fc0.w"].value, w, rtol=1e-6)
        assert (path / "tensors" / "fc0.w.f32").exists()


class TestIntegrity:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(tmp_path / "nothing")
        assert exc.value.exit_code == 1

    def test_corrupt_payload(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "dsnn")
        target = path / "tensors" / "fc0.w.f64"
        data = bytearray(target.read_bytes())
        data[0] ^= 0xFF
        target.write_bytes(bytes(data))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert "hash mismatch" in str(exc.value)
        assert exc.value.exit_code == 2

    def test_tampered_file_list(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "dsnn")
        manifest = json.loads((path / "manifest.json").read_text())
        manifest["files"].pop("history.csv")
        (path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError):
            verify_checkpoint(path)


class TestBsrExport:
    def test_matches_masked_ema(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "dsnn")
        for w in trained.model.prunable:
            a = load_bsr(path, "Small", w)
            expected = np.where(trained.masks["Small"][w].to_array(), trained.model.parameters[w].ema, 0.0)
            np.testing.assert_array_equal(a.to_dense(), expected)

    def test_full_config_not_exported(self, trained, tmp_path):
        path = save_checkpoint(trained, tmp_path / "dsnn")
        assert not (path / "bsr" / "Large").exists()
        with pytest.raises(CheckpointError):
            load_bsr(path, "Large", "fc0.w")
