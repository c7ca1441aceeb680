"""Manifest emission over extracted datasets."""

import numpy as np
import pytest

from featx.extract import ManifestError, emit_manifest
from featx.featwrite import write_featset


def _fake_pair(root, name):
    train = root / f"{name}_train.featset"
    test = root / f"{name}_test.featset"
    for path in (train, test):
        write_featset(path, [0], np.ones((1, 4)), num_classes=1)
    return train, test


class TestEmitManifest:
    def test_exact_text(self, tmp_path):
        datasets = {
            name: _fake_pair(tmp_path, name) for name in ("alpha", "beta", "gamma")
        }
        out = tmp_path / "manifest.txt"
        count = emit_manifest(out, "beta", datasets)
        assert count == 2
        assert out.read_text() == (
            "# feature-set manifest; paths are relative to this file\n"
            "ind_train=beta_train.featset\n"
            "ind_test=beta_test.featset\n"
            "ood.alpha=alpha_train.featset\n"
            "ood.alpha=alpha_test.featset\n"
            "ood.gamma=gamma_train.featset\n"
            "ood.gamma=gamma_test.featset\n"
        )

    def test_paths_relative_to_manifest(self, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        datasets = {
            "ind": _fake_pair(data, "ind"),
            "far": _fake_pair(data, "far"),
        }
        out_dir = tmp_path / "runs"
        out = out_dir / "manifest.txt"
        emit_manifest(out, "ind", datasets)
        text = out.read_text()
        assert "ind_train=../data/ind_train.featset" in text
        assert "ood.far=../data/far_train.featset" in text

    def test_single_dataset_warns_and_writes(self, tmp_path):
        datasets = {"only": _fake_pair(tmp_path, "only")}
        out = tmp_path / "manifest.txt"
        with pytest.warns(RuntimeWarning, match="without OoD"):
            count = emit_manifest(out, "only", datasets)
        assert count == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("ind_train=")

    def test_unknown_ind_rejected(self, tmp_path):
        datasets = {"a": _fake_pair(tmp_path, "a")}
        with pytest.raises(ManifestError, match="not among"):
            emit_manifest(tmp_path / "m.txt", "b", datasets)

    def test_missing_output_rejected(self, tmp_path):
        train, test = _fake_pair(tmp_path, "a")
        test.unlink()
        with pytest.raises(ManifestError, match="missing extractor output"):
            emit_manifest(tmp_path / "m.txt", "a", {"a": (train, test)})

    def test_bad_dataset_name_rejected(self, tmp_path):
        pair = _fake_pair(tmp_path, "a")
        with pytest.raises(ManifestError, match="must match"):
            emit_manifest(tmp_path / "m.txt", "has space", {"has space": pair})

    def test_creates_manifest_directory(self, tmp_path):
        datasets = {"a": _fake_pair(tmp_path, "a"), "b": _fake_pair(tmp_path, "b")}
        out = tmp_path / "deep" / "dir" / "manifest.txt"
        emit_manifest(out, "a", datasets)
        assert out.is_file()
