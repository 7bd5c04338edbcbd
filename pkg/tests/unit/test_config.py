"""Unit tests for run config parsing and the resolved-config echo."""

from __future__ import annotations

import json

import pytest

from nioperator.config import RESOLVED_CONFIG_NAME, RunConfig, json_pointer, load_config, parse_config
from nioperator.errors import ConfigError, UsageError
from nioperator.synthetic import DatasetSpec, build_classification_dataset, save_recording


pytestmark = pytest.mark.unit

MINIMAL = {"tp_values": [1, 3], "seeds": [0]}


class TestJsonPointer:
    def test_nested(self):
        assert json_pointer(("model", "d_model")) == "/model/d_model"

    def test_escapes(self):
        assert json_pointer(("a/b", "c~d", 0)) == "/a~1b/c~0d/0"


class TestLoadConfig:
    def test_unknown_key_points_at_it(self, write_config):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config({**MINIMAL, "learningrate": 0.1}))
        assert excinfo.value.pointer == "/learningrate"
        assert "unknown key" in str(excinfo.value)

    def test_nested_type_mismatch(self, write_config):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config({**MINIMAL, "model": {"d_model": "wide"}}))
        assert excinfo.value.pointer == "/model/d_model"

    @pytest.mark.parametrize(
        ("override", "pointer"),
        [
            ({"tp_values": ["1", "10"]}, "/tp_values/0"),
            ({"epochs": "5"}, "/epochs"),
            ({"learning_rate": "0.01"}, "/learning_rate"),
            ({"seeds": [True]}, "/seeds/0"),
            ({"model": {"d_model": 4.0}}, "/model/d_model"),
            ({"solver": {"max_iters": False}}, "/solver/max_iters"),
        ],
    )
    def test_numeric_strings_and_bools_are_rejected(self, write_config, override, pointer):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config({**MINIMAL, **override}))
        assert excinfo.value.pointer == pointer

    def test_integer_literal_for_a_float_is_accepted(self, write_config):
        config = load_config(write_config({**MINIMAL, "learning_rate": 1, "dataset": {"noise_std": 0}}))
        assert config.learning_rate == 1.0
        assert config.dataset.noise_std == 0.0

    def test_missing_required_key(self, write_config):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config({"seeds": [0]}))
        assert excinfo.value.pointer == "/tp_values"

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"tp_values": [1,', encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_config(tmp_path / "absent.json")

    def test_missing_dataset_file(self, write_config):
        with pytest.raises(ConfigError) as excinfo:
            load_config(write_config({**MINIMAL, "dataset": {"path": "nowhere.niot"}}))
        assert excinfo.value.pointer == "/dataset/path"

    def test_relative_paths_follow_the_config_file(self, tmp_path, write_config):
        save_recording(tmp_path / "data.niot", build_classification_dataset(DatasetSpec(n_voxels=4, n_blocks=2, block_len=3), 0))
        config = load_config(write_config({
            **MINIMAL,
            "output_dir": "runs/a",
            "checkpoint": "model.niot",
            "dataset": {"path": "data.niot"},
        }))
        assert config.output_dir == str((tmp_path / "runs" / "a").resolve())
        assert config.checkpoint == str((tmp_path / "model.niot").resolve())
        assert config.dataset.path == str((tmp_path / "data.niot").resolve())

    def test_load_writes_nothing(self, tmp_path, write_config):
        load_config(write_config(MINIMAL))
        assert not (tmp_path / "out").exists()


class TestParseConfig:
    def test_resolved_config_has_every_default(self, tmp_path, write_config):
        config = parse_config(write_config(MINIMAL))
        resolved = json.loads((tmp_path / "out" / RESOLVED_CONFIG_NAME).read_text(encoding="utf-8"))
        assert resolved["tp_values"] == [1, 3]
        assert resolved["solver"]["max_iters"] == 8
        assert resolved["model"]["d_model"] == 16
        assert resolved["dataset"]["noise_std"] == 0.5
        assert resolved["knn_neighbors"] == 5
        assert RunConfig.model_validate(resolved) == config

    def test_stride_defaults_to_half_window(self, write_config):
        config = parse_config(write_config(MINIMAL))
        assert [config.stride_for(tp) for tp in (1, 3, 20)] == [1, 1, 10]

    def test_tp_values_must_be_positive(self, write_config):
        with pytest.raises(ConfigError):
            parse_config(write_config({**MINIMAL, "tp_values": [0, 2]}))
