import json
from pathlib import Path
import pytest
from pydantic import ValidationError
from app.config import load_run_config
from app.enums import LearnerKindEnum
from app.exceptions import ConfigurationError


def write_config(tmp_path, data) -> Path:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return path


def test_defaults(monkeypatch):
    monkeypatch.delenv("SALESCAST_SEED", raising=False)
    config = load_run_config()
    assert config.seed == 2015
    assert config.synth.seed == 2015
    assert config.backtest.leads == [1, 5, 16]
    assert config.collinearity.target_ratio == 0.8
    assert config.importance.iterations == 100


def test_precedence(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"version": 1, "seed": 1, "workers": 3})
    monkeypatch.setenv("SALESCAST_SEED", "2")
    config = load_run_config(path)
    assert (config.seed, config.workers) == (2, 3)
    assert load_run_config(path, seed=4).seed == 4


def test_pinned_generator_seed(tmp_path, monkeypatch):
    monkeypatch.delenv("SALESCAST_SEED", raising=False)
    path = write_config(tmp_path, {"version": 1, "seed": 1, "synth": {"seed": 99}})
    assert load_run_config(path).synth.seed == 99


def test_nested_blocks(tmp_path):
    path = write_config(
        tmp_path,
        {"version": 1, "train": {"kind": "RF", "lead_time": 3}, "search": {"learners": {"RF": {"n_trees": 10}}}},
    )
    config = load_run_config(path)
    assert config.train.kind == LearnerKindEnum.RF
    assert config.search.learners.for_kind(LearnerKindEnum.RF) == {"n_trees": 10}


def test_unknown_key(tmp_path):
    with pytest.raises(ValidationError):
        load_run_config(write_config(tmp_path, {"version": 1, "backtest": {"lead": [1]}}))


@pytest.mark.parametrize("data", [{"seed": 1}, {"version": 2}])
def test_version_is_checked(tmp_path, data):
    with pytest.raises((ConfigurationError, ValidationError)):
        load_run_config(write_config(tmp_path, data))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError) as error:
        load_run_config(tmp_path / "absent.json")
    assert error.value.exit_code == 2
    assert "absent.json" in str(error.value)


def test_invalid_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{version: 1")
    with pytest.raises(ConfigurationError):
        load_run_config(path)
