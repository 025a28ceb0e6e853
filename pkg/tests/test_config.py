"""Config file parsing and validation ranges."""
from __future__ import annotations

import pytest

from ista import ConfigError, PipelineConfig, parse_config


def write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return path


def test_defaults_are_valid():
    cfg = PipelineConfig()
    assert cfg.validate() is cfg
    assert cfg.codebook_size == 32
    assert cfg.variance_target == 0.8
    assert cfg.min_pair_count == 100
    assert cfg.keep_ratio == 0.4
    assert cfg.final_dim == 512
    assert cfg.whiten is True


def test_parse_overrides(tmp_path):
    cfg = parse_config(write(tmp_path, """
# retrieval run
codebook_size = 8
variance_target = 0.9
whiten = no
seed = 42
train_dir = /data/train
"""))
    assert cfg.codebook_size == 8
    assert cfg.variance_target == 0.9
    assert cfg.whiten is False
    assert cfg.seed == 42
    assert cfg.train_dir == "/data/train"
    assert cfg.alpha == 0.5  # untouched default


@pytest.mark.parametrize("text", ["true", "True", "yes", "on", "1"])
def test_bool_truthy(tmp_path, text):
    assert parse_config(write(tmp_path, f"whiten = {text}\n")).whiten is True


@pytest.mark.parametrize("text", ["false", "False", "no", "off", "0"])
def test_bool_falsy(tmp_path, text):
    assert parse_config(write(tmp_path, f"whiten = {text}\n")).whiten is False


def test_parse_rejects_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        parse_config(write(tmp_path, "wrds = 8\n"))


def test_parse_rejects_duplicate_key(tmp_path):
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(write(tmp_path, "seed = 1\nseed = 2\n"))


def test_parse_rejects_bad_syntax(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "just some words\n"))
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "seed = not_a_number\n"))
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "whiten = maybe\n"))


def test_parse_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "absent.conf")


@pytest.mark.parametrize("line", [
    "codebook_size = 0",
    "radius = 0",
    "variance_target = 0",
    "variance_target = 1.5",
    "alpha = 0",
    "alpha = 2",
    "keep_ratio = 0",
    "keep_ratio = 1.1",
    "final_dim = 0",
    "min_pair_count = 0",
    "eps = -1",
    "threads = 0",
    "max_iters = 0",
    "sample_cap = 0",
])
def test_validation_ranges(tmp_path, line):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, line + "\n"))
