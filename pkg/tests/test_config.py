from pathlib import Path

import pytest

from cvloc.config import LOG_LEVEL_ENV, load_config
from cvloc.core.exceptions import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture(autouse=True)
def no_env_level(monkeypatch):
    monkeypatch.delenv(LOG_LEVEL_ENV, raising=False)


def test_defaults():
    cfg = load_config()
    assert cfg.runtime.log_level == "INFO"
    assert cfg.geometry.feature_stride == 8
    assert (cfg.correlation.levels, cfg.correlation.radius) == (4, 4)
    assert (cfg.flow.operator, cfg.flow.iters) == ("argmax", 12)
    assert cfg.schedule.alpha == 100.0
    assert cfg.eval.location == (1.0, 5.0)
    assert cfg.synth.grid_size == 64


def test_yaml_overlays_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("flow:\n  iters: 3\nsynth:\n  seed: 9\n")
    cfg = load_config(path)
    assert cfg.flow.iters == 3
    assert cfg.flow.operator == "argmax"
    assert cfg.synth.seed == 9
    assert cfg.synth.trials == 100


def test_empty_yaml_is_all_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert load_config(path) == load_config()


@pytest.mark.parametrize("text", [
    "flow: [unclosed\n",
    "- a\n- b\n",
    "flow:\n  operator: nearest\n",
    "correlation:\n  levels: 0\n",
    "synth:\n  outlier_fraction: 1.0\n",
])
def test_invalid_config(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file_and_unknown_preset(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    path = tmp_path / "p.yaml"
    path.write_text("geometry:\n  preset: atlantis\n")
    with pytest.raises(ConfigError, match="atlantis"):
        load_config(path)


def test_env_overrides_log_level(monkeypatch):
    monkeypatch.setenv(LOG_LEVEL_ENV, "DEBUG")
    assert load_config().runtime.log_level == "DEBUG"


def test_shipped_configs_load():
    synth = load_config(CONFIGS / "synth_64.yaml")
    assert synth.synth.seed == 7
    assert synth.runtime.workers == 4
    kitti = load_config(CONFIGS / "kitti.yaml")
    assert kitti.geometry.preset == "kitti"
    assert kitti.flow.operator == "gru"
