from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .bench.metrics import Thresholds
from .bench.synth import SynthConfig
from .core.exceptions import ConfigError
from .geometry.presets import get_preset
from .supervision import TrainSchedule

LOG_LEVEL_ENV = "CVLOC_LOG_LEVEL"


class RuntimeConfig(BaseModel):
    log_level: str = "INFO"
    workers: int = Field(1, ge=1)


class GeometryConfig(BaseModel):
    feature_stride: int = Field(8, ge=1)
    preset: Optional[str] = None
    height_m: Optional[float] = None


class CorrelationConfig(BaseModel):
    levels: int = Field(4, ge=1)
    radius: int = Field(4, ge=0)


class FlowConfig(BaseModel):
    operator: Literal["argmax", "gru"] = "argmax"
    iters: int = Field(12, ge=1)
    temperature: float = Field(1.0, gt=0.0)


class AppConfig(BaseModel):
    runtime: RuntimeConfig = RuntimeConfig()
    geometry: GeometryConfig = GeometryConfig()
    correlation: CorrelationConfig = CorrelationConfig()
    flow: FlowConfig = FlowConfig()
    schedule: TrainSchedule = TrainSchedule()
    eval: Thresholds = Thresholds()
    synth: SynthConfig = SynthConfig()


def load_config(path: str | Path | None = None) -> AppConfig:
    """
    Defaults, overlaid by the YAML file when given. A `.env` next to the
    working directory may set CVLOC_LOG_LEVEL; nothing else is read from it.
    """
    load_dotenv()
    data = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError(f"{path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")

    try:
        cfg = AppConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path or 'defaults'}: {e}") from e

    if cfg.geometry.preset is not None:
        get_preset(cfg.geometry.preset)

    level = os.getenv(LOG_LEVEL_ENV)
    if level:
        cfg.runtime.log_level = level
    return cfg
