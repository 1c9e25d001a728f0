from typing import Dict, Optional

from pydantic import BaseModel

from ..core.exceptions import ConfigError


class DatasetPreset(BaseModel):
    meters_per_pixel: float
    # satellite patch edge, in meters where published, otherwise in pixels
    coverage_m: Optional[float] = None
    coverage_px: Optional[int] = None
    camera_height_m: Optional[float] = None


PRESETS: Dict[str, DatasetPreset] = {
    "kitti": DatasetPreset(meters_per_pixel=0.2, coverage_m=100.0, camera_height_m=1.65),
    "ford": DatasetPreset(meters_per_pixel=0.2, coverage_m=100.0),
    "vigor_newyork": DatasetPreset(meters_per_pixel=0.113, coverage_px=640),
    "vigor_sanfrancisco": DatasetPreset(meters_per_pixel=0.118, coverage_px=640),
    "vigor_chicago": DatasetPreset(meters_per_pixel=0.111, coverage_px=640),
    "vigor_seattle": DatasetPreset(meters_per_pixel=0.101, coverage_px=640),
    "oxford": DatasetPreset(meters_per_pixel=0.0924, coverage_m=55.0),
}


def get_preset(name: str) -> DatasetPreset:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown dataset preset {name!r}; choose from {sorted(PRESETS)}") from None


def satellite_size_px(preset: DatasetPreset) -> int:
    if preset.coverage_px is not None:
        return preset.coverage_px
    return int(round(preset.coverage_m / preset.meters_per_pixel))
