from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field

from . import __version__

log = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


class RunManifest(BaseModel):
    """Everything needed to rerun a command; no timestamps so reruns stay byte-identical."""

    command: str
    version: str = __version__
    seed: Optional[int] = None
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    options: Dict[str, Any] = Field(default_factory=dict)
    config: dict = Field(default_factory=dict)


def write_json(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    write_json(manifest.model_dump(mode="json"), path)
    log.debug("wrote %s", path)
    return path
