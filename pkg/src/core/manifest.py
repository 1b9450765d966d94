import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import torch
from pydantic import BaseModel, Field

from src.core.storage import write_json

MANIFEST_FILE = "manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest(BaseModel):
    """One per CLI run; enough to reproduce the run's artifacts."""

    command: str
    argv: List[str] = []
    config_hash: Optional[str] = None
    seeds: Dict[str, int] = {}
    backbones: Dict[str, str] = {}
    artifacts: Dict[str, str] = {}
    metrics: Dict[str, float] = {}
    started_at: str = Field(default_factory=_now)
    wall_clock_s: float = 0.0
    tool_version: str = ""
    status: Literal["ok", "failed"] = "ok"
    exit_code: int = 0
    # type and message of the exception that ended a failed run
    error: Optional[Dict[str, str]] = None
    torch_version: str = Field(default_factory=lambda: torch.__version__)
    python_version: str = Field(default_factory=platform.python_version)

    def add_artifact(self, name: str, path: Union[str, Path]) -> None:
        self.artifacts[name] = str(path)


def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    return write_json(Path(out_dir) / MANIFEST_FILE, manifest)
