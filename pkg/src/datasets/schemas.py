from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator

from src.config import Config


class CorpusSpec(BaseModel):
    photo_dir: Path
    # None excludes the synthetic corpus (the no_synthetic ablation)
    synthetic_dir: Optional[Path] = None
    resize_to: Tuple[int, int] = Field(default_factory=lambda: Config.TRAIN_SIZE)
    shuffle_seed: int = 0
    # deterministic subset of the synthetic frames; 1.0 passes everything through
    synthetic_fraction: float = Field(default=1.0, gt=0, le=1)
    strict: bool = True

    @field_validator("resize_to")
    @classmethod
    def _positive_size(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        if value[0] <= 0 or value[1] <= 0:
            raise ValueError(f"resize_to must be positive, got {value}")
        return value


class SourceSummary(BaseModel):
    name: str
    directory: str
    count: int
    checksum: str
    skipped: List[str] = []


class DatasetManifest(BaseModel):
    shuffle_seed: int
    resize_to: Tuple[int, int]
    synthetic_fraction: float
    sources: Dict[str, SourceSummary]

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(source.count for source in self.sources.values())

    @property
    def total(self) -> int:
        return sum(self.counts)
