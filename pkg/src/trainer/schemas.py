import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Iterable, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from src.config import Config
from src.core.exceptions import ConfigurationError
from src.datasets.schemas import CorpusSpec
from src.objective.schemas import LossWeights

ABLATIONS = ("dog", "depth", "synthetic")


class AblationFlags(BaseModel):
    model_config = ConfigDict(frozen=True)

    no_dog: bool = False
    no_depth: bool = False
    no_synthetic: bool = False

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "AblationFlags":
        names = set(names)
        unknown = names - set(ABLATIONS)
        if unknown:
            raise ConfigurationError(f"Unknown ablation(s) {sorted(unknown)}", {"available": list(ABLATIONS)})
        return cls(**{f"no_{name}": True for name in names})


class TrainConfig(BaseModel):
    epochs: int = Field(default=2, gt=0)
    batch_size: int = Field(default=2, gt=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    optimiser: Literal["adam"] = "adam"
    # Adam moment coefficients (torch defaults)
    betas: Tuple[float, float] = (0.9, 0.999)
    weights: LossWeights = LossWeights()
    ablations: AblationFlags = AblationFlags()
    seed: int = 0
    # 0 writes only the final checkpoint
    checkpoint_every: int = Field(default=0, ge=0)
    # cycles epochs until this many steps when set
    max_steps: Optional[int] = Field(default=None, gt=0)

    def effective_weights(self) -> LossWeights:
        """Weights after the ablation switches zero their terms."""
        dropped = []
        if self.ablations.no_dog:
            dropped.append("dog")
        if self.ablations.no_depth:
            dropped.append("depth")
        return self.weights.without(*dropped)

    def effective_corpus(self, corpus: CorpusSpec) -> CorpusSpec:
        """Corpus after the no_synthetic switch drops the synthetic frames."""
        if self.ablations.no_synthetic and corpus.synthetic_dir is not None:
            return corpus.model_copy(update={"synthetic_dir": None})
        return corpus


class TrainerState(BaseModel):
    step: int = 0
    epoch: int = 0
    seed: int = 0
    shuffle_seed: int = 0
    config_hash: str = ""


class TrainLogRecord(BaseModel):
    step: int
    epoch: int
    content: float
    style: float
    depth: float
    dog: float
    total: float
    wall_ms: float


class BackboneConfig(BaseModel):
    profile: str = Field(default_factory=lambda: Config.BACKBONE_PROFILE)
    depth_backend: str = Field(default_factory=lambda: Config.DEPTH_BACKEND)
    seed: int = 0


class RunConfig(BaseModel):
    """The document passed to ``train --config``; JSON or TOML."""

    corpus: CorpusSpec
    style_image: Path
    training: TrainConfig = TrainConfig()
    backbones: BackboneConfig = BackboneConfig()

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        try:
            if path.suffix.lower() == ".toml":
                with open(path, "rb") as f:
                    data = tomllib.load(f)
            else:
                with open(path, "r", encoding="utf-8") as f:
                    data = json.load(f)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigurationError(f"Cannot parse config file {path}: {e}", {"path": str(path)})

        config = cls.model_validate(data)
        # relative paths are relative to the config file
        base = path.parent
        corpus = config.corpus
        updates = {"photo_dir": base / corpus.photo_dir}
        if corpus.synthetic_dir is not None:
            updates["synthetic_dir"] = base / corpus.synthetic_dir
        return config.model_copy(update={
            "corpus": corpus.model_copy(update=updates),
            "style_image": base / config.style_image,
        })
