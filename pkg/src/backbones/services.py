from typing import Optional, Tuple

from src.backbones.depth import BufferDepthPredictor, ChannelMeanDepth, DepthPredictor, MidasDepthPredictor
from src.backbones.encoders import PerceptualEncoder, TinyEncoder, Vgg16Encoder
from src.config import Config
from src.core.exceptions import ConfigurationError

DEPTH_BACKENDS = ("midas", "channel_mean", "gbuffer")


def get_encoder(profile: Optional[str] = None, seed: int = 0) -> PerceptualEncoder:
    profile = profile or Config.BACKBONE_PROFILE
    if profile == "vgg16":
        return Vgg16Encoder()
    elif profile == "tiny":
        return TinyEncoder(seed=seed)
    raise ConfigurationError(f"Unknown encoder profile '{profile}'", {"available": ["vgg16", "tiny"]})


def get_depth_predictor(backend: Optional[str] = None,
                        size: Optional[Tuple[int, int]] = None) -> DepthPredictor:
    """``size`` is the frame size the gbuffer backend registers its colour buffers at."""
    backend = backend or Config.DEPTH_BACKEND
    if backend == "midas":
        return MidasDepthPredictor()
    elif backend == "channel_mean":
        return ChannelMeanDepth()
    elif backend == "gbuffer":
        if not Config.GBUFFER_DIR:
            raise ConfigurationError("The gbuffer depth backend needs GBUFFER_DIR set to a simulate run directory")
        return BufferDepthPredictor.from_run_directory(Config.GBUFFER_DIR, size)
    raise ConfigurationError(f"Unknown depth backend '{backend}'", {"available": list(DEPTH_BACKENDS)})


# 👇 Pick the backbone pair from the configured profiles
def load_backbones(profile: Optional[str] = None, depth_backend: Optional[str] = None,
                   seed: int = 0, size: Optional[Tuple[int, int]] = None) -> Tuple[PerceptualEncoder, DepthPredictor]:
    return get_encoder(profile, seed), get_depth_predictor(depth_backend, size)
