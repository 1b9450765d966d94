from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Tuple


class Settings(BaseSettings):
    # --- App Config ---
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"
    DEVICE: str = "cpu"
    DEFAULT_SEED: int = 0
    OUTPUT_DIR: str = "runs"

    # --- Backbones ---
    BACKBONE_DIR: str = "weights"  # vgg16 / MiDaS weight files live here
    BACKBONE_PROFILE: str = "vgg16"  # vgg16 | tiny
    DEPTH_BACKEND: str = "midas"  # midas | channel_mean | gbuffer
    GBUFFER_DIR: str = ""  # a simulate run directory, for the gbuffer depth backend
    MIDAS_MODEL: str = "MiDaS_small"
    PERCEPTUAL_BACKEND: str = "lpips"  # lpips | encoder

    # --- Image processing ---
    DOG_SIGMA_1: float = 1.0
    DOG_SIGMA_2: float = 1.6
    TRAIN_RESOLUTION: int = 360
    SIFID_EPSILON: float = 1e-6

    # --- Export / data loading ---
    ONNX_OPSET: int = 17
    DATA_WORKERS: int = 0

    @property
    def DOG_SIGMAS(self) -> Tuple[float, float]:
        return (self.DOG_SIGMA_1, self.DOG_SIGMA_2)

    @property
    def TRAIN_SIZE(self) -> Tuple[int, int]:
        return (self.TRAIN_RESOLUTION, self.TRAIN_RESOLUTION)

    model_config = SettingsConfigDict(
        env_file=".env",
        extra="ignore"
    )


Config = Settings()
