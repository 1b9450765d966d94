import json
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest
import torch
from PIL import Image

from src.backbones.depth import ChannelMeanDepth
from src.backbones.encoders import LinearTestEncoder, TinyEncoder
from src.imaging.schemas import ImageTensor

GOLDEN_DIR = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def thresholds() -> dict:
    """Pilot-calibrated thresholds for the acceptance experiments."""
    with open(GOLDEN_DIR / "thresholds.json", "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def make_image() -> Callable[..., ImageTensor]:
    """Factory for seeded random rgb images."""
    def _make(height: int = 16, width: int = 16, seed: int = 0, dtype=torch.float32) -> ImageTensor:
        g = torch.Generator().manual_seed(seed)
        return ImageTensor.rgb(torch.rand(3, height, width, generator=g, dtype=dtype))
    return _make


@pytest.fixture(scope="session")
def tiny_encoder() -> TinyEncoder:
    return TinyEncoder(seed=0)


@pytest.fixture(scope="session")
def tiny_encoder_double() -> TinyEncoder:
    return TinyEncoder(seed=0).double()


@pytest.fixture
def linear_encoder() -> LinearTestEncoder:
    return LinearTestEncoder()


@pytest.fixture
def depth_stub() -> ChannelMeanDepth:
    return ChannelMeanDepth()


def write_png(path: Path, array: np.ndarray) -> Path:
    """Save an H x W x 3 uint8 array."""
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)
    return path


def write_corpus(directory: Path, count: int, seed: int = 0, size=(24, 32), prefix: str = "img") -> List[Path]:
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        array = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
        paths.append(write_png(directory / f"{prefix}_{i:03d}.png", array))
    return paths


@pytest.fixture
def photo_dir(tmp_path) -> Path:
    write_corpus(tmp_path / "photos", 10, seed=1, prefix="photo")
    return tmp_path / "photos"


@pytest.fixture
def synthetic_dir(tmp_path) -> Path:
    write_corpus(tmp_path / "synthetic", 5, seed=2, prefix="frame")
    return tmp_path / "synthetic"


@pytest.fixture
def style_image_path(tmp_path) -> Path:
    """Diagonal stripes: a style with strong, simple Gram statistics."""
    ys, xs = np.mgrid[0:48, 0:48]
    stripes = ((xs + ys) // 4) % 2
    array = np.stack([stripes * 230, (1 - stripes) * 200, np.full_like(stripes, 60)], axis=-1).astype(np.uint8)
    return write_png(tmp_path / "style.png", array)
