import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Union

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel

from src.core.exceptions import StorageError
from src.imaging.schemas import ColourSpace, FlowField, ImageTensor

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")

# Middlebury .flo magic number
FLO_TAG = 202021.25

PathLike = Union[str, Path]


def list_image_files(directory: PathLike, extensions: Iterable[str] = IMAGE_EXTENSIONS) -> List[Path]:
    """Image files of a directory in a stable, sorted order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise StorageError(f"Not a directory: {directory}", {"path": str(directory)})
    extensions = tuple(e.lower() for e in extensions)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in extensions)


def decode_image(path: PathLike) -> Image.Image:
    """Fully decode an image file to RGB; raises StorageError on bad data."""
    try:
        with Image.open(path) as img:
            img.load()
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise StorageError(f"Cannot decode image {path}: {e}", {"path": str(path)})


def pil_to_image(img: Image.Image) -> ImageTensor:
    array = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return ImageTensor.from_numpy(array, ColourSpace.RGB)


def image_to_pil(image: ImageTensor) -> Image.Image:
    array = image.clamped().to_numpy()
    array = np.rint(array * 255.0).astype(np.uint8)
    if array.shape[2] == 1:
        return Image.fromarray(array[:, :, 0])
    return Image.fromarray(array)


def read_image(path: PathLike, size: Optional[tuple] = None) -> ImageTensor:
    """Read an rgb image in [0, 1]; ``size`` = (height, width) resizes bilinearly."""
    img = decode_image(path)
    if size is not None:
        img = img.resize((size[1], size[0]), Image.BILINEAR)
    return pil_to_image(img)


def write_image(image: ImageTensor, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image_to_pil(image).save(path)
    return path


def write_flo(flow: FlowField, path: PathLike) -> Path:
    """Middlebury .flo: tag, width, height, then interleaved (u, v) float32 rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vectors = flow.vectors.detach().cpu().numpy().astype(np.float32)
    with open(path, "wb") as f:
        np.array([FLO_TAG], dtype=np.float32).tofile(f)
        np.array([flow.width, flow.height], dtype=np.int32).tofile(f)
        vectors.transpose(1, 2, 0).tofile(f)
    return path


def read_flo(path: PathLike) -> FlowField:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            tag = np.fromfile(f, np.float32, count=1)
            if tag.size != 1 or tag[0] != np.float32(FLO_TAG):
                raise StorageError(f"Not a .flo file: {path}", {"path": str(path)})
            width, height = (int(v) for v in np.fromfile(f, np.int32, count=2))
            data = np.fromfile(f, np.float32, count=2 * width * height)
    except OSError as e:
        raise StorageError(f"Cannot read flow {path}: {e}", {"path": str(path)})
    if data.size != 2 * width * height:
        raise StorageError(f"Truncated .flo file: {path}", {"path": str(path)})
    vectors = data.reshape(height, width, 2).transpose(2, 0, 1)
    return FlowField(vectors=torch.from_numpy(np.ascontiguousarray(vectors)))


def file_checksum(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write to a temp file then rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_name(path.name + ".tmp")
    with open(temp_path, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(temp_path, path)
    return path


def write_json(path: PathLike, data: Union[BaseModel, dict, list]) -> Path:
    if isinstance(data, BaseModel):
        text = data.model_dump_json(indent=2)
    else:
        text = json.dumps(data, indent=2, default=str)
    return atomic_write_bytes(path, text.encode("utf-8"))


def append_jsonl(path: PathLike, record: Union[BaseModel, dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = record.model_dump_json() if isinstance(record, BaseModel) else json.dumps(record, default=str)
    with open(path, "a", encoding="utf-8") as f:
        f.write(line + "\n")


def read_jsonl(path: PathLike) -> List[dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def truncate_jsonl(path: PathLike, keep: Callable[[dict], bool]) -> int:
    """Rewrite a JSONL file with only the records ``keep`` accepts; returns the number dropped."""
    records = read_jsonl(path)
    kept = [record for record in records if keep(record)]
    payload = "".join(json.dumps(record, default=str) + "\n" for record in kept)
    atomic_write_bytes(path, payload.encode("utf-8"))
    return len(records) - len(kept)


class LocalArtifactStore:
    """A run directory holding frames, flows, reports and manifests."""

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def save_image(self, image: ImageTensor, name: str, folder: str = "frames") -> Path:
        return write_image(image, self.path(folder, name))

    def save_flow(self, flow: FlowField, name: str, folder: str = "flows") -> Path:
        return write_flo(flow, self.path(folder, name))

    def save_mask(self, flow: FlowField, name: str, folder: str = "masks") -> Path:
        mask = flow.mask().to(torch.float32).unsqueeze(0)
        return write_image(ImageTensor(data=mask, colour_space=ColourSpace.LUMINANCE), self.path(folder, name))

    def save_json(self, data: Union[BaseModel, dict, list], name: str) -> Path:
        return write_json(self.path(name), data)

    def load_images(self, folder: str) -> List[ImageTensor]:
        return [read_image(p) for p in list_image_files(self.path(folder))]

    def load_flows(self, folder: str = "flows", mask_folder: Optional[str] = "masks") -> List[FlowField]:
        flow_paths = sorted(self.path(folder).glob("*.flo"))
        flows = []
        for flow_path in flow_paths:
            flow = read_flo(flow_path)
            mask_path = self.path(mask_folder, flow_path.stem + ".png") if mask_folder else None
            if mask_path is not None and mask_path.exists():
                mask = read_image(mask_path).data[0] > 0.5
                flow = FlowField(vectors=flow.vectors, validity_mask=mask)
            flows.append(flow)
        logger.info(f"Loaded {len(flows)} flow fields from {self.path(folder)}")
        return flows
