"""
Ingestion of the photo and synthetic-frame corpora into one shuffled stream.
"""

import hashlib
import logging
import math
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset, Subset

from src.config import Config
from src.core.exceptions import DomainError, EpochExhausted, IngestionError, StorageError
from src.core.storage import decode_image, file_checksum, list_image_files, read_image
from src.datasets.schemas import CorpusSpec, DatasetManifest, SourceSummary
from src.imaging.schemas import ImageTensor

logger = logging.getLogger(__name__)

PHOTO = "photo"
SYNTHETIC = "synthetic"


def _scan_source(name: str, directory: Path, strict: bool) -> Tuple[List[Path], List[str]]:
    """Decodable files of one source, plus the paths that failed to decode."""
    try:
        paths = list_image_files(directory)
    except StorageError:
        raise IngestionError(f"Unreadable {name} corpus", [str(directory)])

    good, bad = [], []
    for path in paths:
        try:
            decode_image(path)
            good.append(path)
        except StorageError:
            bad.append(str(path))

    if bad and strict:
        raise IngestionError(f"Undecodable files in the {name} corpus", bad)
    if bad:
        logger.warning(f"Skipping {len(bad)} undecodable {name} file(s): {bad}")
    if not good:
        raise IngestionError(f"Empty {name} corpus", bad or [str(directory)])
    return good, bad


def _subset(paths: List[Path], fraction: float, seed: int) -> List[Path]:
    if fraction >= 1.0:
        return paths
    keep = max(1, math.ceil(fraction * len(paths)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, len(paths)]))
    chosen = sorted(rng.permutation(len(paths))[:keep].tolist())
    return [paths[i] for i in chosen]


def _source_checksum(paths: Sequence[Path]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        digest.update(path.name.encode())
        digest.update(file_checksum(path).encode())
    return digest.hexdigest()


class MixedDataset(Dataset):
    """Photos followed by synthetic frames; order is applied per epoch."""

    def __init__(self, items: List[Tuple[str, Path]], resize_to: Tuple[int, int],
                 shuffle_seed: int, manifest: DatasetManifest):
        self.items = items
        self.resize_to = tuple(resize_to)
        self.shuffle_seed = shuffle_seed
        self.manifest = manifest

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> torch.Tensor:
        _, path = self.items[index]
        return read_image(path, size=self.resize_to).data

    def epoch_order(self, epoch: int = 0) -> List[int]:
        """Permutation for one epoch, seeded by (shuffle_seed, epoch)."""
        rng = np.random.default_rng(np.random.SeedSequence([self.shuffle_seed, epoch]))
        return rng.permutation(len(self.items)).tolist()

    def ordered_paths(self, epoch: int = 0) -> List[Path]:
        return [self.items[i][1] for i in self.epoch_order(epoch)]

    def steps_per_epoch(self, batch_size: int) -> int:
        return math.ceil(len(self) / batch_size)

    @property
    def sources(self) -> set:
        return {source for source, _ in self.items}

    def without(self, source: str) -> "MixedDataset":
        """The same stream with one source's items removed."""
        items = [item for item in self.items if item[0] != source]
        sources = {name: summary for name, summary in self.manifest.sources.items() if name != source}
        manifest = self.manifest.model_copy(update={"sources": sources})
        return MixedDataset(items, self.resize_to, self.shuffle_seed, manifest)


def build_mixed_dataset(spec: CorpusSpec) -> MixedDataset:
    photos, photo_bad = _scan_source(PHOTO, spec.photo_dir, spec.strict)
    sources = {
        PHOTO: SourceSummary(name=PHOTO, directory=str(spec.photo_dir), count=len(photos),
                             checksum=_source_checksum(photos), skipped=photo_bad),
    }
    items = [(PHOTO, p) for p in photos]

    if spec.synthetic_dir is not None:
        frames, frame_bad = _scan_source(SYNTHETIC, spec.synthetic_dir, spec.strict)
        frames = _subset(frames, spec.synthetic_fraction, spec.shuffle_seed)
        sources[SYNTHETIC] = SourceSummary(name=SYNTHETIC, directory=str(spec.synthetic_dir), count=len(frames),
                                           checksum=_source_checksum(frames), skipped=frame_bad)
        items += [(SYNTHETIC, p) for p in frames]
    else:
        logger.info("Synthetic corpus excluded")

    manifest = DatasetManifest(
        shuffle_seed=spec.shuffle_seed,
        resize_to=spec.resize_to,
        synthetic_fraction=spec.synthetic_fraction,
        sources=sources,
    )
    logger.info(f"Built mixed dataset: {dict(zip(sources, manifest.counts))}")
    return MixedDataset(items, spec.resize_to, spec.shuffle_seed, manifest)


def iterate_batches(dataset: MixedDataset, batch_size: int, epoch: int = 0,
                    workers: Optional[int] = None, start_batch: int = 0) -> Iterator[torch.Tensor]:
    """N x 3 x H x W batches in the epoch's order; the last batch may be short.

    Workers only prefetch: DataLoader without shuffling keeps the order fixed.
    """
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    order = dataset.epoch_order(epoch)[start_batch * batch_size:]
    workers = Config.DATA_WORKERS if workers is None else workers
    loader = DataLoader(Subset(dataset, order), batch_size=batch_size, shuffle=False, num_workers=workers)
    yield from loader


class BatchStream:
    """Pull-style handle over one epoch at a time."""

    def __init__(self, dataset: MixedDataset, epoch: int = 0):
        self.dataset = dataset
        self.epoch = epoch
        self._order = dataset.epoch_order(epoch)
        self._cursor = 0

    def next_batch(self, batch_size: int) -> List[ImageTensor]:
        if batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {batch_size}")
        if self._cursor >= len(self._order):
            raise EpochExhausted(self.epoch)
        indices = self._order[self._cursor:self._cursor + batch_size]
        self._cursor += len(indices)
        return [ImageTensor.rgb(self.dataset[i]) for i in indices]

    def next_epoch(self) -> None:
        self.epoch += 1
        self._order = self.dataset.epoch_order(self.epoch)
        self._cursor = 0


def next_batch(handle: BatchStream, batch_size: int) -> List[ImageTensor]:
    return handle.next_batch(batch_size)
