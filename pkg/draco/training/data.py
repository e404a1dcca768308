"""
DRACO - Training Data.

Two torch datasets yield the same item layout:

    {'id': str, 'patch': (1, P, P), 'cap': (1, G, G), 'pose': (3,), ['plain': (1, T, T)]}

SampleDataset wraps an already written dataset; SynthesisDataset draws a
fresh augmentation per (seed, epoch, index) from plain fingerprints.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from ..synth import CAP_GRID, PATCH_SIZE, DualModalSample, PlainFingerprint, SampleRequest, augment
from ..synth.augment import MAX_RETRIES
from ..synth.simulate import FG_THRESHOLD

logger = logging.getLogger(__name__)


def sample_to_item(sample: DualModalSample, need_plain: bool = False) -> Dict[str, Any]:
    """Tensors in [0, 1]; labels as float32 (x, y, theta)."""
    item = {
        'id': sample.sample_id,
        'patch': torch.from_numpy(sample.patch.pixels.astype(np.float32) / 255.0).unsqueeze(0),
        'cap': torch.from_numpy(np.asarray(sample.cap.pixels, dtype=np.float32)).unsqueeze(0),
        'pose': torch.tensor(sample.label.as_tuple(), dtype=torch.float32),
    }
    if need_plain:
        if sample.plain_view is None:
            raise ValueError(f"sample '{sample.sample_id}' has no plain view")
        view = sample.plain_view.astype(np.float32) / 255.0
        item['plain'] = torch.from_numpy(view).unsqueeze(0)
    return item


class SampleDataset(Dataset):
    """
    Fixed samples (typically read_dataset output).

    Items are the written crops, unchanged from epoch to epoch. Pose
    augmentation happens when the dataset is synthesized, or on the fly
    in SynthesisDataset.
    """

    def __init__(self, samples: Sequence[DualModalSample], need_plain: bool = False):
        self.samples = list(samples)
        self.need_plain = need_plain

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Dict[str, Any]:
        return sample_to_item(self.samples[index], self.need_plain)

    def set_epoch(self, epoch: int) -> None:
        pass


class SynthesisDataset(Dataset):
    """
    On-the-fly augmentation from plain fingerprints.

    Item ``index`` of epoch ``epoch`` comes from plain ``index % len(plains)``
    with rng seeded by (seed, epoch, index), so a run is reproducible
    regardless of loader order.
    """

    def __init__(
        self,
        plains: Sequence[PlainFingerprint],
        samples_per_epoch: int,
        rot_range: float,
        trans_range: float,
        seed: int = 0,
        patch_size: int = PATCH_SIZE,
        cap_grid: int = CAP_GRID,
        fg_threshold: float = FG_THRESHOLD,
        max_retries: int = MAX_RETRIES,
        teacher_size: Optional[int] = None,
    ):
        if not plains:
            raise ValueError("SynthesisDataset needs at least one plain fingerprint")
        self.requests: List[SampleRequest] = [
            SampleRequest(
                fp=fp,
                sample_id=fp.name,
                patch_size=patch_size,
                cap_grid=cap_grid,
                fg_threshold=fg_threshold,
                max_retries=max_retries,
                teacher_size=teacher_size,
            )
            for fp in plains
        ]
        self.samples_per_epoch = samples_per_epoch
        self.rot_range = rot_range
        self.trans_range = trans_range
        self.seed = seed
        self.epoch = 0
        logger.debug(f"synthesis dataset: {len(self.requests)} plains, {samples_per_epoch} draws per epoch")

    def __len__(self) -> int:
        return self.samples_per_epoch

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def draw(self, index: int) -> DualModalSample:
        request = self.requests[index % len(self.requests)]
        rng = np.random.default_rng([self.seed, self.epoch, index])
        sample = augment(request, self.rot_range, self.trans_range, rng)
        sample.sample_id = f"{request.sample_id}_e{self.epoch:03d}_{index:05d}"
        return sample

    def __getitem__(self, index: int) -> Dict[str, Any]:
        return sample_to_item(self.draw(index), need_plain=self.requests[0].teacher_size is not None)


def make_loader(
    dataset: Dataset,
    batch_size: int,
    shuffle: bool,
    seed: int,
    epoch: int = 0,
) -> DataLoader:
    """Single-process loader; the shuffle order depends only on (seed, epoch)."""
    generator = torch.Generator()
    generator.manual_seed(int(seed) * 1_000_003 + int(epoch))
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator if shuffle else None,
        num_workers=0,
        drop_last=False,
    )
