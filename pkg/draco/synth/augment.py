"""
DRACO - Sample Augmentation.

Draws a random crop (rotation and translation around the finger center)
from a plain fingerprint and runs both simulators on it. Rejected draws
are retried with a fresh draw up to a fixed limit.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DataError
from ..events import EventEmitter
from .foreground import foreground_mask
from .models import CAP_GRID, PATCH_SIZE, DualModalSample, PlainFingerprint
from .simulate import (
    FG_THRESHOLD,
    SampleRejected,
    SynthesisError,
    simulate_capacitive,
    simulate_plain_view,
    simulate_ridge_patch,
)

logger = logging.getLogger(__name__)

MAX_RETRIES = 20


class SynthesisExhausted(SynthesisError, DataError):
    """Every draw of one request was rejected."""
    pass


@dataclass
class SampleRequest:
    """One sample to generate from a plain fingerprint."""
    fp: PlainFingerprint
    sample_id: str
    mask: Optional[np.ndarray] = None
    patch_size: int = PATCH_SIZE
    cap_grid: int = CAP_GRID
    fg_threshold: float = FG_THRESHOLD
    max_retries: int = MAX_RETRIES
    teacher_size: Optional[int] = None

    def foreground(self) -> np.ndarray:
        if self.mask is None:
            self.mask = foreground_mask(self.fp.pixels)
        return self.mask


RejectCallback = Callable[[str, str, int], None]


def augment(
    request: SampleRequest,
    rot_range: float,
    trans_range: float,
    rng: np.random.Generator,
    on_reject: Optional[RejectCallback] = None,
) -> DualModalSample:
    """
    Generate one sample with a random crop.

    crop_angle ~ U(-rot_range, rot_range); crop_center = finger center +
    U(-trans_range, trans_range)^2. The label is exact for the drawn crop.

    Raises:
        SynthesisExhausted: after max_retries rejected draws
    """
    if not 0 <= rot_range <= 180:
        raise ValueError(f"rot_range must be in [0, 180], got {rot_range}")
    if trans_range < 0:
        raise ValueError(f"trans_range must be >= 0, got {trans_range}")

    fp = request.fp
    mask = request.foreground()
    last_reason = ""

    for attempt in range(1, request.max_retries + 1):
        angle = float(rng.uniform(-rot_range, rot_range))
        offset = rng.uniform(-trans_range, trans_range, size=2)
        center = (fp.center[0] + float(offset[0]), fp.center[1] + float(offset[1]))

        try:
            patch, label = simulate_ridge_patch(
                fp, center, angle,
                mask=mask,
                size=request.patch_size,
                fg_threshold=request.fg_threshold,
            )
            if not label.in_domain():
                raise SampleRejected(f"label {label.to_dict()} outside codec domain")
        except SampleRejected as e:
            last_reason = str(e)
            logger.debug(f"{request.sample_id} draw {attempt} rejected: {e}")
            if on_reject is not None:
                on_reject(request.sample_id, last_reason, attempt)
            continue

        cap = simulate_capacitive(
            fp, center, angle,
            grid=request.cap_grid,
            mask=mask,
            patch_size=request.patch_size,
        )
        view = None
        if request.teacher_size:
            view = simulate_plain_view(fp, center, angle, size=request.teacher_size)

        return DualModalSample(
            sample_id=request.sample_id,
            patch=patch,
            cap=cap,
            label=label,
            finger_id=fp.finger_id,
            impression_id=fp.impression_id,
            source=fp.name,
            params={
                'crop_center': [center[0], center[1]],
                'crop_angle': angle,
                'attempts': attempt,
                'rot_range': float(rot_range),
                'trans_range': float(trans_range),
            },
            plain_view=view,
        )

    raise SynthesisExhausted(
        f"{request.sample_id}: {request.max_retries} draws rejected (last: {last_reason})"
    )


@dataclass
class SynthesisStats:
    """Counters for one synthesis run."""
    requested: int = 0
    generated: int = 0
    rejected_draws: int = 0
    exhausted: int = 0

    @property
    def exhausted_rate(self) -> float:
        return self.exhausted / self.requested if self.requested else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'requested': self.requested,
            'generated': self.generated,
            'rejected_draws': self.rejected_draws,
            'exhausted': self.exhausted,
            'exhausted_rate': self.exhausted_rate,
        }


def sample_rng(seed: int, plain_index: int, k: int) -> np.random.Generator:
    """Independent stream per (seed, source, draw) so order does not matter."""
    return np.random.default_rng([seed, plain_index, k])


def synthesize_samples(
    plains: Sequence[PlainFingerprint],
    samples_per_plain: int,
    rot_range: float,
    trans_range: float,
    seed: int,
    patch_size: int = PATCH_SIZE,
    cap_grid: int = CAP_GRID,
    fg_threshold: float = FG_THRESHOLD,
    max_retries: int = MAX_RETRIES,
    teacher_size: Optional[int] = None,
    max_exhausted_rate: float = 0.1,
    emitter: Optional[EventEmitter] = None,
) -> Tuple[List[DualModalSample], SynthesisStats]:
    """
    Generate samples_per_plain samples from every plain fingerprint.

    Requests whose draws are all rejected are skipped and counted; the run
    aborts when their share exceeds max_exhausted_rate.
    """
    stats = SynthesisStats()
    samples: List[DualModalSample] = []
    failures: List[str] = []

    def on_reject(sample_id: str, reason: str, attempt: int) -> None:
        stats.rejected_draws += 1
        if emitter is not None:
            emitter.sample_rejected(sample_id, reason, attempt)

    for index, fp in enumerate(plains):
        request = SampleRequest(
            fp=fp,
            sample_id="",
            patch_size=patch_size,
            cap_grid=cap_grid,
            fg_threshold=fg_threshold,
            max_retries=max_retries,
            teacher_size=teacher_size,
        )
        name = fp.name or f"{fp.finger_id}_{fp.impression_id:02d}"
        for k in range(samples_per_plain):
            request.sample_id = f"{name}_{k:03d}"
            stats.requested += 1
            try:
                samples.append(augment(
                    request, rot_range, trans_range, sample_rng(seed, index, k), on_reject
                ))
                stats.generated += 1
            except SynthesisExhausted as e:
                stats.exhausted += 1
                failures.append(str(e))
                logger.warning(str(e))
        if emitter is not None:
            emitter.synth_progress(stats.generated, len(plains) * samples_per_plain, name)

    if stats.exhausted_rate > max_exhausted_rate:
        shown = "; ".join(failures[:5])
        raise SynthesisExhausted(
            f"{stats.exhausted}/{stats.requested} requests exhausted "
            f"({stats.exhausted_rate:.1%} > {max_exhausted_rate:.0%}): {shown}"
        )
    return samples, stats
