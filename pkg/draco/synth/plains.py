"""
DRACO - Synthetic Plain Fingerprints.

Stand-in source prints for synthesis, tests and desk-scale experiments.
Each finger gets its own shape and ridge parameters; impressions of the
same finger vary pose, pressure and noise.

Shape (finger frame, y toward the knuckle):
    - elliptic contact area, rounded at the fingertip
    - cut flat on the knuckle side
Texture:
    - arch ridges, phase = ly + k * lx^2, period 8-11 px

Source directory layout:
    <dir>/<name>.png          8-bit grayscale, 500 ppi
    <dir>/plains.jsonl        optional {file, finger_id, impression_id, pose}
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
from PIL import Image

from ..codec import Pose
from ..errors import DataError
from .models import PlainFingerprint

logger = logging.getLogger(__name__)

PLAINS_MANIFEST = "plains.jsonl"
BACKGROUND = 255.0


@dataclass
class FingerParams:
    """Per-finger shape and texture parameters."""
    half_width: float = 140.0       # lateral semi-axis, px
    half_length: float = 190.0      # semi-axis toward the fingertip, px
    knuckle_cut: float = 120.0      # flat cut distance below the center, px
    curvature: float = 0.003        # arch bend k
    period: float = 9.5             # ridge period, px
    phase: float = 0.0              # ridge phase offset, px
    contrast: float = 100.0         # ridge amplitude, gray levels

    @classmethod
    def sample(cls, rng: np.random.Generator) -> 'FingerParams':
        return cls(
            half_width=float(rng.uniform(120.0, 155.0)),
            half_length=float(rng.uniform(170.0, 205.0)),
            knuckle_cut=float(rng.uniform(100.0, 135.0)),
            curvature=float(rng.uniform(0.0015, 0.004)),
            period=float(rng.uniform(8.0, 11.0)),
            phase=float(rng.uniform(0.0, 11.0)),
            contrast=float(rng.uniform(85.0, 110.0)),
        )

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def synth_plain_fingerprint(
    rng: np.random.Generator,
    finger_params: FingerParams,
    pose: Pose,
    size: int = 512,
    pressure: float = 1.0,
    noise: float = 3.0,
    finger_id: str = "0",
    impression_id: int = 0,
    name: str = "",
) -> PlainFingerprint:
    """Render one plain impression of a finger at the given pose."""
    p = finger_params
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    yy, xx = np.meshgrid(offsets, offsets, indexing='ij')

    # Image offsets to finger frame: rotate by -theta about the finger center
    a = math.radians(pose.theta)
    dx, dy = xx - pose.x, yy - pose.y
    lx = math.cos(a) * dx + math.sin(a) * dy
    ly = -math.sin(a) * dx + math.cos(a) * dy

    half_w = p.half_width * pressure
    half_l = p.half_length * pressure
    inside = ((lx / half_w) ** 2 + (ly / half_l) ** 2 <= 1.0) & (ly <= p.knuckle_cut * pressure)

    ridge_phase = ly + p.curvature * lx ** 2 + p.phase
    ridges = 127.5 + p.contrast * np.cos(2.0 * math.pi * ridge_phase / p.period)

    image = np.where(inside, ridges, BACKGROUND)
    image = image + rng.normal(0.0, noise, size=image.shape)
    pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8)

    return PlainFingerprint(
        pixels=pixels,
        pose=pose,
        finger_id=finger_id,
        impression_id=impression_id,
        name=name,
    )


def generate_plains(
    fingers: int,
    impressions: int,
    seed: int,
    size: int = 512,
    trans_jitter: float = 16.0,
    rot_jitter: float = 20.0,
) -> List[PlainFingerprint]:
    """
    A seeded population of synthetic plains.

    The first impression of every finger is standardized (pose 0, 0, 0);
    later impressions jitter the pose within the given ranges.
    """
    rng = np.random.default_rng(seed)
    plains = []
    for f in range(fingers):
        params = FingerParams.sample(rng)
        finger_id = f"f{f:04d}"
        for i in range(impressions):
            if i == 0:
                pose = Pose(0.0, 0.0, 0.0)
                pressure = 1.0
            else:
                pose = Pose(
                    x=float(rng.uniform(-trans_jitter, trans_jitter)),
                    y=float(rng.uniform(-trans_jitter, trans_jitter)),
                    theta=float(rng.uniform(-rot_jitter, rot_jitter)),
                )
                pressure = float(rng.uniform(0.95, 1.05))
            plains.append(synth_plain_fingerprint(
                rng, params, pose,
                size=size,
                pressure=pressure,
                finger_id=finger_id,
                impression_id=i,
                name=f"{finger_id}_{i:02d}",
            ))
    logger.debug(f"generated {len(plains)} plains ({fingers} fingers x {impressions})")
    return plains


def write_plains(plains: Sequence[PlainFingerprint], directory: Path) -> Path:
    """Write PNGs plus the plains manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for fp in plains:
        name = fp.name or f"{fp.finger_id}_{fp.impression_id:02d}"
        file_name = f"{name}.png"
        Image.fromarray(fp.pixels).save(directory / file_name)
        record = {
            'file': file_name,
            'finger_id': fp.finger_id,
            'impression_id': fp.impression_id,
            'pose': fp.pose.to_dict(),
        }
        lines.append(json.dumps(record, sort_keys=True))
    manifest = directory / PLAINS_MANIFEST
    manifest.write_text("".join(line + "\n" for line in lines), encoding='utf-8')
    return manifest


def _default_record(stem: str) -> Dict[str, Any]:
    parts = stem.split('_')
    impression = int(parts[1]) if len(parts) > 1 and parts[1].isdigit() else 0
    return {'finger_id': parts[0], 'impression_id': impression, 'pose': None}


def read_plains(directory: Path) -> List[PlainFingerprint]:
    """
    Read a plain-fingerprint source directory.

    Images without a manifest record get the standardized pose and a
    finger id taken from the file stem up to the first underscore.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"plain fingerprint directory not found: {directory}")
    files = sorted(directory.glob("*.png"))
    if not files:
        raise DataError(f"no plain fingerprints (*.png) in {directory}")

    records: Dict[str, Dict[str, Any]] = {}
    manifest = directory / PLAINS_MANIFEST
    if manifest.is_file():
        for n, line in enumerate(manifest.read_text(encoding='utf-8').splitlines(), 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                records[record['file']] = record
            except (json.JSONDecodeError, KeyError) as e:
                raise DataError(f"{manifest}:{n}: bad record ({e})")

    plains = []
    for path in files:
        record = records.get(path.name) or _default_record(path.stem)
        with Image.open(path) as img:
            pixels = np.asarray(img.convert('L'), dtype=np.uint8)
        pose = Pose.from_dict(record['pose']) if record.get('pose') else Pose(0.0, 0.0, 0.0)
        try:
            plains.append(PlainFingerprint(
                pixels=pixels,
                pose=pose,
                finger_id=str(record.get('finger_id', path.stem.split('_')[0])),
                impression_id=int(record.get('impression_id', 0)),
                name=path.stem,
            ))
        except ValueError as e:
            raise DataError(f"{path}: {e}")
    logger.debug(f"read {len(plains)} plains from {directory}")
    return plains
