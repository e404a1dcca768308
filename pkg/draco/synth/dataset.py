"""
DRACO - Dataset Storage.

Directory layout:
    <dir>/manifest.jsonl        one record per sample, sorted keys
    <dir>/dataset.json          provenance (resolved config, hashes)
    <dir>/patches/<id>.png      ridge patch, 8-bit
    <dir>/cap/<id>.png          capacitive grid x 255, 8-bit
    <dir>/plain/<id>.png        optional teacher view

Record fields:
    id, finger_id, impression_id, source, label {x, y, theta},
    files {patch, cap[, plain]}, cap_origin, foreground_ratio, params

Nothing time-dependent is written, so identical inputs produce
byte-identical datasets.
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from PIL import Image

from ..codec import Pose
from ..errors import DataError
from .models import CapacitiveImage, DualModalSample, RidgePatch
from .simulate import SynthesisError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"
PROVENANCE = "dataset.json"
REQUIRED_FIELDS = ('id', 'finger_id', 'label', 'files')

T = TypeVar('T')


class ManifestSchemaMismatch(SynthesisError, DataError):
    """Manifest record is malformed or points to a missing file."""
    pass


def _save_png(pixels: np.ndarray, path: Path) -> None:
    Image.fromarray(pixels).save(path)


def _load_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert('L'), dtype=np.uint8)


def cap_to_uint8(cap: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(cap * 255.0), 0, 255).astype(np.uint8)


def write_dataset(
    samples: Sequence[DualModalSample],
    directory: Path,
    provenance: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write samples and their manifest; returns the manifest path."""
    directory = Path(directory)
    try:
        (directory / "patches").mkdir(parents=True, exist_ok=True)
        (directory / "cap").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create dataset directory {directory}: {e}")

    lines = []
    for sample in samples:
        files = {
            'patch': f"patches/{sample.sample_id}.png",
            'cap': f"cap/{sample.sample_id}.png",
        }
        _save_png(sample.patch.pixels, directory / files['patch'])
        _save_png(cap_to_uint8(sample.cap.pixels), directory / files['cap'])
        if sample.plain_view is not None:
            (directory / "plain").mkdir(exist_ok=True)
            files['plain'] = f"plain/{sample.sample_id}.png"
            _save_png(sample.plain_view, directory / files['plain'])

        record = sample.record()
        record['files'] = files
        lines.append(json.dumps(record, sort_keys=True))

    manifest = directory / MANIFEST
    manifest.write_text("".join(line + "\n" for line in lines), encoding='utf-8')
    if provenance is not None:
        (directory / PROVENANCE).write_text(
            json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding='utf-8'
        )
    logger.debug(f"wrote {len(lines)} samples to {directory}")
    return manifest


def read_manifest(directory: Path) -> List[Dict[str, Any]]:
    """Parse and check manifest records without loading images."""
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.is_file():
        raise DataError(f"dataset manifest not found: {manifest}")

    records = []
    for n, line in enumerate(manifest.read_text(encoding='utf-8').splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestSchemaMismatch(f"{manifest}:{n}: invalid JSON ({e})")
        missing = [f for f in REQUIRED_FIELDS if f not in record]
        if missing:
            raise ManifestSchemaMismatch(f"{manifest}:{n}: record missing fields {missing}")
        for key in ('patch', 'cap'):
            rel = record['files'].get(key)
            if rel is None or not (directory / rel).is_file():
                raise ManifestSchemaMismatch(
                    f"record '{record['id']}': {key} file missing ({rel})"
                )
        records.append(record)
    return records


def load_record(
    directory: Path,
    record: Dict[str, Any],
    load_plain: bool = False,
) -> DualModalSample:
    """Load one manifest record into a sample (capacitive values / 255)."""
    directory = Path(directory)
    files = record['files']
    plain_view = None
    if load_plain:
        rel = files.get('plain')
        if rel is None or not (directory / rel).is_file():
            raise ManifestSchemaMismatch(f"record '{record['id']}': plain view missing")
        plain_view = _load_png(directory / rel)

    origin = tuple(record.get('cap_origin', (65.5, 65.5)))
    return DualModalSample(
        sample_id=str(record['id']),
        patch=RidgePatch(
            pixels=_load_png(directory / files['patch']),
            foreground_ratio=float(record.get('foreground_ratio', 1.0)),
        ),
        cap=CapacitiveImage(
            pixels=_load_png(directory / files['cap']).astype(np.float64) / 255.0,
            origin=(float(origin[0]), float(origin[1])),
        ),
        label=Pose.from_dict(record['label']),
        finger_id=str(record['finger_id']),
        impression_id=int(record.get('impression_id', 0)),
        source=str(record.get('source', "")),
        params=dict(record.get('params', {})),
        plain_view=plain_view,
    )


def read_dataset(directory: Path, load_plain: bool = False) -> List[DualModalSample]:
    """Exact inverse of write_dataset (up to PNG quantization of cap values)."""
    return [load_record(directory, r, load_plain) for r in read_manifest(directory)]


def split_by_finger(
    items: Sequence[T],
    fraction: float,
    seed: int,
    key: Optional[Callable[[T], str]] = None,
) -> Tuple[List[T], List[T]]:
    """
    Finger-disjoint (train, val) split.

    A seeded permutation of the sorted finger ids puts round(fraction * n)
    fingers (at least one when fraction > 0 and there are two or more
    fingers) into validation. Item order is preserved.
    """
    key = key or (lambda item: item['finger_id'] if isinstance(item, dict) else item.finger_id)
    fingers = sorted({str(key(item)) for item in items})
    if fraction <= 0 or len(fingers) < 2:
        return list(items), []
    n_val = min(len(fingers) - 1, max(1, int(round(fraction * len(fingers)))))
    order = np.random.default_rng(seed).permutation(len(fingers))
    val_fingers = {fingers[i] for i in order[:n_val]}
    train = [item for item in items if str(key(item)) not in val_fingers]
    val = [item for item in items if str(key(item)) in val_fingers]
    return train, val
