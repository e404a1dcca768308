"""
DRACO - Checkpoint I/O.

A checkpoint is a directory holding

    model.pt     weight archive (state_dict only, loaded with weights_only)
    model.json   sidecar: model config, codec tables, fusion strategy,
                 training provenance, weights sha256

Usage:
    save_checkpoint(model, Path("runs/train/best"), provenance={'seed': 0})
    model, meta = load_checkpoint(Path("runs/train/best"), expected_codec=CodecConfig())
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from ..config import CodecConfig, ModelConfig, file_sha256, to_plain
from ..errors import ConfigError, DataError
from .model import DracoNet

logger = logging.getLogger(__name__)

WEIGHTS_FILE = "model.pt"
SIDECAR_FILE = "model.json"
FORMAT_VERSION = 1


class CheckpointError(DataError):
    """Checkpoint missing, unreadable or inconsistent with its sidecar."""
    pass


class CodecMismatch(ConfigError):
    """Checkpoint codec tables differ from the ones the run expects."""
    pass


def checkpoint_hash(directory: Path) -> str:
    """sha256 of the weight archive; identifies a checkpoint in provenance chains."""
    path = Path(directory) / WEIGHTS_FILE
    if not path.exists():
        raise CheckpointError(f"no {WEIGHTS_FILE} in {directory}")
    return file_sha256(path)


def save_checkpoint(
    model: DracoNet,
    directory: Path,
    provenance: Optional[Dict[str, Any]] = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    weights_path = directory / WEIGHTS_FILE

    state = {k: v.detach().cpu() for k, v in model.state_dict().items()}
    torch.save(state, weights_path)

    sidecar = {
        'format': FORMAT_VERSION,
        'model': to_plain(model.config),
        'codec': to_plain(model.config.codec),
        'fusion_strategy': model.fusion_strategy.value,
        'modality': model.modality.value,
        'provenance': provenance or {},
        'weights_sha256': file_sha256(weights_path),
    }
    (directory / SIDECAR_FILE).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding='utf-8'
    )
    logger.debug(f"saved checkpoint {directory} ({sidecar['weights_sha256'][:12]})")
    return directory


def read_sidecar(directory: Path) -> Dict[str, Any]:
    path = Path(directory) / SIDECAR_FILE
    if not path.exists():
        raise CheckpointError(f"no {SIDECAR_FILE} in {directory}")
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: {e}") from e


def check_codec(found: CodecConfig, expected: CodecConfig, where: str = "checkpoint") -> None:
    """Hard error on any table difference; never reinitialize silently."""
    found_plain, expected_plain = to_plain(found), to_plain(expected)
    if found_plain != expected_plain:
        diffs = [
            f"{k}: {found_plain.get(k)} != {expected_plain.get(k)}"
            for k in sorted(expected_plain)
            if found_plain.get(k) != expected_plain.get(k)
        ]
        raise CodecMismatch(f"{where} codec tables differ from config ({'; '.join(diffs)})")


def load_checkpoint(
    directory: Path,
    expected_codec: Optional[CodecConfig] = None,
    map_location: str = "cpu",
) -> Tuple[DracoNet, Dict[str, Any]]:
    """Rebuild the model from its sidecar and load the weights."""
    directory = Path(directory)
    meta = read_sidecar(directory)
    try:
        config = ModelConfig.from_dict(meta['model'])
    except (KeyError, ConfigError) as e:
        raise CheckpointError(f"{directory}: bad model config in sidecar ({e})") from e

    if expected_codec is not None:
        check_codec(config.codec, expected_codec, where=str(directory))

    weights_path = directory / WEIGHTS_FILE
    if not weights_path.exists():
        raise CheckpointError(f"no {WEIGHTS_FILE} in {directory}")
    digest = file_sha256(weights_path)
    if meta.get('weights_sha256') and meta['weights_sha256'] != digest:
        raise CheckpointError(f"{weights_path} does not match the hash recorded in {SIDECAR_FILE}")

    model = DracoNet(config)
    state = torch.load(weights_path, map_location=map_location, weights_only=True)
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError(f"{weights_path}: {e}") from e
    model.eval()
    logger.debug(f"loaded {config.modality.value} checkpoint {directory}")
    return model, meta
