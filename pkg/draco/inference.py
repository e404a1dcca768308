"""
DRACO - Inference.

Runs a checkpoint over a written dataset or one (patch, cap) pair and
writes predictions.jsonl (plus predictions.jsonl.meta.json with the config
and input hashes):

    {"id": ..., "pose": {"x", "y", "theta"}, "weights": {"P", "F", "C"}, "decode_mode": "sum"}

A dual-modal checkpoint never falls back to a single branch: both inputs
are required.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import torch
from PIL import Image

from .codec import Pose
from .config import DecodeMode, Modality, PredictConfig, config_hash, file_sha256, to_plain
from .errors import DataError
from .evaluation.reports import (
    PREDICTIONS_FILE,
    prediction_record,
    render_pose_overlay,
    write_json,
    write_predictions,
    write_sidecar,
)
from .network import DracoNet, checkpoint_hash, load_checkpoint
from .network.encoder import ShapeMismatch
from .synth import read_dataset
from .synth.dataset import MANIFEST
from .training.data import SampleDataset, make_loader
from .training.trainer import forward_batch

logger = logging.getLogger(__name__)

SINGLE_ID = "single"


@dataclass
class PredictResult:
    out_dir: Path
    predictions_path: Path
    records: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.records)


def _read_image(path: Path, scale: float = 255.0) -> torch.Tensor:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input image not found: {path}")
    with Image.open(path) as img:
        pixels = np.array(img.convert('L'), dtype=np.float32) / scale
    return torch.from_numpy(pixels)[None, None]


def check_inputs(model: DracoNet, has_patch: bool, has_cap: bool) -> None:
    """Hard error when the checkpoint's modality needs an input that is missing."""
    modality = model.modality
    if modality in (Modality.DUAL, Modality.FP, Modality.PLAIN) and not has_patch:
        raise ShapeMismatch(f"{modality.value} checkpoint needs a ridge patch input")
    if modality in (Modality.DUAL, Modality.CAP) and not has_cap:
        raise ShapeMismatch(f"{modality.value} checkpoint needs a capacitive input")


def predict_batches(
    model: DracoNet,
    dataset: SampleDataset,
    decode_mode: DecodeMode,
    batch_size: int = 64,
    device: str = "cpu",
) -> List[Dict[str, Any]]:
    model = model.to(device).eval()
    records = []
    loader = make_loader(dataset, batch_size, shuffle=False, seed=0)
    with torch.no_grad():
        for batch in loader:
            out = forward_batch(model, batch, device)
            poses = model.codec.decode(out.final, decode_mode).cpu().double().numpy()
            weights = out.weights.cpu().double().numpy()
            for sample_id, pose, w in zip(batch['id'], poses, weights):
                records.append(prediction_record(sample_id, Pose(*pose), w, decode_mode.value))
    return records


def predict_single(
    model: DracoNet,
    patch: Optional[torch.Tensor],
    cap: Optional[torch.Tensor],
    decode_mode: DecodeMode,
) -> Dict[str, Any]:
    check_inputs(model, patch is not None, cap is not None)
    with torch.no_grad():
        if model.modality == Modality.CAP:
            out = model(cap=cap)
        else:
            out = model(patch, cap)
        pose = model.codec.decode(out.final, decode_mode)[0].double().numpy()
    return prediction_record(SINGLE_ID, Pose(*pose), out.weights[0].double().numpy(), decode_mode.value)


def run_predict(cfg: PredictConfig) -> PredictResult:
    """Predict over cfg.dataset, or over the single cfg.patch / cfg.cap pair."""
    model, meta = load_checkpoint(Path(cfg.checkpoint), map_location=cfg.device)
    decode_mode = DecodeMode(cfg.decode_mode)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    inputs: Dict[str, Any] = {'checkpoint_sha256': checkpoint_hash(Path(cfg.checkpoint))}
    samples = []
    if cfg.dataset:
        root = Path(cfg.dataset)
        need_plain = model.modality == Modality.PLAIN
        samples = read_dataset(root, load_plain=need_plain)
        if not samples:
            raise DataError(f"dataset {root} has no samples")
        inputs['manifest_sha256'] = file_sha256(root / MANIFEST)
        dataset = SampleDataset(samples, need_plain)
        records = predict_batches(model, dataset, decode_mode, cfg.batch_size, cfg.device)
    else:
        patch = _read_image(Path(cfg.patch)) if cfg.patch else None
        cap = _read_image(Path(cfg.cap)) if cfg.cap else None
        for key in ('patch', 'cap'):
            if getattr(cfg, key):
                inputs[f'{key}_sha256'] = file_sha256(Path(getattr(cfg, key)))
        records = [predict_single(model.to('cpu'), patch, cap, decode_mode)]

    predictions_path = write_predictions(records, out_dir / PREDICTIONS_FILE)
    stamp = {'config_hash': config_hash(cfg), 'inputs': inputs}
    write_sidecar(predictions_path, stamp)
    write_json({
        'config': to_plain(cfg),
        **stamp,
        'checkpoint_modality': meta.get('modality'),
        'count': len(records),
    }, out_dir / "predict.json")

    if cfg.overlays and samples:
        by_id = {r['id']: r for r in records}
        for sample in samples:
            render_pose_overlay(
                sample.patch.pixels,
                Pose.from_dict(by_id[sample.sample_id]['pose']),
                sample.label,
                out_dir / "overlays" / f"{sample.sample_id}.png",
            )

    logger.debug(f"wrote {len(records)} predictions to {predictions_path}")
    return PredictResult(out_dir=out_dir, predictions_path=predictions_path, records=records)
