"""
DRACO - Report Files.

Readers and writers for the evaluation file formats:

    predictions.jsonl   {"id", "pose": {x, y, theta}, "weights": {P, F, C}, "decode_mode"}
    scores.csv          query_id, candidate_id, score, genuine
    *.json              summaries, sorted keys, "inf" for infinite thresholds
    *.csv / *.png       ECDF and ROC curves, pose overlays
    <name>.meta.json    config hash, input hashes and sha256 of a CSV or predictions file
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..codec import Pose
from ..config import file_sha256
from ..errors import DataError
from ..network.experts import EXPERTS
from ..synth.dataset import MANIFEST, read_manifest
from .gating import ScoredPair
from .metrics import ecdf

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.jsonl"
SIDECAR_SUFFIX = ".meta.json"
SCORE_COLUMNS = ('query_id', 'candidate_id', 'score', 'genuine')
TRUE_FLAGS = {'1', 'true', 'yes', 'genuine', 'g'}
FALSE_FLAGS = {'0', 'false', 'no', 'impostor', 'i'}

OVERLAY_CANVAS = 512
ARROW_LENGTH = 60
GT_COLOR = (40, 180, 60)
PRED_COLOR = (220, 40, 40)


class JoinMismatch(DataError, ValueError):
    """Ids do not join across evaluation inputs."""

    def __init__(self, message: str, missing: Sequence[str] = ()):
        self.missing = list(missing)
        super().__init__(message)


# ============================================================================
# JSON / CSV
# ============================================================================

def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def write_json(data: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding='utf-8')
    return path


def write_csv(rows: Sequence[Dict[str, Any]], path: Path, columns: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _jsonable(row.get(k)) for k in columns})
    return path


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_sidecar(path: Path, stamp: Dict[str, Any]) -> Path:
    """
    Write <name>.meta.json next to an artifact.

    The stamp carries the producing config hash and input hashes, and the
    artifact's own sha256 is added to it.
    """
    path = Path(path)
    return write_json({**stamp, 'artifact': path.name, 'artifact_sha256': file_sha256(path)},
                      sidecar_path(path))


# ============================================================================
# Predictions
# ============================================================================

def prediction_record(
    sample_id: str,
    pose: Pose,
    weights: Sequence[float],
    decode_mode: str,
) -> Dict[str, Any]:
    return {
        'id': sample_id,
        'pose': pose.to_dict(),
        'weights': {name: float(w) for name, w in zip(EXPERTS, weights)},
        'decode_mode': decode_mode,
    }


def write_predictions(records: Iterable[Dict[str, Any]], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, sort_keys=True) for r in records]
    path.write_text("".join(line + "\n" for line in lines), encoding='utf-8')
    return path


def read_predictions(path: Path) -> Dict[str, Pose]:
    """Predicted poses by sample id."""
    path = Path(path)
    if path.is_dir():
        path = path / PREDICTIONS_FILE
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")

    poses: Dict[str, Pose] = {}
    for n, line in enumerate(path.read_text(encoding='utf-8').splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            poses[str(record['id'])] = Pose.from_dict(record['pose'])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"{path}:{n}: bad prediction record ({e})")
    return poses


def read_ground_truth(path: Path) -> Dict[str, Pose]:
    """Label poses by sample id from a dataset directory or a predictions-format file."""
    path = Path(path)
    if path.is_dir() and (path / MANIFEST).is_file():
        return {str(r['id']): Pose.from_dict(r['label']) for r in read_manifest(path)}
    return read_predictions(path)


def join_poses(
    predicted: Dict[str, Pose],
    truth: Dict[str, Pose],
) -> Tuple[List[str], List[Pose], List[Pose]]:
    """Pair predictions with ground truth; every id must be on both sides."""
    only_pred = sorted(set(predicted) - set(truth))
    only_truth = sorted(set(truth) - set(predicted))
    if only_pred or only_truth:
        missing = only_pred + only_truth
        shown = ', '.join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise JoinMismatch(
            f"{len(only_pred)} predictions without ground truth, "
            f"{len(only_truth)} ground-truth samples without prediction: {shown}",
            missing,
        )
    ids = sorted(truth)
    return ids, [predicted[i] for i in ids], [truth[i] for i in ids]


# ============================================================================
# Scores
# ============================================================================

def _flag(value: str, where: str) -> bool:
    text = value.strip().lower()
    if text in TRUE_FLAGS:
        return True
    if text in FALSE_FLAGS:
        return False
    raise DataError(f"{where}: genuine flag '{value}' is not a boolean")


def read_scores_csv(path: Path) -> List[Dict[str, Any]]:
    """Rows of (query_id, candidate_id, score, genuine) from an external matcher."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"scores file not found: {path}")

    rows = []
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        missing = [c for c in SCORE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for n, raw in enumerate(reader, 2):
            where = f"{path}:{n}"
            try:
                score = float(raw['score'])
            except ValueError:
                raise DataError(f"{where}: score '{raw['score']}' is not a number")
            if math.isnan(score):
                raise DataError(f"{where}: NaN score")
            rows.append({
                'query_id': raw['query_id'].strip(),
                'candidate_id': raw['candidate_id'].strip(),
                'score': score,
                'genuine': _flag(raw['genuine'], where),
            })
    logger.debug(f"read {len(rows)} scored pairs from {path}")
    return rows


def scored_pairs(rows: Sequence[Dict[str, Any]], poses: Dict[str, Pose]) -> List[ScoredPair]:
    """Attach estimated poses to score rows; raises JoinMismatch on unknown ids."""
    unknown = sorted({
        sid for row in rows for sid in (row['query_id'], row['candidate_id']) if sid not in poses
    })
    if unknown:
        raise JoinMismatch(
            f"{len(unknown)} scored ids have no predicted pose: {', '.join(unknown[:10])}",
            unknown,
        )
    return [
        ScoredPair(
            query_id=row['query_id'],
            candidate_id=row['candidate_id'],
            score=row['score'],
            genuine=row['genuine'],
            pose_query=poses[row['query_id']],
            pose_candidate=poses[row['candidate_id']],
        )
        for row in rows
    ]


# ============================================================================
# Curves and images
# ============================================================================

def write_ecdf(values: Sequence[float], csv_path: Path, png_path: Optional[Path] = None,
               label: str = "error") -> Path:
    xs, fractions = ecdf(values)
    write_csv([{'value': float(x), 'fraction': float(p)} for x, p in zip(xs, fractions)],
              csv_path, columns=('value', 'fraction'))
    if png_path is not None:
        plot_curves({label: (xs, fractions)}, png_path, xlabel=label, ylabel="fraction", step=True)
    return Path(csv_path)


def plot_curves(
    curves: Dict[str, Tuple[np.ndarray, np.ndarray]],
    path: Path,
    xlabel: str = "",
    ylabel: str = "",
    step: bool = False,
    logx: bool = False,
) -> Path:
    """Static line plot of one or more named curves."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    for name, (xs, ys) in curves.items():
        if step:
            ax.step(xs, ys, where='post', label=name)
        else:
            ax.plot(xs, ys, label=name)
    if logx:
        ax.set_xscale('log')
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(curves) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _arrow(draw: ImageDraw.ImageDraw, origin: Tuple[float, float], pose: Pose, color) -> None:
    ox, oy = origin
    x, y = ox + pose.x, oy + pose.y
    a = math.radians(pose.theta)
    # fingertip direction: (0, -1) rotated by theta
    tx, ty = x + ARROW_LENGTH * math.sin(a), y - ARROW_LENGTH * math.cos(a)
    draw.ellipse([x - 4, y - 4, x + 4, y + 4], outline=color, width=2)
    draw.line([x, y, tx, ty], fill=color, width=3)
    head = math.radians(25)
    for side in (-1, 1):
        b = a + math.pi + side * head
        draw.line([tx, ty, tx + 14 * math.sin(b), ty - 14 * math.cos(b)], fill=color, width=3)


def render_pose_overlay(patch: np.ndarray, pred: Pose, gt: Optional[Pose], path: Path) -> Path:
    """
    Debug image: the ridge patch in the middle of a larger canvas with the
    predicted pose (red) and, when given, the ground truth (green).
    """
    patch = np.asarray(patch)
    if patch.dtype != np.uint8:
        patch = np.clip(np.rint(patch * 255.0 if patch.max() <= 1.0 else patch), 0, 255).astype(np.uint8)
    size = patch.shape[0]
    canvas = Image.new('RGB', (OVERLAY_CANVAS, OVERLAY_CANVAS), (235, 235, 235))
    corner = (OVERLAY_CANVAS - size) // 2
    canvas.paste(Image.fromarray(patch).convert('RGB'), (corner, corner))

    origin = (corner + (size - 1) / 2.0, corner + (size - 1) / 2.0)
    draw = ImageDraw.Draw(canvas)
    draw.rectangle([corner, corner, corner + size - 1, corner + size - 1], outline=(90, 90, 90))
    if gt is not None:
        _arrow(draw, origin, gt, GT_COLOR)
    _arrow(draw, origin, pred, PRED_COLOR)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)
    return path
