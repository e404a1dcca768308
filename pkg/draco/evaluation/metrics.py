"""
DRACO - Pose Accuracy Metrics.

trans_err = Euclidean distance between centers (px)
rot_err   = |wrap(theta_pred - theta_gt)| in [0, 180] degrees
"""

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from ..codec import Pose
from ..errors import DataError

PERCENTILES = (50, 90, 95)


class EmptyInput(DataError, ValueError):
    """Metric requested over no values."""
    pass


@dataclass(frozen=True)
class PoseError:
    trans_err: float
    rot_err: float

    def to_dict(self) -> Dict[str, float]:
        return {'trans_err': self.trans_err, 'rot_err': self.rot_err}


def angle_difference(a, b):
    """|wrap(a - b)| into [0, 180]; works on scalars and arrays."""
    d = np.remainder(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64) + 180.0, 360.0)
    return np.abs(d - 180.0)


def pose_error(pred: Pose, gt: Pose) -> PoseError:
    return PoseError(
        trans_err=float(np.hypot(pred.x - gt.x, pred.y - gt.y)),
        rot_err=float(angle_difference(pred.theta, gt.theta)),
    )


def pose_errors(pred: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized form over (N, 3) arrays of (x, y, theta)."""
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    trans = np.hypot(pred[:, 0] - gt[:, 0], pred[:, 1] - gt[:, 1])
    rot = angle_difference(pred[:, 2], gt[:, 2])
    return trans, rot


def summarize(errors: Sequence[PoseError]) -> Dict[str, Any]:
    """Means, medians and percentiles of a nonempty error list."""
    if len(errors) == 0:
        raise EmptyInput("no pose errors to summarize")
    trans = np.array([e.trans_err for e in errors], dtype=np.float64)
    rot = np.array([e.rot_err for e in errors], dtype=np.float64)
    summary: Dict[str, Any] = {
        'count': int(trans.size),
        'trans_mean': float(trans.mean()),
        'rot_mean': float(rot.mean()),
        'trans_median': float(np.median(trans)),
        'rot_median': float(np.median(rot)),
    }
    for q in PERCENTILES:
        summary[f'trans_p{q}'] = float(np.percentile(trans, q))
        summary[f'rot_p{q}'] = float(np.percentile(rot, q))
    return summary


def ecdf(values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Right-continuous empirical CDF.

    Returns distinct sorted values and the fraction of samples <= each.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyInput("ecdf of an empty sample")
    xs, counts = np.unique(values, return_counts=True)
    return xs, np.cumsum(counts) / values.size
