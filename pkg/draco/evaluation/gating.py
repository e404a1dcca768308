"""
DRACO - Pose Gating.

A pose gate keeps a comparison only when the estimated poses of query and
candidate agree: center distance <= th_trans AND |wrap(dtheta)| <= th_rot.
Gated-out pairs get a score of -inf before any verification or indexing
metric is computed.

Usage:
    kept = pose_gate(pose_a, pose_b, th_trans=60, th_rot=40)
    scores = apply_gate(pairs, PoseGate(60, 40))
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from ..codec import Pose
from .metrics import angle_difference

DEFAULT_TRANS_GRID = tuple(float(t) for t in range(10, 201, 10)) + (math.inf,)
DEFAULT_ROT_GRID = tuple(float(r) for r in range(10, 181, 10))


@dataclass
class ScoredPair:
    """One external matcher comparison with the poses estimated for both sides."""
    query_id: str
    candidate_id: str
    score: float
    genuine: bool
    pose_query: Pose
    pose_candidate: Pose


@dataclass(frozen=True)
class PoseGate:
    th_trans: float
    th_rot: float

    def __post_init__(self):
        if self.th_trans < 0 or self.th_rot < 0:
            raise ValueError(f"gate thresholds must be >= 0, got ({self.th_trans}, {self.th_rot})")

    @property
    def is_vacuous(self) -> bool:
        return math.isinf(self.th_trans) and self.th_rot >= 180.0

    def keeps(self, a: Pose, b: Pose) -> bool:
        return pose_gate(a, b, self.th_trans, self.th_rot)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'th_trans': "inf" if math.isinf(self.th_trans) else self.th_trans,
            'th_rot': self.th_rot,
        }


VACUOUS_GATE = PoseGate(math.inf, 180.0)


def pose_gate(a: Pose, b: Pose, th_trans: float, th_rot: float) -> bool:
    """True when the pair is kept."""
    if th_trans < 0 or th_rot < 0:
        raise ValueError("gate thresholds must be >= 0")
    distance = math.hypot(a.x - b.x, a.y - b.y)
    return distance <= th_trans and float(angle_difference(a.theta, b.theta)) <= th_rot


def pair_differences(pairs: Sequence[ScoredPair]) -> Tuple[np.ndarray, np.ndarray]:
    """Center distance and absolute angle difference per pair."""
    if len(pairs) == 0:
        return np.zeros(0), np.zeros(0)
    q = np.array([[p.pose_query.x, p.pose_query.y, p.pose_query.theta] for p in pairs], dtype=np.float64)
    c = np.array([[p.pose_candidate.x, p.pose_candidate.y, p.pose_candidate.theta] for p in pairs],
                 dtype=np.float64)
    return np.hypot(q[:, 0] - c[:, 0], q[:, 1] - c[:, 1]), angle_difference(q[:, 2], c[:, 2])


def raw_scores(pairs: Sequence[ScoredPair]) -> np.ndarray:
    return np.array([p.score for p in pairs], dtype=np.float64)


def labels(pairs: Sequence[ScoredPair]) -> np.ndarray:
    return np.array([bool(p.genuine) for p in pairs], dtype=bool)


def apply_gate(pairs: Sequence[ScoredPair], gate: Optional[PoseGate] = None) -> np.ndarray:
    """Scores with gated-out pairs set to -inf; no gate returns the raw scores."""
    scores = raw_scores(pairs)
    if gate is None:
        return scores
    dt, dr = pair_differences(pairs)
    return gated_scores(scores, dt, dr, gate)


def gated_scores(
    scores: np.ndarray,
    dt: np.ndarray,
    dr: np.ndarray,
    gate: PoseGate,
) -> np.ndarray:
    kept = (dt <= gate.th_trans) & (dr <= gate.th_rot)
    return np.where(kept, scores, -np.inf)

