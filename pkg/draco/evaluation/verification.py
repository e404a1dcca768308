"""
DRACO - Verification and Indexing Harness.

Consumes externally supplied matcher scores. A pose gate only ever lowers
scores to -inf; every metric here is computed over the (possibly) gated
scores with the accept rule "score >= t".

Reports:
    verification_report  -> EER, FNMR at FMR 1e-3 and 1e-4
    threshold_search     -> gate on the (trans, rot) grid with the lowest EER
    indexing_report      -> hit rate vs shortlist size / penetration
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DataError
from .gating import (
    DEFAULT_ROT_GRID,
    DEFAULT_TRANS_GRID,
    PoseGate,
    ScoredPair,
    apply_gate,
    gated_scores,
    labels,
    pair_differences,
    raw_scores,
)

logger = logging.getLogger(__name__)

FMR_TARGETS = (1e-3, 1e-4)


class DegenerateLabels(DataError, ValueError):
    """Only one of the genuine / impostor classes is present."""
    pass


class NoGenuineMate(DataError, ValueError):
    """A query has no genuine candidate in the gallery."""
    pass


# ============================================================================
# ROC / EER
# ============================================================================

@dataclass
class RocCurve:
    """
    Error rates per threshold, thresholds ascending.

    The first threshold accepts everything (fmr 1, fnmr 0) and the last one
    is +inf, which accepts nothing (fmr 0, fnmr 1).
    """
    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray


def split_scores(scores: np.ndarray, genuine: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    genuine = np.asarray(genuine, dtype=bool)
    return scores[genuine], scores[~genuine]


def _check_classes(genuine: np.ndarray, impostor: np.ndarray) -> None:
    if genuine.size == 0 or impostor.size == 0:
        raise DegenerateLabels(
            f"need genuine and impostor scores, got {genuine.size} genuine / {impostor.size} impostor"
        )


def compute_roc(genuine: Sequence[float], impostor: Sequence[float]) -> RocCurve:
    genuine = np.asarray(genuine, dtype=np.float64).ravel()
    impostor = np.asarray(impostor, dtype=np.float64).ravel()
    _check_classes(genuine, impostor)
    if np.isnan(genuine).any() or np.isnan(impostor).any():
        raise DataError("NaN matcher score")

    observed = np.unique(np.concatenate([genuine, impostor]))
    thresholds = np.concatenate([observed[observed < np.inf], [np.inf]])

    # count of scores >= t through the sorted arrays
    g_sorted = np.sort(genuine)
    i_sorted = np.sort(impostor)
    g_rejected = np.searchsorted(g_sorted, thresholds, side='left')
    i_accepted = impostor.size - np.searchsorted(i_sorted, thresholds, side='left')

    return RocCurve(
        thresholds=thresholds,
        fmr=i_accepted / impostor.size,
        fnmr=g_rejected / genuine.size,
    )


def eer_from_curve(curve: RocCurve) -> float:
    """Equal error rate by linear interpolation at the fmr/fnmr crossing."""
    diff = curve.fnmr - curve.fmr   # -1 at the first threshold, +1 at the last
    i = int(np.argmax(diff >= 0))
    if diff[i] == 0 or i == 0:
        return float(curve.fmr[i])
    d0, d1 = diff[i - 1], diff[i]
    alpha = -d0 / (d1 - d0)
    return float(curve.fmr[i - 1] + alpha * (curve.fmr[i] - curve.fmr[i - 1]))


def compute_eer(genuine: Sequence[float], impostor: Sequence[float]) -> float:
    return eer_from_curve(compute_roc(genuine, impostor))


def fnmr_at_fmr(curve: RocCurve, target: float) -> float:
    """
    FNMR at the operating point where FMR reaches target.

    Interpolates between the last threshold above the target FMR and the
    first one at or below it.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target FMR must be in [0, 1], got {target}")
    i = int(np.argmax(curve.fmr <= target))
    if curve.fmr[i] == target or i == 0:
        return float(curve.fnmr[i])
    f0, f1 = curve.fmr[i - 1], curve.fmr[i]
    alpha = (f0 - target) / (f0 - f1)
    return float(curve.fnmr[i - 1] + alpha * (curve.fnmr[i] - curve.fnmr[i - 1]))


def _fmr_key(target: float) -> str:
    return f"fnmr@fmr={target:g}"


def verification_report(
    pairs: Sequence[ScoredPair],
    gate: Optional[PoseGate] = None,
    fmr_targets: Sequence[float] = FMR_TARGETS,
) -> Dict[str, Any]:
    """
    EER and FNMR operating points over gated scores.

    The result contains metrics only, so the vacuous gate and no gate yield
    equal dicts.
    """
    scores = apply_gate(pairs, gate)
    genuine, impostor = split_scores(scores, labels(pairs))
    curve = compute_roc(genuine, impostor)

    report: Dict[str, Any] = {
        'pairs': int(scores.size),
        'genuine': int(genuine.size),
        'impostor': int(impostor.size),
        'gated_genuine': int(np.isneginf(genuine).sum()),
        'gated_impostor': int(np.isneginf(impostor).sum()),
        'eer': eer_from_curve(curve),
    }
    for target in fmr_targets:
        report[_fmr_key(target)] = fnmr_at_fmr(curve, target)
    return report


def roc_rows(curve: RocCurve) -> List[Dict[str, float]]:
    return [
        {'threshold': float(t), 'fmr': float(a), 'fnmr': float(b)}
        for t, a, b in zip(curve.thresholds, curve.fmr, curve.fnmr)
    ]


# ============================================================================
# Gate search
# ============================================================================

@dataclass
class GateSearchResult:
    gate: PoseGate
    eer: float
    ungated_eer: float
    grid: List[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.gate.to_dict(),
            'eer': self.eer,
            'ungated_eer': self.ungated_eer,
            'evaluated': len(self.grid),
        }


def threshold_search(
    pairs: Sequence[ScoredPair],
    trans_grid: Sequence[float] = DEFAULT_TRANS_GRID,
    rot_grid: Sequence[float] = DEFAULT_ROT_GRID,
) -> GateSearchResult:
    """
    Exhaustive search for the gate with the lowest EER.

    Ties go to the more permissive gate: larger th_trans first, then
    larger th_rot.
    """
    if len(trans_grid) == 0 or len(rot_grid) == 0:
        raise ValueError("threshold_search needs a nonempty grid")

    scores = raw_scores(pairs)
    genuine = labels(pairs)
    dt, dr = pair_differences(pairs)
    ungated = compute_eer(*split_scores(scores, genuine))

    best: Optional[Tuple[float, float, float]] = None
    grid = []
    for th_trans in sorted(trans_grid):
        for th_rot in sorted(rot_grid):
            gate = PoseGate(th_trans, th_rot)
            eer = compute_eer(*split_scores(gated_scores(scores, dt, dr, gate), genuine))
            grid.append({**gate.to_dict(), 'eer': eer})
            # ascending order: "<=" hands ties to the larger thresholds
            if best is None or eer <= best[0]:
                best = (eer, th_trans, th_rot)

    eer, th_trans, th_rot = best
    logger.debug(f"best gate ({th_trans}, {th_rot}) eer {eer:.4f}, ungated {ungated:.4f}")
    return GateSearchResult(gate=PoseGate(th_trans, th_rot), eer=eer, ungated_eer=ungated, grid=grid)


# ============================================================================
# Indexing
# ============================================================================

@dataclass
class IndexingCurve:
    gallery_size: int
    ranks: Dict[str, Optional[int]]
    k: np.ndarray
    hit_rate: np.ndarray

    @property
    def penetration(self) -> np.ndarray:
        return self.k / self.gallery_size

    def hit_rate_at(self, k: int) -> float:
        return float(self.hit_rate[min(k, self.gallery_size) - 1])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'queries': len(self.ranks),
            'gallery_size': self.gallery_size,
            'missed': sum(1 for r in self.ranks.values() if r is None),
            'hit_rate@1': self.hit_rate_at(1),
            'k': self.k.tolist(),
            'penetration': self.penetration.tolist(),
            'hit_rate': self.hit_rate.tolist(),
        }


def indexing_report(pairs: Sequence[ScoredPair], gate: Optional[PoseGate] = None) -> IndexingCurve:
    """
    Hit rate of the genuine mate within the top-k shortlist per query.

    Candidates are ranked by gated score, descending, ties by candidate id.
    Gated-out candidates never enter a shortlist, so a query whose mates are
    all gated counts as a miss at every k.
    """
    if len(pairs) == 0:
        raise DataError("indexing over no pairs")
    scores = apply_gate(pairs, gate)

    by_query: Dict[str, List[Tuple[float, str, bool]]] = defaultdict(list)
    for pair, score in zip(pairs, scores):
        by_query[pair.query_id].append((float(score), pair.candidate_id, bool(pair.genuine)))

    missing = sorted(q for q, rows in by_query.items() if not any(g for _, _, g in rows))
    if missing:
        raise NoGenuineMate(f"queries without a genuine gallery entry: {', '.join(missing)}")

    gallery_size = max(len(rows) for rows in by_query.values())
    ranks: Dict[str, Optional[int]] = {}
    for query in sorted(by_query):
        shortlist = sorted(
            (row for row in by_query[query] if row[0] != -np.inf),
            key=lambda row: (-row[0], row[1]),
        )
        ranks[query] = next((i + 1 for i, row in enumerate(shortlist) if row[2]), None)

    k = np.arange(1, gallery_size + 1)
    found = np.array([r for r in ranks.values() if r is not None], dtype=np.int64)
    hits = np.searchsorted(np.sort(found), k, side='right')
    return IndexingCurve(
        gallery_size=gallery_size,
        ranks=ranks,
        k=k,
        hit_rate=hits / len(ranks),
    )
