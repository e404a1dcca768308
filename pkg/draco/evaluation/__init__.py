"""
DRACO - Evaluation.

Pose accuracy, ECDF curves and the pose-gated verification / indexing
harness over externally supplied matcher scores.

Architecture:
    evaluation/
    ├── metrics.py       # pose_error, summarize, ecdf
    ├── gating.py        # ScoredPair, PoseGate, pose_gate, apply_gate
    ├── verification.py  # ROC, EER, FNMR@FMR, threshold_search, indexing_report
    ├── reports.py       # predictions / scores / JSON / CSV / PNG files
    ├── runner.py        # run_eval report bundle
    └── benchmark.py     # parameter count and inference latency

Usage:
    from draco.evaluation import verification_report, threshold_search

    search = threshold_search(pairs)
    print(verification_report(pairs, search.gate)['eer'])
"""

from .metrics import (
    PERCENTILES,
    EmptyInput,
    PoseError,
    angle_difference,
    ecdf,
    pose_error,
    pose_errors,
    summarize,
)

from .gating import (
    DEFAULT_ROT_GRID,
    DEFAULT_TRANS_GRID,
    VACUOUS_GATE,
    PoseGate,
    ScoredPair,
    apply_gate,
    pose_gate,
)

from .verification import (
    FMR_TARGETS,
    DegenerateLabels,
    GateSearchResult,
    IndexingCurve,
    NoGenuineMate,
    RocCurve,
    compute_eer,
    compute_roc,
    fnmr_at_fmr,
    indexing_report,
    threshold_search,
    verification_report,
)

from .reports import (
    JoinMismatch,
    prediction_record,
    read_ground_truth,
    read_predictions,
    read_scores_csv,
    render_pose_overlay,
    scored_pairs,
    write_predictions,
)

from .runner import EvalResult, run_eval
from .benchmark import benchmark


__all__ = [
    # Errors
    'EmptyInput',
    'DegenerateLabels',
    'NoGenuineMate',
    'JoinMismatch',
    # Pose accuracy
    'PERCENTILES',
    'PoseError',
    'angle_difference',
    'ecdf',
    'pose_error',
    'pose_errors',
    'summarize',
    # Gating
    'DEFAULT_ROT_GRID',
    'DEFAULT_TRANS_GRID',
    'VACUOUS_GATE',
    'PoseGate',
    'ScoredPair',
    'apply_gate',
    'pose_gate',
    # Verification / indexing
    'FMR_TARGETS',
    'GateSearchResult',
    'IndexingCurve',
    'RocCurve',
    'compute_eer',
    'compute_roc',
    'fnmr_at_fmr',
    'indexing_report',
    'threshold_search',
    'verification_report',
    # Files
    'prediction_record',
    'read_ground_truth',
    'read_predictions',
    'read_scores_csv',
    'render_pose_overlay',
    'scored_pairs',
    'write_predictions',
    # Runs
    'EvalResult',
    'run_eval',
    'benchmark',
]
