"""
DRACO - Evaluation Runner.

Builds the report bundle for one set of predictions:

    <out>/
    ├── summary.json          # config, input hashes, pose metrics, gate results
    ├── *.csv.meta.json       # config hash, input hashes, CSV sha256
    ├── ecdf_trans.csv|png    # pose-error ECDFs
    ├── ecdf_rot.csv|png
    └── (with scores)
        ├── roc_ungated.csv, roc_gated.csv, roc.png
        ├── gate_search.csv
        └── indexing.csv, indexing.png
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict

import numpy as np

from ..config import EvalConfig, config_hash, file_sha256, to_plain
from ..synth.dataset import MANIFEST
from .gating import apply_gate, labels
from .metrics import pose_error, summarize
from .reports import (
    PREDICTIONS_FILE,
    join_poses,
    plot_curves,
    read_ground_truth,
    read_predictions,
    read_scores_csv,
    scored_pairs,
    write_csv,
    write_ecdf,
    write_json,
    write_sidecar,
)
from .verification import (
    compute_roc,
    indexing_report,
    roc_rows,
    split_scores,
    threshold_search,
    verification_report,
)

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.json"
POSE_CSVS = ("ecdf_trans.csv", "ecdf_rot.csv")
SCORE_CSVS = ("gate_search.csv", "roc_ungated.csv", "roc_gated.csv", "indexing.csv")


@dataclass
class EvalResult:
    out_dir: Path
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def pose(self) -> Dict[str, Any]:
        return self.summary['pose']

    @property
    def has_gate(self) -> bool:
        return 'verification' in self.summary


def _input_hash(path: Path) -> str:
    path = Path(path)
    if path.is_dir():
        for name in (MANIFEST, PREDICTIONS_FILE):
            if (path / name).is_file():
                return file_sha256(path / name)
    return file_sha256(path)


def _pose_section(errors, out_dir: Path, plots: bool) -> Dict[str, Any]:
    trans = [e.trans_err for e in errors]
    rot = [e.rot_err for e in errors]
    write_ecdf(trans, out_dir / "ecdf_trans.csv",
               out_dir / "ecdf_trans.png" if plots else None, label="translation error (px)")
    write_ecdf(rot, out_dir / "ecdf_rot.csv",
               out_dir / "ecdf_rot.png" if plots else None, label="rotation error (deg)")
    return summarize(errors)


def _score_sections(cfg: EvalConfig, pairs, out_dir: Path) -> Dict[str, Any]:
    search = threshold_search(pairs, cfg.trans_grid, cfg.rot_grid)
    gate = search.gate
    write_csv(search.grid, out_dir / "gate_search.csv", columns=('th_trans', 'th_rot', 'eer'))

    genuine = labels(pairs)
    curves = {}
    for name, g in (('ungated', None), ('gated', gate)):
        roc = compute_roc(*split_scores(apply_gate(pairs, g), genuine))
        write_csv(roc_rows(roc), out_dir / f"roc_{name}.csv", columns=('threshold', 'fmr', 'fnmr'))
        curves[name] = roc

    indexing = {'ungated': indexing_report(pairs), 'gated': indexing_report(pairs, gate)}
    rows = [
        {'k': int(k), 'penetration': float(p), 'hit_rate_ungated': float(a), 'hit_rate_gated': float(b)}
        for k, p, a, b in zip(
            indexing['ungated'].k,
            indexing['ungated'].penetration,
            indexing['ungated'].hit_rate,
            indexing['gated'].hit_rate,
        )
    ]
    write_csv(rows, out_dir / "indexing.csv")

    if cfg.plots:
        # FMR 0 has no place on a log axis
        plot_curves(
            {name: (np.clip(c.fmr, 1e-6, 1.0), c.fnmr) for name, c in curves.items()},
            out_dir / "roc.png", xlabel="FMR", ylabel="FNMR", logx=True,
        )
        plot_curves(
            {name: (curve.penetration, curve.hit_rate) for name, curve in indexing.items()},
            out_dir / "indexing.png", xlabel="penetration", ylabel="hit rate",
        )

    return {
        'gate_search': search.to_dict(),
        'verification': {
            'ungated': verification_report(pairs, None, cfg.fmr_targets),
            'gated': verification_report(pairs, gate, cfg.fmr_targets),
        },
        'indexing': {
            name: {k: v for k, v in curve.to_dict().items() if k not in ('k', 'penetration', 'hit_rate')}
            for name, curve in indexing.items()
        },
    }


def run_eval(cfg: EvalConfig) -> EvalResult:
    """Pose metrics, and verification / indexing sections when a scores file is given."""
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    predicted = read_predictions(Path(cfg.predictions))
    truth = read_ground_truth(Path(cfg.ground_truth))
    ids, preds, gts = join_poses(predicted, truth)
    errors = [pose_error(p, g) for p, g in zip(preds, gts)]

    inputs = {
        'predictions_sha256': _input_hash(Path(cfg.predictions)),
        'ground_truth_sha256': _input_hash(Path(cfg.ground_truth)),
    }
    summary: Dict[str, Any] = {
        'config': to_plain(cfg),
        'config_hash': config_hash(cfg),
        'inputs': inputs,
        'pose': _pose_section(errors, out_dir, cfg.plots),
    }

    if cfg.scores:
        inputs['scores_sha256'] = file_sha256(Path(cfg.scores))
        pairs = scored_pairs(read_scores_csv(Path(cfg.scores)), predicted)
        summary.update(_score_sections(cfg, pairs, out_dir))

    stamp = {'config_hash': summary['config_hash'], 'inputs': inputs}
    for name in POSE_CSVS + (SCORE_CSVS if cfg.scores else ()):
        write_sidecar(out_dir / name, stamp)
    write_json(summary, out_dir / SUMMARY_FILE)
    logger.debug(f"evaluated {len(ids)} predictions into {out_dir}")
    return EvalResult(out_dir=out_dir, summary=summary)

