import json
import math

import numpy as np
import pytest
import torch
from PIL import Image

from draco.codec import Pose
from draco.config import EvalConfig, Modality, file_sha256
from draco.errors import DataError
from draco.evaluation import (
    VACUOUS_GATE,
    DegenerateLabels,
    EmptyInput,
    JoinMismatch,
    NoGenuineMate,
    PoseError,
    PoseGate,
    ScoredPair,
    apply_gate,
    benchmark,
    compute_eer,
    compute_roc,
    ecdf,
    fnmr_at_fmr,
    indexing_report,
    pose_error,
    pose_gate,
    prediction_record,
    read_predictions,
    read_scores_csv,
    render_pose_overlay,
    run_eval,
    summarize,
    threshold_search,
    verification_report,
    write_predictions,
)
from draco.evaluation.reports import join_poses, sidecar_path, write_ecdf, write_sidecar
from draco.network import DracoNet

from conftest import tiny_model_config


def _pair(q, c, score, genuine, pq=(0, 0, 0), pc=(0, 0, 0)):
    return ScoredPair(q, c, score, genuine, Pose(*pq), Pose(*pc))


def _toy_pairs(seed=0, queries=10):
    """queries x queries comparisons; q_i and c_i are mates with agreeing poses."""
    rng = np.random.default_rng(seed)
    query_poses, candidate_poses = [], []
    for _ in range(queries):
        x, y, angle = *rng.uniform(-100, 100, 2), rng.uniform(-180, 180)
        query_poses.append((x, y, angle))
        candidate_poses.append((x + rng.normal(0, 8), y + rng.normal(0, 8), angle + rng.normal(0, 6)))

    pairs = []
    for i in range(queries):
        for j in range(queries):
            score = rng.normal(1.0, 1.0) if i == j else rng.normal(0.0, 1.0)
            pairs.append(_pair(f"q{i}", f"c{j}", float(score), i == j, query_poses[i], candidate_poses[j]))
    return pairs


# --- pose accuracy --------------------------------------------------------------

def test_pose_error_examples():
    assert pose_error(Pose(5, 6, 7), Pose(5, 6, 7)) == PoseError(0.0, 0.0)
    assert pose_error(Pose(0, 0, 179), Pose(0, 0, -179)).rot_err == pytest.approx(2.0)
    assert pose_error(Pose(3, 4, 0), Pose(0, 0, 0)).trans_err == pytest.approx(5.0)


def test_rot_error_symmetric(rng):
    for _ in range(200):
        a = Pose(0, 0, rng.uniform(-180, 180))
        b = Pose(0, 0, rng.uniform(-180, 180))
        e = pose_error(a, b).rot_err
        assert e == pytest.approx(pose_error(b, a).rot_err)
        assert 0.0 <= e <= 180.0


def test_summarize_means():
    assert summarize([PoseError(10, 5)])['trans_mean'] == 10
    two = summarize([PoseError(0, 0), PoseError(10, 10)])
    assert (two['trans_mean'], two['rot_mean']) == (5, 5)


def test_summarize_matches_naive_sum(rng):
    errors = [PoseError(float(t), float(r)) for t, r in zip(rng.uniform(0, 50, 1000), rng.uniform(0, 180, 1000))]
    summary = summarize(errors)
    assert summary['count'] == 1000
    assert summary['trans_mean'] == pytest.approx(sum(e.trans_err for e in errors) / 1000, abs=1e-9)
    assert summary['rot_mean'] == pytest.approx(sum(e.rot_err for e in errors) / 1000, abs=1e-9)
    assert summary['trans_p50'] == pytest.approx(summary['trans_median'])


def test_summarize_empty():
    with pytest.raises(EmptyInput):
        summarize([])


def test_ecdf_examples():
    xs, fractions = ecdf([3, 1, 2])
    assert xs.tolist() == [1, 2, 3]
    assert fractions == pytest.approx([1 / 3, 2 / 3, 1.0])
    xs, fractions = ecdf([4, 4, 4])
    assert xs.tolist() == [4] and fractions.tolist() == [1.0]


def test_ecdf_of_uniform_tracks_identity():
    values = np.random.default_rng(11).uniform(0, 1, 10000)
    xs, fractions = ecdf(values)
    assert np.all(np.diff(fractions) >= 0)
    assert fractions[-1] == 1.0
    assert np.max(np.abs(fractions - xs)) <= 0.03


def test_ecdf_empty():
    with pytest.raises(EmptyInput):
        ecdf([])


# --- gating ---------------------------------------------------------------------

def test_pose_gate_examples(rng):
    p = Pose(12, -4, 33)
    assert pose_gate(p, p, 0, 0)
    assert not pose_gate(Pose(0, 0, 0), Pose(10, 0, 0), 5, 180)
    for _ in range(100):
        a = Pose(*rng.uniform(-200, 200, 2), rng.uniform(-180, 180))
        b = Pose(*rng.uniform(-200, 200, 2), rng.uniform(-180, 180))
        assert pose_gate(a, b, math.inf, 180)
        assert VACUOUS_GATE.keeps(a, b)


def test_pose_gate_monotone():
    pairs = _toy_pairs(seed=2)
    small = apply_gate(pairs, PoseGate(30, 30))
    larger = apply_gate(pairs, PoseGate(60, 30))
    largest = apply_gate(pairs, PoseGate(60, 90))
    kept = [np.isfinite(s) for s in (small, larger, largest)]
    assert np.all(kept[0] <= kept[1]) and np.all(kept[1] <= kept[2])


def test_apply_gate_sets_excluded_to_neg_inf():
    pairs = [
        _pair("q", "a", 0.8, True),
        _pair("q", "b", 0.7, False, pc=(50, 0, 0)),
    ]
    assert apply_gate(pairs).tolist() == [0.8, 0.7]
    gated = apply_gate(pairs, PoseGate(10, 180))
    assert gated[0] == 0.8 and gated[1] == -np.inf


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        PoseGate(-1, 10)


# --- ROC / EER --------------------------------------------------------------------

def test_separated_scores_have_zero_eer():
    assert compute_eer([0.6, 0.7], [0.1, 0.2]) == 0.0


def test_label_swap_maps_eer_to_complement():
    assert compute_eer([0.1, 0.2], [0.6, 0.7]) == 1.0


def test_eer_interpolates_at_crossing():
    # fmr 1,1,0,0,0 / fnmr 0,1/3,1/3,2/3,1 over thresholds .2,.4,.6,.7,inf
    assert compute_eer([0.2, 0.6, 0.7], [0.4]) == pytest.approx(1 / 3)
    assert compute_eer([0.1, 0.2, 0.3, 0.4], [0.15, 0.25, 0.35, 0.45]) == pytest.approx(0.5)


def test_eer_of_identical_distributions():
    rng = np.random.default_rng(21)
    eer = compute_eer(rng.normal(0, 1, 2000), rng.normal(0, 1, 2000))
    assert eer == pytest.approx(0.5, abs=0.05)


def test_roc_endpoints():
    curve = compute_roc([0.3, 0.9], [0.1, 0.5])
    assert (curve.fmr[0], curve.fnmr[0]) == (1.0, 0.0)
    assert (curve.fmr[-1], curve.fnmr[-1]) == (0.0, 1.0)
    assert curve.thresholds[-1] == np.inf
    assert np.all(np.diff(curve.fmr) <= 0) and np.all(np.diff(curve.fnmr) >= 0)


def test_fnmr_at_fmr_interpolates():
    curve = compute_roc([0.5], [0.5])
    assert fnmr_at_fmr(curve, 0.25) == pytest.approx(0.75)
    assert fnmr_at_fmr(compute_roc([0.6, 0.7], [0.1, 0.2]), 1e-3) == 0.0


def test_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        compute_roc([0.5, 0.6], [])
    with pytest.raises(DegenerateLabels):
        verification_report([_pair("q", "c", 1.0, True)])


# --- verification report ------------------------------------------------------------

def test_report_perfect_separation():
    pairs = [_pair("q", f"g{i}", 0.9 + i / 100, True) for i in range(3)]
    pairs += [_pair("q", f"i{i}", 0.1 + i / 100, False) for i in range(5)]
    report = verification_report(pairs)
    assert report['eer'] == 0.0
    assert report['fnmr@fmr=0.001'] == 0.0
    assert report['fnmr@fmr=0.0001'] == 0.0
    assert (report['genuine'], report['impostor']) == (3, 5)


def test_vacuous_gate_matches_no_gate():
    pairs = _toy_pairs(seed=4)
    with_gate = verification_report(pairs, VACUOUS_GATE)
    without = verification_report(pairs, None)
    assert json.dumps(with_gate, sort_keys=True) == json.dumps(without, sort_keys=True)


def test_gate_removing_only_impostors_cannot_hurt():
    rng = np.random.default_rng(8)
    pairs = [_pair("q", f"g{i}", float(rng.normal(1, 1)), True) for i in range(50)]
    pairs += [
        _pair("q", f"i{i}", float(rng.normal(0, 1)), False, pc=(0, 0, 90 if i % 2 else 0))
        for i in range(50)
    ]
    gate = PoseGate(math.inf, 45)
    assert verification_report(pairs, gate)['gated_genuine'] == 0
    assert verification_report(pairs, gate)['eer'] <= verification_report(pairs)['eer']


# --- threshold search ----------------------------------------------------------------

def test_threshold_search_matches_brute_force():
    pairs = _toy_pairs(seed=6)
    trans_grid = (10.0, 30.0, 60.0, 120.0, math.inf)
    rot_grid = (10.0, 30.0, 90.0, 180.0)
    result = threshold_search(pairs, trans_grid, rot_grid)

    table = {(t, r): verification_report(pairs, PoseGate(t, r))['eer'] for t in trans_grid for r in rot_grid}
    best = min(table.values())
    expected = max(key for key, eer in table.items() if eer == best)
    assert (result.gate.th_trans, result.gate.th_rot) == expected
    assert result.eer == best
    assert len(result.grid) == len(table)


def test_vacuous_thresholds_reproduce_ungated_eer():
    pairs = _toy_pairs(seed=7)
    result = threshold_search(pairs, (math.inf,), (180.0,))
    assert result.eer == result.ungated_eer
    assert result.ungated_eer == verification_report(pairs)['eer']


def test_threshold_search_ties_go_permissive():
    pairs = [_pair("q", f"g{i}", 0.9, True) for i in range(3)]
    pairs += [_pair("q", f"i{i}", 0.1, False) for i in range(3)]
    result = threshold_search(pairs, (10.0, 50.0), (20.0, 40.0))
    assert (result.gate.th_trans, result.gate.th_rot) == (50.0, 40.0)


# --- indexing --------------------------------------------------------------------------

def test_indexing_perfect_scores():
    pairs = [
        _pair(f"q{i}", f"c{j}", 1.0 if i == j else 0.0, i == j)
        for i in range(5) for j in range(5)
    ]
    curve = indexing_report(pairs)
    assert curve.gallery_size == 5
    assert curve.hit_rate_at(1) == 1.0
    assert curve.penetration[-1] == 1.0


def test_indexing_random_scores_follow_penetration():
    rng = np.random.default_rng(13)
    pairs = []
    for i in range(400):
        mate = int(rng.integers(100))
        pairs += [_pair(f"q{i}", f"c{j}", float(s), j == mate) for j, s in enumerate(rng.uniform(size=100))]
    curve = indexing_report(pairs)
    for k in (10, 50, 90):
        assert curve.hit_rate_at(k) == pytest.approx(k / 100, abs=0.08)
    assert curve.hit_rate_at(100) == 1.0


def test_gate_excluding_all_mates_gives_zero_hits():
    pairs = [
        _pair(f"q{i}", f"c{j}", 1.0 if i == j else 0.0, i == j, pc=(100, 0, 0) if i == j else (0, 0, 0))
        for i in range(4) for j in range(4)
    ]
    curve = indexing_report(pairs, PoseGate(10, 180))
    assert np.all(curve.hit_rate == 0.0)
    assert curve.to_dict()['missed'] == 4


def test_query_without_mate():
    pairs = [_pair("q1", "c1", 0.5, True), _pair("q2", "c1", 0.4, False)]
    with pytest.raises(NoGenuineMate, match="q2"):
        indexing_report(pairs)


# --- files -------------------------------------------------------------------------------

def test_read_scores_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("query_id,candidate_id,score,genuine\nq1,c1,0.9,1\nq1,c2,0.1,false\n")
    rows = read_scores_csv(path)
    assert rows == [
        {'query_id': 'q1', 'candidate_id': 'c1', 'score': 0.9, 'genuine': True},
        {'query_id': 'q1', 'candidate_id': 'c2', 'score': 0.1, 'genuine': False},
    ]


def test_read_scores_csv_rejects_bad_rows(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("query_id,candidate_id,score,genuine\nq1,c1,0.9,maybe\n")
    with pytest.raises(DataError, match="maybe"):
        read_scores_csv(path)
    path.write_text("query_id,score,genuine\nq1,0.9,1\n")
    with pytest.raises(DataError, match="candidate_id"):
        read_scores_csv(path)


def test_predictions_file(tmp_path):
    records = [
        prediction_record("a", Pose(1, 2, 3), [0.2, 0.3, 0.5], "sum"),
        prediction_record("b", Pose(-4, 5, -170), [1.0, 0.0, 0.0], "sum"),
    ]
    path = write_predictions(records, tmp_path / "predictions.jsonl")
    poses = read_predictions(tmp_path)
    assert sorted(poses) == ["a", "b"]
    assert poses["b"].as_tuple() == (-4.0, 5.0, -170.0)
    first = json.loads(path.read_text().splitlines()[0])
    assert first['weights'] == {'P': 0.2, 'F': 0.3, 'C': 0.5}
    assert first['decode_mode'] == "sum"


def test_join_mismatch_lists_ids():
    with pytest.raises(JoinMismatch, match="only_pred") as info:
        join_poses({'a': Pose(0, 0, 0), 'only_pred': Pose(0, 0, 0)}, {'a': Pose(0, 0, 0), 'only_gt': Pose(0, 0, 0)})
    assert info.value.missing == ['only_pred', 'only_gt']


def test_ecdf_export(tmp_path):
    write_ecdf([1.0, 2.0, 2.0], tmp_path / "e.csv", tmp_path / "e.png")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "value,fraction"
    assert len(lines) == 3
    assert (tmp_path / "e.png").stat().st_size > 0


def test_sidecar_stamps_artifact(tmp_path):
    path = write_ecdf([3.0, 1.0], tmp_path / "e.csv")
    meta_path = write_sidecar(path, {'config_hash': "c" * 64, 'inputs': {'scores_sha256': "s" * 64}})
    assert meta_path == sidecar_path(path) == tmp_path / "e.csv.meta.json"
    meta = json.loads(meta_path.read_text())
    assert meta['artifact'] == "e.csv"
    assert meta['artifact_sha256'] == file_sha256(path)
    assert meta['config_hash'] == "c" * 64
    assert meta['inputs'] == {'scores_sha256': "s" * 64}


def test_pose_overlay(tmp_path):
    patch = np.full((132, 132), 200, dtype=np.uint8)
    path = render_pose_overlay(patch, Pose(10, -20, 45), Pose(0, 0, 0), tmp_path / "o.png")
    with Image.open(path) as img:
        assert img.size == (512, 512)


# --- report bundle ----------------------------------------------------------------------

def _write_identity_predictions(tmp_path, pairs):
    poses = {}
    for p in pairs:
        poses[p.query_id] = p.pose_query
        poses[p.candidate_id] = p.pose_candidate
    records = [prediction_record(i, poses[i], [1 / 3] * 3, "sum") for i in sorted(poses)]
    write_predictions(records, tmp_path / "pred" / "predictions.jsonl")
    write_predictions(records, tmp_path / "gt.jsonl")


def test_eval_without_scores(tmp_path):
    _write_identity_predictions(tmp_path, _toy_pairs(queries=3))
    cfg = EvalConfig(
        predictions=str(tmp_path / "pred"),
        ground_truth=str(tmp_path / "gt.jsonl"),
        out=str(tmp_path / "report"),
        plots=False,
    )
    result = run_eval(cfg)
    assert result.pose['trans_mean'] == 0.0 and result.pose['rot_mean'] == 0.0
    assert not result.has_gate
    summary = json.loads((tmp_path / "report" / "summary.json").read_text())
    assert 'verification' not in summary
    assert len(summary['inputs']['predictions_sha256']) == 64
    assert (tmp_path / "report" / "ecdf_trans.csv").exists()
    assert sidecar_path(tmp_path / "report" / "ecdf_trans.csv").exists()
    assert not (tmp_path / "report" / "roc_gated.csv.meta.json").exists()


def test_eval_with_scores_matches_search(tmp_path):
    pairs = _toy_pairs(seed=9)
    _write_identity_predictions(tmp_path, pairs)
    lines = ["query_id,candidate_id,score,genuine"]
    lines += [f"{p.query_id},{p.candidate_id},{p.score!r},{int(p.genuine)}" for p in pairs]
    (tmp_path / "scores.csv").write_text("\n".join(lines) + "\n")

    cfg = EvalConfig(
        predictions=str(tmp_path / "pred" / "predictions.jsonl"),
        ground_truth=str(tmp_path / "gt.jsonl"),
        scores=str(tmp_path / "scores.csv"),
        out=str(tmp_path / "report"),
        trans_grid=(20.0, 60.0, math.inf),
        rot_grid=(30.0, 90.0, 180.0),
        plots=False,
    )
    result = run_eval(cfg)
    expected = threshold_search(pairs, cfg.trans_grid, cfg.rot_grid)
    assert result.summary['gate_search'] == expected.to_dict()
    assert result.summary['verification']['ungated'] == verification_report(pairs)
    assert (tmp_path / "report" / "indexing.csv").exists()

    for name in ("ecdf_trans.csv", "ecdf_rot.csv", "gate_search.csv", "roc_ungated.csv",
                 "roc_gated.csv", "indexing.csv"):
        csv_path = tmp_path / "report" / name
        meta = json.loads(sidecar_path(csv_path).read_text())
        assert meta['config_hash'] == result.summary['config_hash']
        assert meta['inputs'] == result.summary['inputs']
        assert meta['artifact_sha256'] == file_sha256(csv_path)


def test_eval_join_mismatch(tmp_path):
    write_predictions([prediction_record("a", Pose(0, 0, 0), [1, 0, 0], "sum")], tmp_path / "p.jsonl")
    write_predictions([prediction_record("b", Pose(0, 0, 0), [1, 0, 0], "sum")], tmp_path / "g.jsonl")
    cfg = EvalConfig(predictions=str(tmp_path / "p.jsonl"), ground_truth=str(tmp_path / "g.jsonl"),
                     out=str(tmp_path / "r"), plots=False)
    with pytest.raises(JoinMismatch):
        run_eval(cfg)


# --- benchmark ----------------------------------------------------------------------------

@pytest.mark.parametrize("modality", [Modality.DUAL, Modality.FP, Modality.CAP])
def test_benchmark_reports_size_and_latency(modality):
    torch.manual_seed(0)
    model = DracoNet(tiny_model_config(modality=modality))
    result = benchmark(model, runs=2, warmup=1)
    assert result['parameters_m'] > 0
    assert result['parameters_m'] < result['total_parameters_m']
    assert result['mean_ms'] > 0
