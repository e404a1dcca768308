import json
import math
from pathlib import Path

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from draco.codec import COMPONENTS
from draco.config import (
    DataConfig,
    DecodeMode,
    Distance,
    FusionStrategy,
    KTMode,
    LossConfig,
    Modality,
    ModelConfig,
    TrainConfig,
    TrainSchedule,
)
from draco.evaluation.metrics import pose_errors
from draco.events import EventEmitter, EventType
from draco.inference import predict_batches
from draco.network import (
    DracoNet,
    ExpertOutput,
    checkpoint_hash,
    load_checkpoint,
    parameter_checksum,
    read_sidecar,
)
from draco.synth import generate_plains, read_dataset, synthesize_samples, write_dataset
from draco.training import (
    DegenerateFeature,
    LengthMismatch,
    ResumeMismatch,
    SampleDataset,
    SynthesisDataset,
    compute_losses,
    cosine_lr,
    cross_entropy,
    finetune,
    infonce_relation_loss,
    js_divergence,
    kt_loss,
    pose_component_loss,
    pose_loss,
    pose_loss_terms,
    response_loss,
    total_loss,
    train,
    train_teacher,
)
from draco.training.trainer import METRICS_FILE, STATE_FILE, Trainer, build_datasets, load_teacher

from conftest import tiny_model_config

SIZES = {'x': 256, 'y': 256, 'cos': 120, 'sin': 120}


def _one_hot_set(batch=2, index=3):
    return {name: F.one_hot(torch.full((batch,), index), n).double() for name, n in SIZES.items()}


def _output(dists, aligned=None):
    batch = next(iter(dists.values())).shape[0]
    return ExpertOutput(
        features={},
        weights=torch.full((batch, 3), 1 / 3, dtype=torch.float64),
        dists={'P': dists, 'C': dists, 'F': dists},
        final=dists,
        aligned=aligned,
    )


@pytest.fixture
def model_output(tiny_config):
    torch.manual_seed(0)
    model = DracoNet(tiny_config).eval()
    g = torch.Generator().manual_seed(1)
    out = model(torch.rand(4, 1, 132, 132, generator=g), torch.rand(4, 1, 12, 12, generator=g))
    poses = torch.tensor([[0.0, 0.0, 0.0], [10.0, -20.0, 45.0], [-100.0, 30.0, 170.0], [5.0, 5.0, -90.0]])
    targets = model.codec.targets(poses, 3.5, 2.5)
    return out, targets


# --- distances ------------------------------------------------------------------

def test_ce_uniform_against_one_hot():
    pred = torch.full((1, 120), 1 / 120, dtype=torch.float64)
    target = F.one_hot(torch.tensor([7]), 120).double()
    assert float(cross_entropy(pred, target)) == pytest.approx(math.log(120), abs=1e-6)


def test_ce_perfect_prediction_is_zero():
    target = F.one_hot(torch.tensor([4]), 10).double()
    assert float(pose_component_loss(target, target)) == pytest.approx(0.0, abs=1e-10)


def test_js_identity_and_bound(rng):
    p = torch.softmax(torch.tensor(rng.normal(size=(3, 20))), dim=-1)
    q = torch.softmax(torch.tensor(rng.normal(size=(3, 20))), dim=-1)
    assert torch.allclose(js_divergence(p, p), torch.zeros(3, dtype=torch.float64), atol=1e-10)
    disjoint = js_divergence(F.one_hot(torch.tensor([0]), 4).double(), F.one_hot(torch.tensor([3]), 4).double())
    assert float(disjoint) == pytest.approx(1.0, abs=1e-9)
    assert torch.all(js_divergence(p, q) <= 1.0)


def test_component_loss_length_mismatch():
    with pytest.raises(LengthMismatch):
        pose_component_loss(torch.ones(2, 10) / 10, torch.ones(2, 12) / 12)


@pytest.mark.parametrize("distance", [Distance.CE, Distance.JS])
def test_component_loss_gradcheck(distance):
    torch.manual_seed(0)
    logits = torch.randn(4, 12, dtype=torch.float64, requires_grad=True)
    target = torch.softmax(torch.randn(4, 12, dtype=torch.float64), dim=-1)
    assert torch.autograd.gradcheck(
        lambda z: pose_component_loss(torch.softmax(z, dim=-1), target, distance),
        (logits,), eps=1e-6, atol=1e-5, rtol=1e-3,
    )


# --- pose loss ------------------------------------------------------------------

def test_pose_loss_zero_for_one_hot_match():
    targets = _one_hot_set()
    assert float(pose_loss(_output(targets), targets, LossConfig())) == pytest.approx(0.0, abs=1e-9)


def test_pose_loss_linear_in_expert_weights(model_output):
    out, targets = model_output
    base = LossConfig()
    doubled = LossConfig(lambda_experts={k: 2 * v for k, v in base.lambda_experts.items()})
    assert float(pose_loss(out, targets, doubled)) == pytest.approx(2 * float(pose_loss(out, targets, base)), rel=1e-5)


def test_pose_loss_matches_term_by_term_sum(model_output):
    out, targets = model_output
    cfg = LossConfig()
    expected = 0.0
    for expert, dists in [('P', out.dists['P']), ('C', out.dists['C']), ('F', out.dists['F']), ('final', out.final)]:
        for name in COMPONENTS:
            ce = -(targets[name] * torch.log(dists[name] + 1e-12)).sum(-1).mean()
            expected += cfg.lambda_experts[expert] * cfg.lambda_components[name] * float(ce)
    assert float(pose_loss(out, targets, cfg)) == pytest.approx(expected, rel=1e-5)
    assert len(pose_loss_terms(out, targets, cfg)) == 16


def test_js_pose_loss_bounded(model_output):
    out, targets = model_output
    cfg = LossConfig(distance=Distance.JS)
    value = float(pose_loss(out, targets, cfg))
    assert 0.0 <= value <= sum(cfg.lambda_experts.values()) * len(COMPONENTS)


# --- knowledge transfer ------------------------------------------------------------

def test_infonce_single_row_is_zero():
    d = torch.tensor([[0.3, -1.2, 2.0]])
    p = torch.tensor([[5.0, 1.0, 0.1]])
    assert float(infonce_relation_loss(d, p, tau=8.0)) == 0.0


def test_infonce_two_orthogonal_rows():
    eye = torch.eye(2, dtype=torch.float64)
    expected = -math.log(math.exp(1 / 8) / (math.exp(1 / 8) + 1))
    assert float(infonce_relation_loss(eye, eye.clone(), tau=8.0)) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.6327, abs=1e-3)


def test_infonce_permutation_and_scale_invariant():
    torch.manual_seed(3)
    d, p = torch.randn(6, 5, dtype=torch.float64), torch.randn(6, 5, dtype=torch.float64)
    base = infonce_relation_loss(d, p)
    perm = torch.randperm(6)
    assert float(infonce_relation_loss(d[perm], p[perm])) == pytest.approx(float(base), abs=1e-12)
    scale = torch.rand(6, 1, dtype=torch.float64) * 10 + 0.1
    assert float(infonce_relation_loss(d * scale, p)) == pytest.approx(float(base), abs=1e-12)


def test_infonce_zero_row():
    with pytest.raises(DegenerateFeature):
        infonce_relation_loss(torch.zeros(2, 3), torch.ones(2, 3))


def test_infonce_gradcheck():
    torch.manual_seed(1)
    d = torch.randn(4, 6, dtype=torch.float64, requires_grad=True)
    p = torch.randn(4, 6, dtype=torch.float64)
    assert torch.autograd.gradcheck(lambda x: infonce_relation_loss(x, p, 8.0), (d,), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_kt_off_and_feature_modes():
    t = torch.randn(3, 8, dtype=torch.float64)
    out = _output(_one_hot_set(3), aligned=t.clone())
    assert float(kt_loss(out, t, None, KTMode.OFF)) == 0.0
    assert float(kt_loss(out, t, None, KTMode.FEATURE)) == 0.0
    assert float(kt_loss(out, t + 1.0, None, KTMode.FEATURE)) == pytest.approx(1.0)


def test_feature_kt_gradcheck():
    torch.manual_seed(5)
    aligned = torch.randn(3, 8, dtype=torch.float64, requires_grad=True)
    teacher = torch.randn(3, 8, dtype=torch.float64)
    dists = _one_hot_set(3)
    assert torch.autograd.gradcheck(
        lambda z: kt_loss(_output(dists, aligned=z), teacher, None, KTMode.FEATURE),
        (aligned,), eps=1e-6, atol=1e-5, rtol=1e-3,
    )


def test_response_kt_gradcheck():
    torch.manual_seed(6)
    logits = torch.randn(4, 7 * len(COMPONENTS), dtype=torch.float64, requires_grad=True)
    teacher = {name: torch.softmax(torch.randn(4, 7, dtype=torch.float64), -1) for name in COMPONENTS}

    def loss(z):
        final = {name: torch.softmax(chunk, -1) for name, chunk in zip(COMPONENTS, z.split(7, dim=1))}
        return kt_loss(_output(final), None, teacher, KTMode.RESPONSE)

    assert torch.autograd.gradcheck(loss, (logits,), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_response_loss_equals_teacher_entropy():
    torch.manual_seed(2)
    teacher = {name: torch.softmax(torch.randn(2, 7, dtype=torch.float64), -1) for name in COMPONENTS}
    entropy = sum(float((-(d * torch.log(d)).sum(-1)).mean()) for d in teacher.values())
    assert float(response_loss(teacher, teacher)) == pytest.approx(entropy, abs=1e-9)


def test_response_loss_minimizer_is_teacher():
    torch.manual_seed(4)
    teacher = {name: torch.softmax(torch.randn(1, 6), -1) for name in COMPONENTS}
    logits = {name: torch.zeros(1, 6, requires_grad=True) for name in COMPONENTS}
    optimizer = torch.optim.Adam(list(logits.values()), lr=0.05)
    for _ in range(1500):
        optimizer.zero_grad()
        response_loss({n: torch.softmax(z, -1) for n, z in logits.items()}, teacher).backward()
        optimizer.step()
    for name in COMPONENTS:
        assert torch.allclose(torch.softmax(logits[name], -1), teacher[name], atol=1e-2)


def test_total_loss_recomposition(model_output):
    out, targets = model_output
    pose = pose_loss(out, targets, LossConfig())
    kt = torch.tensor(0.75)
    assert total_loss(pose, kt, 1.0, KTMode.OFF) is pose
    assert float(total_loss(pose, kt, 0.0, KTMode.RELATION)) == pytest.approx(float(pose))
    assert float(total_loss(pose, kt, 2.0, KTMode.RELATION)) == pytest.approx(float(pose) + 1.5, abs=1e-6)


def test_compute_losses_breakdown(model_output):
    out, targets = model_output
    losses = compute_losses(out, targets, LossConfig())
    d = losses.to_dict()
    assert set(d) >= {'total', 'pose', 'kt', 'pose_P', 'pose_C', 'pose_F', 'pose_final'}
    assert d['kt'] == 0.0 and d['total'] == pytest.approx(d['pose'])
    assert losses.is_finite()


def test_model_and_pose_loss_gradcheck(tiny_config):
    # parameters downstream of every ReLU
    torch.manual_seed(0)
    model = DracoNet(tiny_config).double().eval()
    g = torch.Generator().manual_seed(2)
    patch = torch.rand(4, 1, 132, 132, generator=g, dtype=torch.float64)
    cap = torch.rand(4, 1, 12, 12, generator=g, dtype=torch.float64)
    poses = torch.tensor([[12.0, -30.0, 60.0], [-80.0, 5.0, -135.0], [0.0, 0.0, 0.0], [40.0, 90.0, 175.0]])
    targets = {k: v.double() for k, v in model.codec.targets(poses, 3.5, 2.5).items()}
    cfg = LossConfig()

    names = ('router.net.2.weight', 'experts.F.heads.sin.bias')
    params = dict(model.named_parameters())
    inputs = tuple(params[name].detach().clone().requires_grad_(True) for name in names)

    def loss(*values):
        out = torch.func.functional_call(model, dict(zip(names, values)), (patch, cap))
        return pose_loss(out, targets, cfg)

    assert torch.autograd.gradcheck(loss, inputs, eps=1e-6, atol=1e-5, rtol=1e-3)


def test_pose_loss_reaches_every_dual_branch(model_output):
    torch.manual_seed(0)
    model = DracoNet(tiny_model_config()).train()
    g = torch.Generator().manual_seed(3)
    out = model(torch.rand(4, 1, 132, 132, generator=g), torch.rand(4, 1, 12, 12, generator=g))
    _, targets = model_output
    pose_loss(out, targets, LossConfig()).backward()
    for branch in (model.ridge_encoder, model.cap_encoder, model.router, *model.experts.values()):
        grads = [p.grad for p in branch.parameters() if p.grad is not None]
        assert grads and all(torch.isfinite(grad).all() for grad in grads)
        assert any(grad.abs().sum() > 0 for grad in grads)


# --- schedule ---------------------------------------------------------------------

def test_cosine_endpoints():
    assert cosine_lr(0, 100, 1e-3, 1e-6) == pytest.approx(1e-3, abs=1e-12)
    assert cosine_lr(99, 100, 1e-3, 1e-6) == pytest.approx(1e-6, abs=1e-9)
    assert cosine_lr(50, 101, 1e-3, 1e-6) == pytest.approx((1e-3 + 1e-6) / 2)
    assert cosine_lr(0, 1, 1e-3, 1e-6) == 1e-3


def test_cosine_monotone():
    values = [cosine_lr(s, 40, 4e-3, 4e-6) for s in range(40)]
    assert all(a >= b for a, b in zip(values, values[1:]))


# --- on-the-fly data ---------------------------------------------------------------

def test_synthesis_dataset_seeded_per_epoch_and_index(plains):
    dataset = SynthesisDataset(plains, samples_per_epoch=6, rot_range=180, trans_range=40, seed=2)
    assert len(dataset) == 6

    first = dataset[3]
    again = dataset[3]
    assert first['id'] == again['id']
    assert torch.equal(first['patch'], again['patch'])
    assert torch.equal(first['pose'], again['pose'])
    assert first['patch'].shape == (1, 132, 132)
    assert first['cap'].shape == (1, 12, 12)

    dataset.set_epoch(1)
    other = dataset[3]
    assert other['id'] != first['id']
    assert not torch.equal(other['pose'], first['pose'])


def test_synthesis_dataset_needs_plains():
    with pytest.raises(ValueError):
        SynthesisDataset([], samples_per_epoch=1, rot_range=0, trans_range=0)


def test_sample_dataset_items_fixed_across_epochs(samples):
    dataset = SampleDataset(samples)
    first = dataset[1]
    dataset.set_epoch(5)
    again = dataset[1]
    assert first['id'] == again['id']
    assert torch.equal(first['patch'], again['patch'])
    assert torch.equal(first['cap'], again['cap'])
    assert torch.equal(first['pose'], again['pose'])


# --- training runs -----------------------------------------------------------------

@pytest.fixture(scope="session")
def dataset_dir(samples, tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    write_dataset(samples, root)
    return root


def _cfg(out: Path, dataset: Path, epochs=2, **loss) -> TrainConfig:
    return TrainConfig(
        out=str(out),
        model=tiny_model_config(),
        loss=LossConfig(**loss),
        schedule=TrainSchedule(
            lr_start=1e-3, lr_end=1e-5, batch_size=4, epochs=epochs,
            val_fraction=0.25, log_every=1, seed=0,
        ),
        data=DataConfig(dataset=str(dataset)),
    )


@pytest.fixture(scope="session")
def teacher_dir(dataset_dir, tmp_path_factory):
    cfg = _cfg(tmp_path_factory.mktemp("teacher"), dataset_dir, epochs=1)
    cfg.schedule.max_steps = 2
    return train_teacher(cfg).best_dir


def test_finger_disjoint_split(dataset_dir):
    train_set, val_set, provenance = build_datasets(_cfg(Path("unused"), dataset_dir))
    train_fingers = {s.finger_id for s in train_set.samples}
    val_fingers = {s.finger_id for s in val_set.samples}
    assert train_fingers and val_fingers and not train_fingers & val_fingers
    assert len(provenance['manifest_sha256']) == 64


def test_training_is_deterministic(dataset_dir, tmp_path):
    first = train(_cfg(tmp_path / "a", dataset_dir))
    second = train(_cfg(tmp_path / "b", dataset_dir))
    log_a = (tmp_path / "a" / METRICS_FILE).read_text()
    assert log_a == (tmp_path / "b" / METRICS_FILE).read_text()
    kinds = [json.loads(line)['kind'] for line in log_a.splitlines()]
    assert kinds.count('val') == 2
    assert first.steps == second.steps > 0
    assert first.best is not None
    assert (first.best_dir / "model.pt").exists() and (first.final_dir / "model.pt").exists()


def test_learning_rate_follows_cosine(dataset_dir, tmp_path):
    train(_cfg(tmp_path / "run", dataset_dir))
    steps = [json.loads(l) for l in (tmp_path / "run" / METRICS_FILE).read_text().splitlines()]
    lrs = [s['lr'] for s in steps if s['kind'] == 'step']
    assert lrs[0] == pytest.approx(1e-3, abs=1e-12)
    assert lrs[-1] == pytest.approx(1e-5, abs=1e-9)


def test_zero_epoch_finetune_keeps_weights(dataset_dir, tmp_path):
    parent = train(_cfg(tmp_path / "parent", dataset_dir, epochs=1)).final_dir
    cfg = _cfg(tmp_path / "ft", dataset_dir, epochs=0)
    cfg.init_checkpoint = str(parent)
    result = finetune(cfg)

    original, _ = load_checkpoint(parent)
    tuned, meta = load_checkpoint(result.final_dir)
    assert parameter_checksum(original) == parameter_checksum(tuned)
    assert meta['provenance']['parent_sha256'] == checkpoint_hash(parent)
    assert read_sidecar(result.best_dir)['provenance']['parent_checkpoint'] == str(parent)


def _mean_errors(checkpoint, dataset):
    model, _ = load_checkpoint(checkpoint)
    records = predict_batches(model, dataset, DecodeMode.SUM)
    pred = np.array([[r['pose']['x'], r['pose']['y'], r['pose']['theta']] for r in records])
    gt = np.array([s.label.as_tuple() for s in dataset.samples])
    trans, rot = pose_errors(pred, gt)
    return float(trans.mean()), float(rot.mean())


def test_fifty_step_finetune_is_stable(dataset_dir, tmp_path):
    parent_cfg = _cfg(tmp_path / "parent", dataset_dir, epochs=100)
    parent_cfg.schedule.max_steps = 100
    parent = train(parent_cfg).final_dir

    cfg = _cfg(tmp_path / "ft", dataset_dir, epochs=100)
    cfg.schedule.lr_start, cfg.schedule.lr_end = 1e-4, 1e-5
    cfg.schedule.max_steps = 50
    cfg.init_checkpoint = str(parent)
    result = finetune(cfg)
    assert result.steps == 50

    records = [json.loads(line) for line in (tmp_path / "ft" / METRICS_FILE).read_text().splitlines()]
    steps = [r for r in records if r['kind'] == 'step']
    assert len(steps) == 50
    assert all(math.isfinite(r['total']) for r in steps)

    train_set, _, _ = build_datasets(cfg)
    trans_before, rot_before = _mean_errors(parent, train_set)
    trans_after, rot_after = _mean_errors(result.final_dir, train_set)
    assert trans_after + rot_after <= 1.1 * (trans_before + rot_before)
    _, meta = load_checkpoint(result.final_dir)
    assert meta['provenance']['parent_sha256'] == checkpoint_hash(parent)


def test_resume_continues_step_counter(dataset_dir, tmp_path):
    reference = train(_cfg(tmp_path / "ref", dataset_dir))

    def stop_at_second_epoch(event):
        if event.data['epoch'] == 1:
            raise KeyboardInterrupt

    emitter = EventEmitter()
    emitter.subscribe(stop_at_second_epoch, EventType.EPOCH_STARTED)
    with pytest.raises(KeyboardInterrupt):
        train(_cfg(tmp_path / "run", dataset_dir), emitter=emitter)
    assert (tmp_path / "run" / STATE_FILE).exists()

    cfg = _cfg(tmp_path / "run", dataset_dir)
    cfg.resume = True
    resumed = train(cfg)
    assert resumed.steps == reference.steps
    ref_model, _ = load_checkpoint(reference.final_dir)
    res_model, _ = load_checkpoint(resumed.final_dir)
    for a, b in zip(ref_model.state_dict().values(), res_model.state_dict().values()):
        assert torch.allclose(a.float(), b.float(), atol=1e-6)


def test_resume_with_other_config_fails(dataset_dir, tmp_path):
    train(_cfg(tmp_path / "run", dataset_dir, epochs=1))
    cfg = _cfg(tmp_path / "run", dataset_dir, epochs=1)
    cfg.schedule.lr_start = 2e-3
    cfg.resume = True
    with pytest.raises(ResumeMismatch):
        train(cfg)


def test_teacher_checkpoint_is_plain(teacher_dir):
    teacher, meta = load_checkpoint(teacher_dir)
    assert teacher.modality == Modality.PLAIN
    assert meta['provenance']['command'] == "teacher"


def test_teacher_frozen_during_transfer(dataset_dir, teacher_dir, tmp_path):
    cfg = _cfg(tmp_path / "kt", dataset_dir, epochs=1, kt_mode=KTMode.RELATION)
    cfg.teacher_checkpoint = str(teacher_dir)
    teacher = load_teacher(cfg.teacher_checkpoint, cfg.model)
    before = parameter_checksum(teacher)

    torch.manual_seed(0)
    student = DracoNet(cfg.model)
    train_set, val_set, _ = build_datasets(cfg)
    result = Trainer(cfg, student, train_set, val_set, teacher=teacher).run()
    assert result.steps > 0
    assert parameter_checksum(teacher) == before
    assert all(not p.requires_grad for p in teacher.parameters())


def _ablation(dataset_dir, teacher_dir, out, steps, **changes):
    cfg = _cfg(out, dataset_dir, epochs=100)
    cfg.schedule.max_steps = steps
    cfg.schedule.log_every = 10
    for key, value in changes.items():
        if key == 'fusion_strategy':
            cfg.model.fusion_strategy = value
        else:
            setattr(cfg.loss, key, value)
    if cfg.loss.kt_mode != KTMode.OFF:
        cfg.teacher_checkpoint = str(teacher_dir)
    result = train(cfg)
    assert result.steps == steps
    assert all(math.isfinite(v) for v in result.last_losses.values())


ABLATIONS = [
    {'kt_mode': KTMode.RELATION},
    {'kt_mode': KTMode.FEATURE},
    {'kt_mode': KTMode.RESPONSE},
    {'kt_mode': KTMode.OFF},
    {'distance': Distance.CE},
    {'distance': Distance.JS},
    {'decode_mode': DecodeMode.SUM},
    {'decode_mode': DecodeMode.MAX},
    {'fusion_strategy': FusionStrategy.EQUAL},
    {'fusion_strategy': FusionStrategy.FIXED},
    {'fusion_strategy': FusionStrategy.ADAPTIVE},
]


@pytest.mark.parametrize("changes", ABLATIONS, ids=lambda c: "-".join(f"{v.value}" for v in c.values()))
def test_ablation_axes_run(changes, dataset_dir, teacher_dir, tmp_path):
    _ablation(dataset_dir, teacher_dir, tmp_path / "run", 3, **changes)


@pytest.mark.slow
@pytest.mark.parametrize("changes", ABLATIONS, ids=lambda c: "-".join(f"{v.value}" for v in c.values()))
def test_ablation_axes_fifty_steps(changes, dataset_dir, teacher_dir, tmp_path):
    _ablation(dataset_dir, teacher_dir, tmp_path / "run", 50, **changes)


@pytest.mark.slow
def test_full_batch_steps_reduce_excess_loss(samples, tiny_config):
    from draco.training import make_loader
    from draco.training.trainer import forward_batch

    batch = next(iter(make_loader(SampleDataset(samples), len(samples), shuffle=False, seed=0)))
    torch.manual_seed(0)
    model = DracoNet(tiny_config)
    cfg = LossConfig()
    targets = model.codec.targets(batch['pose'], cfg.sigma_pos, cfg.sigma_trig)
    floor = float(pose_loss(_output(targets), targets, cfg))
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3)

    def excess():
        return float(pose_loss(forward_batch(model, batch), targets, cfg)) - floor

    model.train()
    start = excess()
    for _ in range(100):
        optimizer.zero_grad()
        pose_loss(forward_batch(model, batch), targets, cfg).backward()
        optimizer.step()
    assert excess() <= 0.5 * start


# --- acceptance runs ----------------------------------------------------------------

def _acceptance_cfg(out, dataset, modality=Modality.DUAL, seed=0, **schedule):
    return TrainConfig(
        out=str(out),
        model=ModelConfig(modality=modality),
        schedule=TrainSchedule(lr_start=1e-3, lr_end=1e-5, seed=seed, log_every=100, **schedule),
        data=DataConfig(dataset=str(dataset)),
        device="cuda" if torch.cuda.is_available() else "cpu",
    )


@pytest.mark.slow
def test_overfit_sixty_four_samples(tmp_path):
    plains = generate_plains(fingers=8, impressions=2, seed=11)
    samples, _ = synthesize_samples(plains, samples_per_plain=5, rot_range=180, trans_range=40, seed=12)
    assert len(samples) >= 64
    write_dataset(samples[:64], tmp_path / "data")

    # 2 steps per epoch, 2000 steps; no held-out fingers, so validation reads the training set
    cfg = _acceptance_cfg(tmp_path / "run", tmp_path / "data", batch_size=32, epochs=1000,
                          val_fraction=0.0, val_every=100)
    result = train(cfg)
    assert result.steps <= 2000

    trans, rot = _mean_errors(result.final_dir, SampleDataset(read_dataset(tmp_path / "data")))
    assert trans <= 5.0
    assert rot <= 3.0


@pytest.mark.slow
def test_dual_modal_complementarity(tmp_path):
    plains = generate_plains(fingers=275, impressions=2, seed=21)
    fingers = sorted({p.finger_id for p in plains})
    held_out = set(fingers[250:])
    train_samples, _ = synthesize_samples([p for p in plains if p.finger_id not in held_out],
                                          samples_per_plain=4, rot_range=180, trans_range=40, seed=22)
    test_samples, _ = synthesize_samples([p for p in plains if p.finger_id in held_out],
                                         samples_per_plain=4, rot_range=180, trans_range=40, seed=23)
    assert len(train_samples) >= 1800 and len(test_samples) >= 180
    write_dataset(train_samples, tmp_path / "train")
    write_dataset(test_samples, tmp_path / "test")
    test_set = SampleDataset(read_dataset(tmp_path / "test"))

    holds = 0
    for seed in range(3):
        errors = {}
        for modality in (Modality.DUAL, Modality.FP, Modality.CAP):
            cfg = _acceptance_cfg(tmp_path / f"{modality.value}_{seed}", tmp_path / "train", modality, seed,
                                  batch_size=64, epochs=30, val_every=10)
            errors[modality] = _mean_errors(train(cfg).final_dir, test_set)
        dual_rot = errors[Modality.DUAL][1]
        fp_trans, fp_rot = errors[Modality.FP]
        cap_trans = errors[Modality.CAP][0]
        holds += dual_rot <= fp_rot and fp_trans <= cap_trans
    assert holds >= 2
