import pytest
import torch

from draco.config import CodecConfig, FusionStrategy, Modality
from draco.network import (
    EXPERTS,
    CheckpointError,
    CodecMismatch,
    DracoNet,
    Expert,
    ShapeMismatch,
    count_parameters,
    freeze,
    load_checkpoint,
    mix_distributions,
    parameter_checksum,
    save_checkpoint,
    teacher_forward,
)
from draco.network.checkpoint import WEIGHTS_FILE

from conftest import tiny_model_config

SIZES = {'x': 256, 'y': 256, 'cos': 120, 'sin': 120}


def _inputs(batch=2, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(batch, 1, 132, 132, generator=g), torch.rand(batch, 1, 12, 12, generator=g)


@pytest.fixture
def model(tiny_config):
    torch.manual_seed(0)
    return DracoNet(tiny_config).eval()


# --- encoders -----------------------------------------------------------------

def test_forward_shapes_and_normalization(model):
    patch, cap = _inputs(3)
    out = model(patch, cap)
    assert out.features['P'].shape == (3, 32)
    assert out.features['C'].shape == (3, 32)
    assert out.features['F'].shape == (3, 64)
    for name, n in SIZES.items():
        assert out.final[name].shape == (3, n)
        assert torch.all(torch.isfinite(out.final[name]))
        assert torch.allclose(out.final[name].sum(-1), torch.ones(3), atol=1e-6)
    assert out.aligned.shape == (3, 32)


def test_encoders_deterministic_in_eval(model):
    patch, cap = _inputs(1)
    assert torch.equal(model.encode_ridge(patch), model.encode_ridge(patch.clone()))
    assert torch.equal(model.encode_cap(cap), model.encode_cap(cap.clone()))


def test_batch_matches_single(model):
    patch, cap = _inputs(4)
    with torch.no_grad():
        ridge = model.encode_ridge(patch)
        capf = model.encode_cap(cap)
        for i in range(4):
            assert torch.allclose(ridge[i], model.encode_ridge(patch[i:i + 1])[0], atol=1e-5)
            assert torch.allclose(capf[i], model.encode_cap(cap[i:i + 1])[0], atol=1e-5)


def test_stride_contract(model):
    patch, cap = _inputs(1)
    with torch.no_grad():
        ridge_map = model.ridge_encoder.feature_map(patch)
        cap_map = model.cap_encoder.feature_map(cap)
    assert ridge_map.shape[-1] == 9          # ceil(132 / 16)
    assert cap_map.shape[-2:] == (12, 12)


def test_encoder_accepts_missing_channel_axis(model):
    patch, _ = _inputs(2)
    with torch.no_grad():
        assert torch.equal(model.encode_ridge(patch[:, 0]), model.encode_ridge(patch))


def test_encoder_shape_mismatch(model):
    with pytest.raises(ShapeMismatch):
        model.encode_ridge(torch.rand(1, 1, 128, 128))
    with pytest.raises(ShapeMismatch):
        model.encode_cap(torch.rand(1, 3, 12, 12))


# --- router and experts -------------------------------------------------------

def test_router_simplex(model):
    torch.manual_seed(1)
    f = torch.randn(1000, 64) * 10
    with torch.no_grad():
        w = model.route(f)
    assert torch.all(torch.isfinite(w))
    assert torch.all(w >= 0) and torch.all(w <= 1)
    assert torch.allclose(w.sum(-1), torch.ones(1000), atol=1e-6)


def test_zero_router_is_uniform(model):
    with torch.no_grad():
        model.router.net[-1].weight.zero_()
        model.router.net[-1].bias.zero_()
        w = model.route(torch.randn(5, 64))
    assert torch.allclose(w, torch.full((5, 3), 1 / 3), atol=1e-7)


def test_expert_output_lengths(model):
    with torch.no_grad():
        d = model.expert_forward(torch.randn(4, 64), 'F')
    assert {k: v.shape[1] for k, v in d.items()} == SIZES
    for v in d.values():
        assert torch.allclose(v.sum(-1), torch.ones(4), atol=1e-6)


def test_expert_constant_logit_shift(model):
    f = torch.randn(4, 32)
    expert = model.experts['P']
    with torch.no_grad():
        before = expert(f)['cos']
        expert.heads['cos'].bias += 3.0
        after = expert(f)['cos']
    assert torch.allclose(before, after, atol=1e-6)


def test_expert_gradient_matches_finite_differences():
    torch.manual_seed(0)
    expert = Expert(8, 16, 2, {'x': 10, 'y': 10, 'cos': 6, 'sin': 6}).double()
    target = {k: torch.softmax(torch.randn(4, n, dtype=torch.float64), -1)
              for k, n in {'x': 10, 'y': 10, 'cos': 6, 'sin': 6}.items()}

    def loss(f):
        d = expert(f)
        return sum(-(target[k] * torch.log(d[k] + 1e-12)).sum(-1).mean() for k in d)

    f = torch.randn(4, 8, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(loss, (f,), eps=1e-6, atol=1e-6, rtol=1e-3)


def test_unknown_expert(model):
    with pytest.raises(ShapeMismatch):
        DracoNet(tiny_model_config(modality=Modality.FP)).expert_forward(torch.randn(1, 64), 'F')


# --- fusion -------------------------------------------------------------------

@pytest.mark.parametrize("strategy", list(FusionStrategy))
def test_fusion_recomposition(model, strategy):
    # 1000 seeded inputs in batches of 100
    for seed in range(10):
        patch, cap = _inputs(100, seed=100 + seed)
        with torch.no_grad():
            out = model(patch, cap, fusion_strategy=strategy)
        assert torch.allclose(out.weights.sum(-1), torch.ones(100), atol=1e-6)
        for name in SIZES:
            expected = sum(out.weights[:, i:i + 1] * out.dists[e][name] for i, e in enumerate(EXPERTS))
            assert torch.allclose(out.final[name], expected, atol=1e-6)
            assert torch.allclose(out.final[name].sum(-1), torch.ones(100), atol=1e-5)


def test_equal_strategy_weights(model):
    patch, cap = _inputs(2)
    with torch.no_grad():
        out = model(patch, cap, fusion_strategy=FusionStrategy.EQUAL)
    assert torch.allclose(out.weights, torch.full((2, 3), 1 / 3))


def test_identical_experts_pass_through():
    d = torch.softmax(torch.randn(3, 256), -1)
    dists = {e: {'x': d} for e in EXPERTS}
    weights = torch.softmax(torch.randn(3, 3), -1)
    final = mix_distributions(dists, weights)
    assert torch.allclose(final['x'], d, atol=1e-6)


def test_equal_weights_on_one_hot_experts():
    dists = {}
    for e, k in zip(EXPERTS, (10, 20, 30)):
        one_hot = torch.zeros(1, 256)
        one_hot[0, k] = 1.0
        dists[e] = {name: one_hot for name in ('x', 'y', 'cos', 'sin')}
    final = mix_distributions(dists, torch.full((1, 3), 1 / 3))
    assert final['x'][0, [10, 20, 30]] == pytest.approx([1 / 3] * 3)
    assert float(final['x'].sum()) == pytest.approx(1.0)


def test_dual_model_needs_both_inputs(model):
    patch, _ = _inputs(1)
    with pytest.raises(ShapeMismatch):
        model(patch, None)


# --- single modal -------------------------------------------------------------

def test_fp_only_model():
    torch.manual_seed(0)
    fp = DracoNet(tiny_model_config(modality=Modality.FP)).eval()
    patch, _ = _inputs(2)
    with torch.no_grad():
        out = fp(patch)
        direct = fp.expert_forward(fp.encode_ridge(patch), 'P')
    assert fp.cap_encoder is None and 'F' not in fp.experts
    for name in SIZES:
        assert torch.equal(out.final[name], direct[name])
    assert torch.equal(out.weights, torch.tensor([[1.0, 0.0, 0.0]] * 2))


def test_cap_only_model():
    torch.manual_seed(0)
    cap_model = DracoNet(tiny_model_config(modality=Modality.CAP)).eval()
    _, cap = _inputs(2)
    with torch.no_grad():
        out = cap_model(cap=cap)
        direct = cap_model.expert_forward(cap_model.encode_cap(cap), 'C')
    for name in SIZES:
        assert torch.equal(out.final[name], direct[name])
    assert torch.equal(out.weights[:, 2], torch.ones(2))


def test_dual_differs_from_ridge_expert_alone(model):
    patch, cap = _inputs(2)
    with torch.no_grad():
        dual = model(patch, cap).final['x']
        ridge_only = model.forward_single_modal(patch, 'fp').final['x']
    assert not torch.allclose(dual, ridge_only)


def test_single_modal_parameter_counts(tiny_config):
    dual = count_parameters(DracoNet(tiny_config))
    fp = count_parameters(DracoNet(tiny_model_config(modality=Modality.FP)))
    assert 0 < fp < dual


# --- teacher and adapter ------------------------------------------------------

@pytest.fixture
def teacher():
    torch.manual_seed(5)
    return freeze(DracoNet(tiny_model_config(modality=Modality.PLAIN)))


def test_teacher_is_deterministic(teacher):
    plain = torch.rand(2, 1, 128, 128)
    f1, d1 = teacher_forward(teacher, plain)
    f2, d2 = teacher_forward(teacher, plain)
    assert torch.equal(f1, f2)
    assert torch.equal(d1['sin'], d2['sin'])
    assert not f1.requires_grad
    assert teacher.adapter is None


def test_teacher_width_matches_adapter(model, teacher):
    f, _ = teacher_forward(teacher, torch.rand(1, 1, 128, 128))
    patch, cap = _inputs(1)
    assert model(patch, cap).aligned.shape[1] == f.shape[1]


def test_teacher_frozen_across_student_step(model, teacher):
    model.train()
    before = parameter_checksum(teacher)
    optimizer = torch.optim.AdamW(model.parameters(), lr=1e-2)
    patch, cap = _inputs(2)
    plain = torch.rand(2, 1, 128, 128)
    for _ in range(2):
        f_t, _ = teacher_forward(teacher, plain)
        loss = ((model(patch, cap).aligned - f_t) ** 2).mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    assert parameter_checksum(teacher) == before
    assert all(p.grad is None for p in teacher.parameters())


def test_teacher_must_be_plain(model):
    with pytest.raises(ShapeMismatch):
        teacher_forward(model, torch.rand(1, 1, 128, 128))


def test_adapter_stability_and_gradient(model):
    torch.manual_seed(3)
    with torch.no_grad():
        out = model.adapt(torch.randn(1000, 64) * 5)
    assert out.shape == (1000, 32)
    assert torch.all(torch.isfinite(out))

    model.train()
    patch, cap = _inputs(4)
    aligned = model(patch, cap).aligned
    ((aligned - torch.randn(4, 32)) ** 2).mean().backward()
    grad_norm = sum(float(p.grad.norm()) for p in model.adapter.parameters())
    assert grad_norm > 0


# --- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip(model, tmp_path):
    save_checkpoint(model, tmp_path / "ckpt", provenance={'seed': 3})
    loaded, meta = load_checkpoint(tmp_path / "ckpt", expected_codec=CodecConfig())
    assert meta['provenance'] == {'seed': 3}
    assert meta['fusion_strategy'] == 'adaptive'
    patch, cap = _inputs(2)
    with torch.no_grad():
        a = model(patch, cap).final['y']
        b = loaded(patch, cap).final['y']
    assert torch.allclose(a, b, atol=1e-7)


def test_checkpoint_codec_mismatch(model, tmp_path):
    save_checkpoint(model, tmp_path)
    with pytest.raises(CodecMismatch, match="trig_bins"):
        load_checkpoint(tmp_path, expected_codec=CodecConfig(trig_bins=90))


def test_checkpoint_tampered_weights(model, tmp_path):
    save_checkpoint(model, tmp_path)
    with open(tmp_path / WEIGHTS_FILE, 'ab') as f:
        f.write(b'\0')
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope")
