"""
DRACO - Dual-Modal Pose Network.

    patch ─► ridge encoder ─► f_P ─────────────► expert P ─► d_P ┐
                                 └─┐                             │
                                   concat ─► f_F ─► expert F ─► d_F ├─► Σ w_i d_i ─► final
                                 ┌─┘   │                         │
    cap ───► cap encoder ───► f_C ─────┼───────► expert C ─► d_C ┘
                                       ├─► router ─► (w_P, w_F, w_C)
                                       └─► adapter ─► aligned (knowledge transfer)

Modalities:
    dual   - both branches, three experts, fusion by the configured strategy
    fp     - ridge branch and expert P only
    cap    - capacitive branch and expert C only
    plain  - full-fingerprint model (ridge geometry at teacher_size), used
             as the frozen knowledge-transfer teacher
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import torch
import torch.nn as nn

from ..codec import PoseCodec
from ..config import DecodeMode, FusionStrategy, Modality, ModelConfig
from .encoder import ModalityEncoder, ShapeMismatch
from .experts import EXPERTS, Adapter, Expert, Router, mix_distributions

logger = logging.getLogger(__name__)

Distributions = Dict[str, torch.Tensor]


@dataclass
class ExpertOutput:
    """Everything one forward pass produces."""
    features: Dict[str, torch.Tensor]               # 'P', 'C', 'F' -> (B, d)
    weights: torch.Tensor                           # (B, 3), order P, F, C
    dists: Dict[str, Distributions]                 # expert -> component -> (B, n)
    final: Distributions
    aligned: Optional[torch.Tensor] = None          # adapter output
    extras: Dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def batch_size(self) -> int:
        return self.weights.shape[0]

    def expert_weight(self, expert: str) -> torch.Tensor:
        return self.weights[:, EXPERTS.index(expert)]


class DracoNet(nn.Module):
    """
    Pose network for any modality.

    Usage:
        model = DracoNet(ModelConfig())
        out = model(patch, cap)             # (B, 1, 132, 132), (B, 1, 12, 12)
        poses = model.codec.decode(out.final)
    """

    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        self.modality = Modality(cfg.modality)
        self.fusion_strategy = FusionStrategy(cfg.fusion_strategy)
        self.codec = PoseCodec(cfg.codec)
        sizes = self.codec.sizes()

        self.ridge_encoder: Optional[ModalityEncoder] = None
        self.cap_encoder: Optional[ModalityEncoder] = None
        experts = {}

        if self.modality in (Modality.DUAL, Modality.FP):
            self.ridge_encoder = ModalityEncoder(cfg.ridge_encoder, cfg.patch_size)
            experts['P'] = Expert(cfg.ridge_encoder.feature_dim, cfg.projector_hidden,
                                  cfg.projector_blocks, sizes)
        if self.modality == Modality.PLAIN:
            self.ridge_encoder = ModalityEncoder(cfg.ridge_encoder, cfg.teacher_size)
            experts['P'] = Expert(cfg.ridge_encoder.feature_dim, cfg.projector_hidden,
                                  cfg.projector_blocks, sizes)
        if self.modality in (Modality.DUAL, Modality.CAP):
            self.cap_encoder = ModalityEncoder(cfg.cap_encoder, cfg.cap_grid)
            experts['C'] = Expert(cfg.cap_encoder.feature_dim, cfg.projector_hidden,
                                  cfg.projector_blocks, sizes)

        self.router: Optional[Router] = None
        self.fixed_logits: Optional[nn.Parameter] = None
        if self.modality == Modality.DUAL:
            fused = cfg.ridge_encoder.feature_dim + cfg.cap_encoder.feature_dim
            experts['F'] = Expert(fused, cfg.projector_hidden, cfg.projector_blocks, sizes)
            self.router = Router(fused, cfg.router_hidden)
            self.fixed_logits = nn.Parameter(torch.zeros(len(EXPERTS)))

        self.experts = nn.ModuleDict(experts)

        self.adapter: Optional[Adapter] = None
        if self.modality != Modality.PLAIN:
            self.adapter = Adapter(self.student_feature_dim, cfg.adapter_hidden, cfg.teacher_dim)

        logger.debug(
            f"built {self.modality.value} model, {count_parameters(self) / 1e6:.2f} M parameters"
        )

    @property
    def student_feature_dim(self) -> int:
        """Width of the feature the adapter consumes (f_F for dual)."""
        cfg = self.config
        if self.modality == Modality.DUAL:
            return cfg.ridge_encoder.feature_dim + cfg.cap_encoder.feature_dim
        if self.modality == Modality.CAP:
            return cfg.cap_encoder.feature_dim
        return cfg.ridge_encoder.feature_dim

    @property
    def feature_dim(self) -> int:
        """Width of the feature a teacher exposes to students."""
        return self.config.ridge_encoder.feature_dim

    # =========================================================================
    # Components
    # =========================================================================

    def encode_ridge(self, patch: torch.Tensor) -> torch.Tensor:
        if self.ridge_encoder is None:
            raise ShapeMismatch(f"{self.modality.value} model has no ridge branch")
        return self.ridge_encoder(patch)

    def encode_cap(self, cap: torch.Tensor) -> torch.Tensor:
        if self.cap_encoder is None:
            raise ShapeMismatch(f"{self.modality.value} model has no capacitive branch")
        return self.cap_encoder(cap)

    def route(self, f_fused: torch.Tensor) -> torch.Tensor:
        if self.router is None:
            raise ShapeMismatch(f"{self.modality.value} model has no router")
        return self.router(f_fused)

    def expert_forward(self, f: torch.Tensor, which: str) -> Distributions:
        if which not in self.experts:
            raise ShapeMismatch(f"{self.modality.value} model has no expert '{which}'")
        return self.experts[which](f)

    def adapt(self, f: torch.Tensor) -> torch.Tensor:
        if self.adapter is None:
            raise ShapeMismatch("teacher model has no adapter")
        return self.adapter(f)

    def fusion_weights(
        self,
        f_fused: torch.Tensor,
        strategy: Optional[FusionStrategy] = None,
    ) -> torch.Tensor:
        strategy = FusionStrategy(strategy or self.fusion_strategy)
        batch = f_fused.shape[0]
        if strategy == FusionStrategy.ADAPTIVE:
            return self.route(f_fused)
        if strategy == FusionStrategy.FIXED:
            return torch.softmax(self.fixed_logits, dim=0).unsqueeze(0).expand(batch, -1)
        return f_fused.new_full((batch, len(EXPERTS)), 1.0 / len(EXPERTS))

    # =========================================================================
    # Forward passes
    # =========================================================================

    def forward(
        self,
        patch: Optional[torch.Tensor] = None,
        cap: Optional[torch.Tensor] = None,
        fusion_strategy: Optional[FusionStrategy] = None,
    ) -> ExpertOutput:
        if self.modality == Modality.FP or self.modality == Modality.PLAIN:
            return self.forward_single_modal(patch, 'fp')
        if self.modality == Modality.CAP:
            return self.forward_single_modal(cap, 'cap')
        if patch is None or cap is None:
            raise ShapeMismatch("dual-modal model needs both a ridge patch and a capacitive image")

        f_p = self.encode_ridge(patch)
        f_c = self.encode_cap(cap)
        f_f = torch.cat([f_p, f_c], dim=1)

        dists = {
            'P': self.expert_forward(f_p, 'P'),
            'F': self.expert_forward(f_f, 'F'),
            'C': self.expert_forward(f_c, 'C'),
        }
        weights = self.fusion_weights(f_f, fusion_strategy)
        return ExpertOutput(
            features={'P': f_p, 'C': f_c, 'F': f_f},
            weights=weights,
            dists=dists,
            final=mix_distributions(dists, weights),
            aligned=self.adapt(f_f),
        )

    def forward_single_modal(self, x: torch.Tensor, branch: str) -> ExpertOutput:
        """Only the matching encoder and expert run; the weight is 1 on that expert."""
        if x is None:
            raise ShapeMismatch(f"{self.modality.value} model needs its '{branch}' input")
        if branch == 'fp':
            f = self.encode_ridge(x)
            expert = 'P'
        elif branch == 'cap':
            f = self.encode_cap(x)
            expert = 'C'
        else:
            raise ValueError(f"unknown branch '{branch}'")

        d = self.expert_forward(f, expert)
        aligned = None
        if self.adapter is not None and self.modality != Modality.DUAL:
            aligned = self.adapt(f)
        weights = f.new_zeros((f.shape[0], len(EXPERTS)))
        weights[:, EXPERTS.index(expert)] = 1.0
        return ExpertOutput(
            features={expert: f},
            weights=weights,
            dists={expert: d},
            final=dict(d),
            aligned=aligned,
        )

    def predict(self, patch=None, cap=None, mode=None) -> torch.Tensor:
        """Inference helper: (B, 3) decoded poses."""
        with torch.no_grad():
            out = self(patch, cap)
        return self.codec.decode(out.final, mode or DecodeMode.SUM)


def count_parameters(model: nn.Module, trainable_only: bool = False) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad or not trainable_only)


def freeze(model: nn.Module) -> nn.Module:
    """Inference mode, no gradients."""
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def teacher_forward(teacher: DracoNet, plain: torch.Tensor):
    """Frozen teacher pass: (feature, distribution set), never tracked by autograd."""
    if teacher.modality != Modality.PLAIN:
        raise ShapeMismatch(f"teacher must be a plain model, got {teacher.modality.value}")
    if teacher.training:
        teacher.eval()
    with torch.no_grad():
        out = teacher.forward_single_modal(plain, 'fp')
    return out.features['P'], out.final


def parameter_checksum(model: nn.Module) -> float:
    """Sum over all parameters in float64; detects any weight change."""
    with torch.no_grad():
        return float(sum(p.double().sum() for p in model.parameters()))
