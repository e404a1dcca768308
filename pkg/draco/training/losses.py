"""
DRACO - Losses.

    L        = L_pose + lambda_kt * L_KT
    L_pose   = sum_e lambda_e * sum_phi lambda_phi * dist(d_phi^e, target_phi)
               over e in {P, C, F, final}, phi in {x, y, cos, sin}
    L_KT     = relation: symmetric InfoNCE between adapter(f_F) and teacher features
               feature:  mean squared difference
               response: CE of student final vs teacher final distributions
               off:      0

Distances: CE (-sum t log(p + eps)) or base-2 Jensen-Shannon. All losses are
batch means.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import torch
import torch.nn.functional as F

from ..codec import COMPONENTS
from ..config import Distance, KTMode, LossConfig
from ..errors import DataError, NumericalError
from ..network import ExpertOutput

EPS = 1e-12
FEATURE_EPS = 1e-12
LOSS_EXPERTS = ('P', 'C', 'F', 'final')


class LengthMismatch(DataError, ValueError):
    """Prediction and target distributions have different shapes."""
    pass


class DegenerateFeature(NumericalError):
    """Zero feature row; cosine similarity undefined."""
    pass


class NonFiniteLoss(NumericalError):
    """Loss became NaN or Inf during training."""
    pass


# =========================================================================
# Distances
# =========================================================================

def cross_entropy(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(B, n) -> (B,)"""
    return -(target * torch.log(pred + EPS)).sum(dim=-1)


def js_divergence(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Base-2 Jensen-Shannon divergence, (B, n) -> (B,), bounded by 1."""
    mid = 0.5 * (pred + target)
    kl_pm = (pred * (torch.log2(pred + EPS) - torch.log2(mid + EPS))).sum(dim=-1)
    kl_tm = (target * (torch.log2(target + EPS) - torch.log2(mid + EPS))).sum(dim=-1)
    return 0.5 * (kl_pm + kl_tm)


def pose_component_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    distance: Distance = Distance.CE,
) -> torch.Tensor:
    """Batch mean distance between predicted and target distributions."""
    if pred.shape != target.shape:
        raise LengthMismatch(
            f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}"
        )
    if pred.dim() == 1:
        pred, target = pred.unsqueeze(0), target.unsqueeze(0)
    if Distance(distance) == Distance.JS:
        return js_divergence(pred, target).mean()
    return cross_entropy(pred, target).mean()


# =========================================================================
# Pose supervision
# =========================================================================

def expert_sets(out: ExpertOutput) -> Dict[str, Dict[str, torch.Tensor]]:
    """Distribution sets that take part in L_pose; experts a model lacks are skipped."""
    sets = {e: out.dists[e] for e in LOSS_EXPERTS if e in out.dists}
    sets['final'] = out.final
    return sets


def pose_loss_terms(
    out: ExpertOutput,
    targets: Dict[str, torch.Tensor],
    cfg: LossConfig,
) -> Dict[Tuple[str, str], torch.Tensor]:
    """Unweighted distance per (expert, component)."""
    terms = {}
    for expert, dists in expert_sets(out).items():
        for name in COMPONENTS:
            terms[(expert, name)] = pose_component_loss(dists[name], targets[name], cfg.distance)
    return terms


def weighted_pose_loss(terms: Dict[Tuple[str, str], torch.Tensor], cfg: LossConfig) -> torch.Tensor:
    total = None
    for (expert, name), value in terms.items():
        term = cfg.lambda_experts[expert] * cfg.lambda_components[name] * value
        total = term if total is None else total + term
    return total


def pose_loss(
    out: ExpertOutput,
    targets: Dict[str, torch.Tensor],
    cfg: LossConfig,
) -> torch.Tensor:
    return weighted_pose_loss(pose_loss_terms(out, targets, cfg), cfg)


# =========================================================================
# Knowledge transfer
# =========================================================================

def _check_rows(x: torch.Tensor, name: str) -> None:
    norms = x.norm(dim=1)
    if bool(torch.any(norms < FEATURE_EPS)):
        bad = torch.nonzero(norms < FEATURE_EPS).flatten().tolist()
        raise DegenerateFeature(f"{name} rows {bad} are zero vectors")


def infonce_relation_loss(
    student: torch.Tensor,
    teacher: torch.Tensor,
    tau: float = 8.0,
) -> torch.Tensor:
    """
    Symmetric InfoNCE over matched rows: row i of ``teacher`` is the
    positive for row i of ``student`` and vice versa.

        z(D_i, P) = exp(cos(D_i, P_i) / tau) / sum_j exp(cos(D_i, P_j) / tau)
        L = -(1 / 2B) sum_i [log z(D_i, P) + log z(P_i, D)]
    """
    if student.shape != teacher.shape:
        raise LengthMismatch(
            f"student features {tuple(student.shape)} vs teacher {tuple(teacher.shape)}"
        )
    _check_rows(student, "student")
    _check_rows(teacher, "teacher")

    logits = F.normalize(student, dim=1) @ F.normalize(teacher, dim=1).t() / tau
    labels = torch.arange(student.shape[0], device=student.device)
    return 0.5 * (F.cross_entropy(logits, labels) + F.cross_entropy(logits.t(), labels))


def response_loss(
    student: Dict[str, torch.Tensor],
    teacher: Dict[str, torch.Tensor],
) -> torch.Tensor:
    """CE of the student final set against the teacher's, summed over components."""
    return sum(cross_entropy(student[name], teacher[name]).mean() for name in COMPONENTS)


def kt_loss(
    out: ExpertOutput,
    teacher_features: Optional[torch.Tensor],
    teacher_dists: Optional[Dict[str, torch.Tensor]],
    mode: KTMode,
    tau: float = 8.0,
) -> torch.Tensor:
    mode = KTMode(mode)
    if mode == KTMode.OFF:
        return out.weights.new_zeros(())
    if mode == KTMode.RESPONSE:
        if teacher_dists is None:
            raise ValueError("response transfer needs teacher distributions")
        return response_loss(out.final, teacher_dists)

    if teacher_features is None:
        raise ValueError(f"{mode.value} transfer needs teacher features")
    if out.aligned is None:
        raise ValueError("model has no adapter output")
    if mode == KTMode.RELATION:
        return infonce_relation_loss(out.aligned, teacher_features, tau)
    if out.aligned.shape != teacher_features.shape:
        raise LengthMismatch(
            f"adapter output {tuple(out.aligned.shape)} vs teacher {tuple(teacher_features.shape)}"
        )
    return F.mse_loss(out.aligned, teacher_features)


def total_loss(
    pose: torch.Tensor,
    kt: torch.Tensor,
    lambda_kt: float,
    mode: KTMode = KTMode.RELATION,
) -> torch.Tensor:
    if KTMode(mode) == KTMode.OFF:
        return pose
    return pose + lambda_kt * kt


# =========================================================================
# Breakdown used by the trainer
# =========================================================================

@dataclass
class LossBreakdown:
    """Total loss plus the parts that go into the metrics log."""
    total: torch.Tensor
    pose: torch.Tensor
    kt: torch.Tensor
    terms: Dict[str, float] = field(default_factory=dict)

    def is_finite(self) -> bool:
        return bool(torch.isfinite(self.total))

    def to_dict(self) -> Dict[str, float]:
        result = {
            'total': float(self.total.detach()),
            'pose': float(self.pose.detach()),
            'kt': float(self.kt.detach()),
        }
        result.update(self.terms)
        return result


def compute_losses(
    out: ExpertOutput,
    targets: Dict[str, torch.Tensor],
    cfg: LossConfig,
    teacher_features: Optional[torch.Tensor] = None,
    teacher_dists: Optional[Dict[str, torch.Tensor]] = None,
) -> LossBreakdown:
    terms = pose_loss_terms(out, targets, cfg)
    pose = weighted_pose_loss(terms, cfg)
    per_expert: Dict[str, float] = {}
    for (expert, _), value in terms.items():
        per_expert[f"pose_{expert}"] = per_expert.get(f"pose_{expert}", 0.0) + float(value.detach())

    kt = kt_loss(out, teacher_features, teacher_dists, cfg.kt_mode, cfg.tau)
    total = total_loss(pose, kt, cfg.lambda_kt, cfg.kt_mode)
    return LossBreakdown(total=total, pose=pose, kt=kt, terms=per_expert)
