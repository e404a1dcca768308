"""
DRACO - Experts, Router and Adapter.

Expert   = projector (linear + residual perceptron blocks) + four linear
           heads with softmax, one per pose component.
Router   = two fully connected layers + softmax over (P, F, C).
Adapter  = two fully connected layers mapping the student fused feature
           to the teacher feature width.
"""

from typing import Dict

import torch
import torch.nn as nn

from ..codec import COMPONENTS
from .encoder import ShapeMismatch

EXPERTS = ('P', 'F', 'C')


class ResidualMLPBlock(nn.Module):
    """x + Linear(GELU(Linear(LayerNorm(x))))."""

    def __init__(self, dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.LayerNorm(dim),
            nn.Linear(dim, dim),
            nn.GELU(),
            nn.Linear(dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.net(x)


class Expert(nn.Module):
    """Feature vector -> distribution set over the codec tables."""

    def __init__(self, in_dim: int, hidden: int, blocks: int, sizes: Dict[str, int]):
        super().__init__()
        self.in_dim = in_dim
        self.projector = nn.Sequential(
            nn.Linear(in_dim, hidden),
            *[ResidualMLPBlock(hidden) for _ in range(blocks)],
        )
        self.heads = nn.ModuleDict({name: nn.Linear(hidden, sizes[name]) for name in COMPONENTS})

    def logits(self, f: torch.Tensor) -> Dict[str, torch.Tensor]:
        if f.dim() != 2 or f.shape[1] != self.in_dim:
            raise ShapeMismatch(f"expert expects (B, {self.in_dim}), got {tuple(f.shape)}")
        h = self.projector(f)
        return {name: head(h) for name, head in self.heads.items()}

    def forward(self, f: torch.Tensor) -> Dict[str, torch.Tensor]:
        return {name: torch.softmax(z, dim=-1) for name, z in self.logits(f).items()}


class Router(nn.Module):
    """Fused feature -> (w_P, w_F, w_C) on the simplex."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.in_dim = in_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, len(EXPERTS)),
        )

    def forward(self, f_fused: torch.Tensor) -> torch.Tensor:
        if f_fused.dim() != 2 or f_fused.shape[1] != self.in_dim:
            raise ShapeMismatch(f"router expects (B, {self.in_dim}), got {tuple(f_fused.shape)}")
        return torch.softmax(self.net(f_fused), dim=-1)


class Adapter(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        if f.dim() != 2 or f.shape[1] != self.in_dim:
            raise ShapeMismatch(f"adapter expects (B, {self.in_dim}), got {tuple(f.shape)}")
        return self.net(f)


def mix_distributions(
    dists: Dict[str, Dict[str, torch.Tensor]],
    weights: torch.Tensor,
) -> Dict[str, torch.Tensor]:
    """final_phi = sum_i w_i * d_i_phi, experts ordered (P, F, C)."""
    final = {}
    for name in COMPONENTS:
        final[name] = sum(
            weights[:, i:i + 1] * dists[e][name] for i, e in enumerate(EXPERTS) if e in dists
        )
    return final
