"""
DRACO - Modality Encoder.

Stem (two conv/BN/ReLU groups) -> four aggregated-residual layers, each
followed by CBAM -> global average pooling -> feature vector.

The ridge branch uses stride 2 in every layer (132 -> 9); the capacitive
branch keeps stride 1 so the 12 x 12 grid is never downsampled.
"""

import logging

import torch
import torch.nn as nn

from ..config import EncoderConfig
from ..errors import DataError
from .blocks import CBAM, AggregatedResidualBlock, conv_bn_relu

logger = logging.getLogger(__name__)


class ShapeMismatch(DataError, ValueError):
    """Input tensor does not have the shape a module expects."""
    pass


class ModalityEncoder(nn.Module):
    """Single-channel image -> feature vector of width feature_dim."""

    def __init__(self, config: EncoderConfig, input_size: int):
        super().__init__()
        if len(config.block_counts) != 4 or len(config.channels) != 4 or len(config.layer_strides) != 4:
            raise ValueError("encoder needs exactly four layers")
        self.config = config
        self.input_size = input_size

        stem_mid, stem_out = config.stem_channels
        self.stem = nn.Sequential(conv_bn_relu(1, stem_mid), conv_bn_relu(stem_mid, stem_out))

        layers = []
        in_channels = stem_out
        for count, out_channels, stride in zip(
            config.block_counts, config.channels, config.layer_strides
        ):
            blocks = [AggregatedResidualBlock(in_channels, out_channels, stride, config.cardinality)]
            blocks += [
                AggregatedResidualBlock(out_channels, out_channels, 1, config.cardinality)
                for _ in range(count - 1)
            ]
            layers.append(nn.Sequential(*blocks))
            layers.append(CBAM(out_channels, config.attention_reduction))
            in_channels = out_channels
        self.layers = nn.Sequential(*layers)

        self.pool = nn.AdaptiveAvgPool2d(1)
        if in_channels == config.feature_dim:
            self.project = nn.Identity()
        else:
            self.project = nn.Linear(in_channels, config.feature_dim)

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        expected = (1, self.input_size, self.input_size)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatch(f"expected (B, {', '.join(map(str, expected))}), got {tuple(x.shape)}")
        return x

    def feature_map(self, x: torch.Tensor) -> torch.Tensor:
        """Spatial output of the last layer (before pooling)."""
        return self.layers(self.stem(self.check_input(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.project(self.pool(self.feature_map(x)).flatten(1))
