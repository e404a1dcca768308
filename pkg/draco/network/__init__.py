"""
DRACO - Network.

Two modality encoders, a router-weighted three-expert fusion stage and
distribution heads over the codec tables.

Architecture:
    network/
    ├── blocks.py      # aggregated-residual block, channel/spatial attention
    ├── encoder.py     # ModalityEncoder (ridge: stride 2, capacitive: stride 1)
    ├── experts.py     # Expert (projector + heads), Router, Adapter
    ├── model.py       # DracoNet, ExpertOutput, teacher_forward
    └── checkpoint.py  # model.pt + model.json sidecar

Usage:
    from draco.network import DracoNet, save_checkpoint, load_checkpoint

    model = DracoNet(ModelConfig())
    out = model(patch, cap)
    poses = model.codec.decode(out.final)
"""

from .blocks import (
    CBAM,
    AggregatedResidualBlock,
    ChannelAttention,
    SpatialAttention,
)

from .encoder import (
    ModalityEncoder,
    ShapeMismatch,
)

from .experts import (
    EXPERTS,
    Adapter,
    Expert,
    Router,
    mix_distributions,
)

from .model import (
    DracoNet,
    ExpertOutput,
    count_parameters,
    freeze,
    parameter_checksum,
    teacher_forward,
)

from .checkpoint import (
    CheckpointError,
    CodecMismatch,
    checkpoint_hash,
    check_codec,
    load_checkpoint,
    read_sidecar,
    save_checkpoint,
)


__all__ = [
    # Blocks
    'CBAM',
    'AggregatedResidualBlock',
    'ChannelAttention',
    'SpatialAttention',
    # Encoder
    'ModalityEncoder',
    'ShapeMismatch',
    # Fusion
    'EXPERTS',
    'Adapter',
    'Expert',
    'Router',
    'mix_distributions',
    # Model
    'DracoNet',
    'ExpertOutput',
    'count_parameters',
    'freeze',
    'parameter_checksum',
    'teacher_forward',
    # Checkpoints
    'CheckpointError',
    'CodecMismatch',
    'checkpoint_hash',
    'check_codec',
    'load_checkpoint',
    'read_sidecar',
    'save_checkpoint',
]
