"""
DRACO - Pose Codec.

Decoupled probability-distribution representation of 2-D fingerprint pose.

Architecture:
    codec/
    ├── models.py   # Pose, ClassEmbeddingTable, PoseDistributionSet
    └── codec.py    # encode/decode functions and the batched PoseCodec

Usage:
    from draco.codec import Pose, pose_to_targets, dists_to_pose

    targets = pose_to_targets(Pose(10, -20, 30), sigma_pos=3.5, sigma_trig=2.5)
    pose = dists_to_pose(targets)
"""

from .models import (
    COMPONENTS,
    ClassEmbeddingTable,
    Pose,
    PoseDistributionSet,
    normalize_angle,
)

from .codec import (
    CodecError,
    InvalidRange,
    OutOfDomain,
    DegenerateDistribution,
    DirectionUndefined,
    PoseCodec,
    build_embeddings,
    encode_value,
    decode_value,
    decode_value_argmax,
    pose_to_targets,
    dists_to_pose,
    direction_from_trig,
    default_pos_table,
    default_trig_table,
)


__all__ = [
    # Models
    'COMPONENTS',
    'ClassEmbeddingTable',
    'Pose',
    'PoseDistributionSet',
    'normalize_angle',
    # Errors
    'CodecError',
    'InvalidRange',
    'OutOfDomain',
    'DegenerateDistribution',
    'DirectionUndefined',
    # Operations
    'PoseCodec',
    'build_embeddings',
    'encode_value',
    'decode_value',
    'decode_value_argmax',
    'pose_to_targets',
    'dists_to_pose',
    'direction_from_trig',
    'default_pos_table',
    'default_trig_table',
]
