"""
DRACO - Dual-modal finger pose estimation.

Estimates the pose (x, y, theta) of a finger on a small under-screen
sensor from a 132x132 ridge patch and a 12x12 capacitive image, through
a coordinate-classification codec, two ResNeXt encoders and a mixture of
experts fused by a learned router.

Architecture:
    draco/
    ├── config.py       # typed configs, JSON/YAML loading, schema validation, hashes
    ├── errors.py       # DracoError and the exit-code categories
    ├── events.py       # EventEmitter, console / JSON printers
    ├── resources.py    # packaged schema access
    ├── codec/          # Pose, PoseCodec (encode / decode distributions)
    ├── synth/          # synthetic plains, dual-modal sample synthesis, datasets
    ├── network/        # encoders, experts, router, adapter, checkpoints
    ├── training/       # losses, loaders, Trainer
    ├── evaluation/     # pose metrics, pose-gated verification and indexing
    ├── inference.py    # predict over datasets or one sample pair
    └── cli.py          # draco <command>

Usage:
    from draco.config import load_config
    from draco.training import train

    result = train(load_config('train', Path('train.yaml')))
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, DracoError, NumericalError
from .codec import Pose, PoseCodec


__all__ = [
    '__version__',
    # Errors
    'DracoError',
    'ConfigError',
    'DataError',
    'NumericalError',
    # Core types
    'Pose',
    'PoseCodec',
]
