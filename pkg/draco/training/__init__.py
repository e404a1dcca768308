"""
DRACO - Training.

Pose supervision over every expert, the knowledge-transfer objective and
the optimization loop.

Architecture:
    training/
    ├── losses.py   # CE / JS pose losses, InfoNCE relation loss, KT variants
    ├── data.py     # SampleDataset, SynthesisDataset, seeded loaders
    └── trainer.py  # cosine schedule, Trainer, train / finetune / train_teacher

Usage:
    from draco.training import train

    result = train(load_config('train', Path('train.yaml')))
    print(result.best_dir)
"""

from .losses import (
    LengthMismatch,
    DegenerateFeature,
    NonFiniteLoss,
    LossBreakdown,
    cross_entropy,
    js_divergence,
    pose_component_loss,
    pose_loss_terms,
    pose_loss,
    infonce_relation_loss,
    response_loss,
    kt_loss,
    total_loss,
    compute_losses,
)

from .data import (
    SampleDataset,
    SynthesisDataset,
    make_loader,
    sample_to_item,
)

from .trainer import (
    ResumeMismatch,
    TrainResult,
    Trainer,
    build_datasets,
    build_model,
    cosine_lr,
    finetune,
    forward_batch,
    load_teacher,
    train,
    train_teacher,
)


__all__ = [
    # Errors
    'LengthMismatch',
    'DegenerateFeature',
    'NonFiniteLoss',
    'ResumeMismatch',
    # Losses
    'LossBreakdown',
    'cross_entropy',
    'js_divergence',
    'pose_component_loss',
    'pose_loss_terms',
    'pose_loss',
    'infonce_relation_loss',
    'response_loss',
    'kt_loss',
    'total_loss',
    'compute_losses',
    # Data
    'SampleDataset',
    'SynthesisDataset',
    'make_loader',
    'sample_to_item',
    # Loop
    'TrainResult',
    'Trainer',
    'build_datasets',
    'build_model',
    'cosine_lr',
    'finetune',
    'forward_batch',
    'load_teacher',
    'train',
    'train_teacher',
]
