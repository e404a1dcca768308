"""
DRACO - Data Synthesis.

Builds paired (ridge patch, capacitive image, pose label) samples from
plain fingerprints with known pose.

Architecture:
    synth/
    ├── models.py      # PlainFingerprint, RidgePatch, CapacitiveImage, DualModalSample
    ├── foreground.py  # local-variance foreground mask
    ├── simulate.py    # ridge patch, capacitive and plain-view simulators
    ├── augment.py     # random crops with retry, batch synthesis
    ├── dataset.py     # manifest.jsonl + PNG storage, finger-disjoint split
    └── plains.py      # synthetic plain fingerprints, source directory IO

Usage:
    from draco.synth import generate_plains, synthesize_samples, write_dataset

    plains = generate_plains(fingers=10, impressions=2, seed=7)
    samples, stats = synthesize_samples(plains, 4, rot_range=180, trans_range=40, seed=7)
    write_dataset(samples, Path("dataset"))
"""

from .models import (
    CAP_CELL,
    CAP_GRID,
    PATCH_SIZE,
    CapacitiveImage,
    DualModalSample,
    PlainFingerprint,
    RidgePatch,
)

from .foreground import foreground_mask, local_std

from .simulate import (
    SynthesisError,
    SampleRejected,
    WindowOutOfBounds,
    LowForeground,
    crop_label,
    simulate_ridge_patch,
    simulate_capacitive,
    simulate_plain_view,
    window_coords,
    window_inside,
)

from .augment import (
    SampleRequest,
    SynthesisExhausted,
    SynthesisStats,
    augment,
    sample_rng,
    synthesize_samples,
)

from .dataset import (
    ManifestSchemaMismatch,
    load_record,
    read_dataset,
    read_manifest,
    split_by_finger,
    write_dataset,
)

from .plains import (
    FingerParams,
    generate_plains,
    read_plains,
    synth_plain_fingerprint,
    write_plains,
)


__all__ = [
    # Models
    'CAP_CELL',
    'CAP_GRID',
    'PATCH_SIZE',
    'CapacitiveImage',
    'DualModalSample',
    'PlainFingerprint',
    'RidgePatch',
    # Errors
    'SynthesisError',
    'SampleRejected',
    'WindowOutOfBounds',
    'LowForeground',
    'SynthesisExhausted',
    'ManifestSchemaMismatch',
    # Simulation
    'foreground_mask',
    'local_std',
    'crop_label',
    'simulate_ridge_patch',
    'simulate_capacitive',
    'simulate_plain_view',
    'window_coords',
    'window_inside',
    # Augmentation
    'SampleRequest',
    'SynthesisStats',
    'augment',
    'sample_rng',
    'synthesize_samples',
    # Storage
    'load_record',
    'read_dataset',
    'read_manifest',
    'split_by_finger',
    'write_dataset',
    # Plains
    'FingerParams',
    'generate_plains',
    'read_plains',
    'synth_plain_fingerprint',
    'write_plains',
]
