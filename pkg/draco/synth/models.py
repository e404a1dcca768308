"""
DRACO - Synthesis Data Models.

Plain fingerprints (the synthesis source), the two simulated modalities
and the paired training sample.

Coordinates follow image conventions: x to the right, y down, pixel
centers on integer positions. A pose stored on a PlainFingerprint is the
finger-center offset from the image center plus the finger direction.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..codec import Pose

MIN_PLAIN_SIZE = 400
PATCH_SIZE = 132
CAP_GRID = 12
CAP_CELL = 50       # 500 ppi pixels per 10 ppi cell


@dataclass
class PlainFingerprint:
    """
    Full plain fingerprint at 500 ppi with known pose.

    Standardized prints have pose (0, 0, 0): finger center at the image
    center, fingertip pointing up.
    """
    pixels: np.ndarray                      # (H, W) uint8
    pose: Pose = field(default_factory=lambda: Pose(0.0, 0.0, 0.0))
    finger_id: str = "0"
    impression_id: int = 0
    name: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 2:
            raise ValueError(f"plain fingerprint must be 2-D, got shape {self.pixels.shape}")
        h, w = self.pixels.shape
        if h < MIN_PLAIN_SIZE or w < MIN_PLAIN_SIZE:
            raise ValueError(
                f"plain fingerprint must be at least {MIN_PLAIN_SIZE}x{MIN_PLAIN_SIZE}, got {w}x{h}"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def image_center(self) -> Tuple[float, float]:
        h, w = self.pixels.shape
        return ((w - 1) / 2.0, (h - 1) / 2.0)

    @property
    def center(self) -> Tuple[float, float]:
        """Finger center in image coordinates."""
        cx, cy = self.image_center
        return (cx + self.pose.x, cy + self.pose.y)


@dataclass
class RidgePatch:
    """132x132 high-resolution ridge crop."""
    pixels: np.ndarray                      # (S, S) uint8
    foreground_ratio: float = 1.0


@dataclass
class CapacitiveImage:
    """
    Low-resolution contact map, values in [0, 1].

    origin is the patch-frame position of the grid center; the grid is
    concentric with the ridge patch.
    """
    pixels: np.ndarray                      # (G, G) float
    origin: Tuple[float, float] = ((PATCH_SIZE - 1) / 2.0, (PATCH_SIZE - 1) / 2.0)

    @property
    def grid(self) -> int:
        return self.pixels.shape[0]


@dataclass
class DualModalSample:
    """Paired ridge patch + capacitive image with the pose in the patch frame."""
    sample_id: str
    patch: RidgePatch
    cap: CapacitiveImage
    label: Pose
    finger_id: str
    impression_id: int = 0
    source: str = ""
    params: Dict[str, Any] = field(default_factory=dict)
    plain_view: Optional[np.ndarray] = None      # teacher input, (T, T) uint8

    def record(self) -> Dict[str, Any]:
        """Manifest fields (files are added by the writer)."""
        return {
            'id': self.sample_id,
            'finger_id': self.finger_id,
            'impression_id': self.impression_id,
            'source': self.source,
            'label': self.label.to_dict(),
            'cap_origin': list(self.cap.origin),
            'foreground_ratio': self.patch.foreground_ratio,
            'params': self.params,
        }
