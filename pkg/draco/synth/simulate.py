"""
DRACO - Modality Simulators.

Produces the two sensor views of one crop of a plain fingerprint:

    simulate_ridge_patch   - 132x132 bilinear resample of a rotated window
    simulate_capacitive    - G x G contact coverage at 10 ppi, concentric
    simulate_plain_view    - full-size view in the patch frame (teacher input)

Crop geometry: patch pixel (u, v) with offsets pu = u - (S-1)/2 and
pv = v - (S-1)/2 samples the image at

    x = cx + cos(a) * pu - sin(a) * pv
    y = cy + sin(a) * pu + cos(a) * pv

so a finger at image center C with direction theta appears in the patch
at R(-a) (C - crop_center) with direction theta - a.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from ..codec import Pose, normalize_angle
from ..errors import DataError, DracoError
from .foreground import foreground_mask
from .models import (
    CAP_CELL,
    CAP_GRID,
    PATCH_SIZE,
    CapacitiveImage,
    PlainFingerprint,
    RidgePatch,
)

logger = logging.getLogger(__name__)

FG_THRESHOLD = 0.4
BACKGROUND = 255.0


class SynthesisError(DracoError):
    """Base exception for sample synthesis."""
    pass


class SampleRejected(SynthesisError, DataError):
    """A single draw cannot produce a valid sample."""
    pass


class WindowOutOfBounds(SampleRejected):
    """Rotated crop window leaves the image."""
    pass


class LowForeground(SampleRejected):
    """Crop carries too little ridge area."""
    pass


def window_coords(
    center: Tuple[float, float],
    angle: float,
    size: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Image (y, x) sample positions of a size x size window rotated by angle degrees."""
    a = math.radians(angle)
    cos_a, sin_a = math.cos(a), math.sin(a)
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    pv, pu = np.meshgrid(offsets, offsets, indexing='ij')
    x = center[0] + cos_a * pu - sin_a * pv
    y = center[1] + sin_a * pu + cos_a * pv
    return y, x


def window_inside(
    shape: Tuple[int, int],
    center: Tuple[float, float],
    angle: float,
    size: int,
) -> bool:
    """True when every sample position of the rotated window lies in the image."""
    h, w = shape
    half = (size - 1) / 2.0
    a = math.radians(angle)
    cos_a, sin_a = math.cos(a), math.sin(a)
    for pu, pv in ((-half, -half), (half, -half), (-half, half), (half, half)):
        x = center[0] + cos_a * pu - sin_a * pv
        y = center[1] + sin_a * pu + cos_a * pv
        if x < -1e-9 or y < -1e-9 or x > w - 1 + 1e-9 or y > h - 1 + 1e-9:
            return False
    return True


def crop_label(
    fp: PlainFingerprint,
    crop_center: Tuple[float, float],
    crop_angle: float,
) -> Pose:
    """Finger pose re-expressed in the patch frame."""
    cx, cy = fp.center
    dx, dy = cx - crop_center[0], cy - crop_center[1]
    a = math.radians(crop_angle)
    cos_a, sin_a = math.cos(a), math.sin(a)
    return Pose(
        x=cos_a * dx + sin_a * dy,
        y=-sin_a * dx + cos_a * dy,
        theta=normalize_angle(fp.pose.theta - crop_angle),
    )


def simulate_ridge_patch(
    fp: PlainFingerprint,
    crop_center: Tuple[float, float],
    crop_angle: float,
    mask: Optional[np.ndarray] = None,
    size: int = PATCH_SIZE,
    fg_threshold: float = FG_THRESHOLD,
) -> Tuple[RidgePatch, Pose]:
    """Crop a rotated ridge patch and its pose label."""
    if not window_inside(fp.shape, crop_center, crop_angle, size):
        raise WindowOutOfBounds(
            f"window at ({crop_center[0]:.1f}, {crop_center[1]:.1f}) "
            f"angle {crop_angle:.1f} leaves {fp.shape[1]}x{fp.shape[0]} image"
        )
    if mask is None:
        mask = foreground_mask(fp.pixels)

    y, x = window_coords(crop_center, crop_angle, size)
    coords = np.stack([y, x])
    fg = ndimage.map_coordinates(mask.astype(np.float64), coords, order=1, mode='nearest')
    ratio = float(np.mean(fg >= 0.5))
    if ratio < fg_threshold:
        raise LowForeground(f"foreground ratio {ratio:.3f} below {fg_threshold}")

    sampled = ndimage.map_coordinates(
        fp.pixels.astype(np.float64), coords, order=1, mode='nearest'
    )
    pixels = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    return RidgePatch(pixels=pixels, foreground_ratio=ratio), crop_label(fp, crop_center, crop_angle)


def simulate_capacitive(
    fp: PlainFingerprint,
    crop_center: Tuple[float, float],
    crop_angle: float,
    grid: int = CAP_GRID,
    mask: Optional[np.ndarray] = None,
    cell: int = CAP_CELL,
    patch_size: int = PATCH_SIZE,
) -> CapacitiveImage:
    """
    Contact coverage at 10 ppi.

    The grid * cell field of view is concentric with the patch and may
    extend past the image, where it counts as background.
    """
    if mask is None:
        mask = foreground_mask(fp.pixels)
    fov = grid * cell

    y, x = window_coords(crop_center, crop_angle, fov)
    field = ndimage.map_coordinates(
        mask.astype(np.float64), np.stack([y, x]), order=1, mode='constant', cval=0.0
    )
    smoothed = ndimage.uniform_filter(field, size=cell, mode='constant', cval=0.0)

    # Window for index j spans [j - cell//2, j + cell - cell//2 - 1]
    centers = np.arange(grid, dtype=np.float64) * cell + cell // 2
    gy, gx = np.meshgrid(centers, centers, indexing='ij')
    cells = ndimage.map_coordinates(smoothed, np.stack([gy, gx]), order=1, mode='nearest')

    origin = ((patch_size - 1) / 2.0, (patch_size - 1) / 2.0)
    return CapacitiveImage(pixels=np.clip(cells, 0.0, 1.0), origin=origin)


def simulate_plain_view(
    fp: PlainFingerprint,
    crop_center: Tuple[float, float],
    crop_angle: float,
    size: int = 512,
) -> np.ndarray:
    """Full-fingerprint view in the patch frame; outside the image is background."""
    y, x = window_coords(crop_center, crop_angle, size)
    sampled = ndimage.map_coordinates(
        fp.pixels.astype(np.float64), np.stack([y, x]), order=1, mode='constant', cval=BACKGROUND
    )
    return np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
