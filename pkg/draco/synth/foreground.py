"""
DRACO - Foreground Segmentation.

Ridge-bearing area of a plain fingerprint by local-variance thresholding.
The standard deviation of intensity (scaled to [0, 1]) over a square
window is compared to a threshold, then the mask is closed and its holes
filled.
"""

import logging

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

VARIANCE_WINDOW = 15
STD_THRESHOLD = 0.1
CLOSING_SIZE = 5
CLOSING_ITERATIONS = 2


def local_std(image: np.ndarray, window: int = VARIANCE_WINDOW) -> np.ndarray:
    """Standard deviation over a window x window neighborhood."""
    img = image.astype(np.float64) / 255.0
    mean = ndimage.uniform_filter(img, size=window, mode='reflect')
    mean_sq = ndimage.uniform_filter(img * img, size=window, mode='reflect')
    return np.sqrt(np.maximum(mean_sq - mean * mean, 0.0))


def foreground_mask(
    pixels: np.ndarray,
    window: int = VARIANCE_WINDOW,
    threshold: float = STD_THRESHOLD,
) -> np.ndarray:
    """
    Boolean mask of ridge-bearing pixels.

    Accepts a PlainFingerprint or a raw 2-D array. Deterministic for fixed
    parameters; an empty mask is a valid result.
    """
    pixels = getattr(pixels, 'pixels', pixels)
    mask = local_std(pixels, window) > threshold

    # Pad before closing so the frame border does not erode
    pad = CLOSING_SIZE * CLOSING_ITERATIONS
    padded = np.pad(mask, pad, mode='edge')
    structure = np.ones((CLOSING_SIZE, CLOSING_SIZE), dtype=bool)
    closed = ndimage.binary_closing(padded, structure=structure, iterations=CLOSING_ITERATIONS)
    mask = ndimage.binary_fill_holes(closed[pad:-pad, pad:-pad])

    logger.debug(f"foreground ratio {mask.mean():.3f} on {pixels.shape}")
    return mask
