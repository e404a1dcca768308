"""
DRACO - Decoupled Pose Codec.

Converts continuous poses to four independent quantized distributions
(x, y, cos theta, sin theta) and back.

Encoding places a Gaussian over frozen bin centers; sigma is measured in
bins. Decoding takes the expectation over bin centers (``sum``) or the
peak bin (``max``); direction is recovered with atan2 from the decoded
sine and cosine, so there is no discontinuity at +/-180.

The module-level functions work on numpy arrays, one pose at a time.
PoseCodec provides the same operations on torch batches for the network
and the losses.
"""

import logging
import math
from typing import Dict, Optional

import numpy as np
import torch

from ..config import CodecConfig, DecodeMode
from ..errors import ConfigError, DataError, DracoError, NumericalError
from .models import ClassEmbeddingTable, Pose, PoseDistributionSet, normalize_angle

logger = logging.getLogger(__name__)

DOMAIN_TOL = 1e-9
MASS_EPS = 1e-12
DIRECTION_EPS = 1e-6


class CodecError(DracoError):
    """Base exception for pose codec operations."""
    pass


class InvalidRange(CodecError, ConfigError, ValueError):
    """Table bounds or bin count are unusable."""
    pass


class OutOfDomain(CodecError, DataError, ValueError):
    """Value lies outside the table domain."""
    pass


class DegenerateDistribution(CodecError, NumericalError):
    """Distribution carries no mass."""
    pass


class DirectionUndefined(CodecError, NumericalError):
    """Decoded (sin, cos) is too close to the origin for atan2."""
    pass


# =========================================================================
# Single-pose operations
# =========================================================================

def build_embeddings(lo: float, hi: float, n: int) -> ClassEmbeddingTable:
    """Uniform bin centers over [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise InvalidRange(f"need lo < hi, got lo={lo}, hi={hi}")
    if int(n) != n or n < 2:
        raise InvalidRange(f"need n >= 2 bins, got {n}")
    n = int(n)
    step = (hi - lo) / n
    values = lo + (np.arange(n, dtype=np.float64) + 0.5) * step
    values.setflags(write=False)
    return ClassEmbeddingTable(lo=float(lo), hi=float(hi), n=n, values=values)


def encode_value(v: float, table: ClassEmbeddingTable, sigma: float) -> np.ndarray:
    """Gaussian soft label centered on v, normalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not math.isfinite(v) or v < table.lo - DOMAIN_TOL or v > table.hi + DOMAIN_TOL:
        raise OutOfDomain(f"value {v} outside [{table.lo}, {table.hi}]")
    z = (v - table.values) / table.step
    logits = -(z ** 2) / (2.0 * sigma ** 2)
    d = np.exp(logits - logits.max())
    return d / d.sum()


def _check_vector(d: np.ndarray, table: ClassEmbeddingTable) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (table.n,):
        raise ValueError(f"distribution length {d.shape} does not match table of {table.n}")
    total = float(d.sum())
    if not math.isfinite(total) or total < MASS_EPS:
        raise DegenerateDistribution(f"distribution mass {total} below {MASS_EPS}")
    return d


def decode_value(d: np.ndarray, table: ClassEmbeddingTable) -> float:
    """Expectation over bin centers; unnormalized input is accepted."""
    d = _check_vector(d, table)
    return float(np.dot(d, table.values) / d.sum())


def decode_value_argmax(d: np.ndarray, table: ClassEmbeddingTable) -> float:
    """Center of the highest bin; ties go to the lowest index."""
    d = _check_vector(d, table)
    return float(table.values[int(np.argmax(d))])


def pose_to_targets(
    p: Pose,
    sigma_pos: float,
    sigma_trig: float,
    pos_table: Optional[ClassEmbeddingTable] = None,
    trig_table: Optional[ClassEmbeddingTable] = None,
) -> PoseDistributionSet:
    """Soft targets for all four components of a pose."""
    pos_table = pos_table or default_pos_table()
    trig_table = trig_table or default_trig_table()
    rad = math.radians(p.theta)
    return PoseDistributionSet(
        dx=encode_value(p.x, pos_table, sigma_pos),
        dy=encode_value(p.y, pos_table, sigma_pos),
        dcos=encode_value(math.cos(rad), trig_table, sigma_trig),
        dsin=encode_value(math.sin(rad), trig_table, sigma_trig),
    )


def direction_from_trig(s: float, c: float) -> float:
    """atan2 direction in degrees, normalized to [-180, 180)."""
    if math.hypot(s, c) < DIRECTION_EPS:
        raise DirectionUndefined(f"|(sin, cos)| = {math.hypot(s, c):.2e} too small")
    return normalize_angle(math.degrees(math.atan2(s, c)))


def dists_to_pose(
    d: PoseDistributionSet,
    pos_table: Optional[ClassEmbeddingTable] = None,
    trig_table: Optional[ClassEmbeddingTable] = None,
    mode: DecodeMode = DecodeMode.SUM,
) -> Pose:
    """Recover a pose from its four distributions."""
    pos_table = pos_table or default_pos_table()
    trig_table = trig_table or default_trig_table()
    decode = decode_value if DecodeMode(mode) == DecodeMode.SUM else decode_value_argmax
    s = decode(d.dsin, trig_table)
    c = decode(d.dcos, trig_table)
    return Pose(
        x=decode(d.dx, pos_table),
        y=decode(d.dy, pos_table),
        theta=direction_from_trig(s, c),
    )


def default_pos_table() -> ClassEmbeddingTable:
    cfg = CodecConfig()
    return build_embeddings(cfg.pos_lo, cfg.pos_hi, cfg.pos_bins)


def default_trig_table() -> ClassEmbeddingTable:
    cfg = CodecConfig()
    return build_embeddings(cfg.trig_lo, cfg.trig_hi, cfg.trig_bins)


# =========================================================================
# Batched codec
# =========================================================================

class PoseCodec:
    """
    Batched encode/decode on torch tensors.

    Poses are (B, 3) tensors of (x, y, theta_degrees); distribution sets
    are dicts keyed by component name holding (B, n) tensors.

    Usage:
        codec = PoseCodec(CodecConfig())
        targets = codec.targets(poses, sigma_pos=3.5, sigma_trig=2.5)
        pred = codec.decode(model_out.final, DecodeMode.SUM)
    """

    def __init__(self, config: Optional[CodecConfig] = None):
        self.config = config or CodecConfig()
        self.pos_table = build_embeddings(
            self.config.pos_lo, self.config.pos_hi, self.config.pos_bins
        )
        self.trig_table = build_embeddings(
            self.config.trig_lo, self.config.trig_hi, self.config.trig_bins
        )

    def table(self, component: str) -> ClassEmbeddingTable:
        return self.pos_table if component in ('x', 'y') else self.trig_table

    def sizes(self) -> Dict[str, int]:
        return {
            'x': self.pos_table.n,
            'y': self.pos_table.n,
            'cos': self.trig_table.n,
            'sin': self.trig_table.n,
        }

    def _values(self, component: str, like: torch.Tensor) -> torch.Tensor:
        values = self.table(component).values
        return torch.as_tensor(values, dtype=like.dtype, device=like.device)

    def encode(self, v: torch.Tensor, component: str, sigma: float) -> torch.Tensor:
        """(B,) values -> (B, n) Gaussian soft labels."""
        table = self.table(component)
        lo_ok = v >= table.lo - DOMAIN_TOL
        hi_ok = v <= table.hi + DOMAIN_TOL
        if not bool(torch.all(lo_ok & hi_ok & torch.isfinite(v))):
            bad = v[~(lo_ok & hi_ok)].tolist()[:5]
            raise OutOfDomain(f"{component} values outside [{table.lo}, {table.hi}]: {bad}")
        z = (v.unsqueeze(-1) - self._values(component, v)) / table.step
        return torch.softmax(-(z ** 2) / (2.0 * sigma ** 2), dim=-1)

    def targets(
        self,
        poses: torch.Tensor,
        sigma_pos: float,
        sigma_trig: float,
    ) -> Dict[str, torch.Tensor]:
        """(B, 3) poses -> soft targets per component."""
        rad = torch.deg2rad(poses[:, 2])
        return {
            'x': self.encode(poses[:, 0], 'x', sigma_pos),
            'y': self.encode(poses[:, 1], 'y', sigma_pos),
            'cos': self.encode(torch.cos(rad), 'cos', sigma_trig),
            'sin': self.encode(torch.sin(rad), 'sin', sigma_trig),
        }

    def decode_component(
        self,
        d: torch.Tensor,
        component: str,
        mode: DecodeMode = DecodeMode.SUM,
    ) -> torch.Tensor:
        """(B, n) -> (B,) scalar values."""
        values = self._values(component, d)
        if DecodeMode(mode) == DecodeMode.MAX:
            return values[torch.argmax(d, dim=-1)]
        mass = d.sum(dim=-1)
        if bool(torch.any(mass < MASS_EPS)):
            raise DegenerateDistribution(f"{component} distribution mass below {MASS_EPS}")
        return (d @ values) / mass

    def decode(
        self,
        dists: Dict[str, torch.Tensor],
        mode: DecodeMode = DecodeMode.SUM,
        strict: bool = False,
    ) -> torch.Tensor:
        """
        Distribution set -> (B, 3) poses.

        With ``strict`` a near-zero (sin, cos) raises DirectionUndefined;
        otherwise atan2 is used as is and the count is logged.
        """
        x = self.decode_component(dists['x'], 'x', mode)
        y = self.decode_component(dists['y'], 'y', mode)
        c = self.decode_component(dists['cos'], 'cos', mode)
        s = self.decode_component(dists['sin'], 'sin', mode)
        undefined = torch.hypot(s, c) < DIRECTION_EPS
        if bool(torch.any(undefined)):
            if strict:
                raise DirectionUndefined(f"{int(undefined.sum())} directions undefined")
            logger.debug(f"{int(undefined.sum())} predictions with undefined direction")
        theta = torch.rad2deg(torch.atan2(s, c))
        theta = torch.remainder(theta + 180.0, 360.0) - 180.0
        return torch.stack([x, y, theta], dim=-1)
