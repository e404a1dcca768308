"""
DRACO - Pose Codec Data Models.

Pose values, frozen bin tables and the four-component distribution set
that the network predicts and the losses supervise.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, Tuple

import numpy as np

COMPONENTS: Tuple[str, ...] = ('x', 'y', 'cos', 'sin')


def normalize_angle(theta: float) -> float:
    """Map an angle in degrees into [-180, 180)."""
    return ((theta + 180.0) % 360.0) - 180.0


@dataclass
class Pose:
    """
    2-D fingerprint pose.

    x, y are the finger-center offset in pixels at 500 ppi (x right, y down);
    theta is the direction in degrees, normalized to [-180, 180). Direction 0
    means the fingertip points up the image.
    """
    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.x = float(self.x)
        self.y = float(self.y)
        self.theta = normalize_angle(float(self.theta))

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.y, self.theta))

    def in_domain(self, limit: float = 256.0) -> bool:
        """True when the center fits the codec position tables."""
        return self.is_finite() and abs(self.x) <= limit and abs(self.y) <= limit

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def to_dict(self) -> Dict[str, float]:
        return {'x': self.x, 'y': self.y, 'theta': self.theta}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Pose':
        return cls(x=data['x'], y=data['y'], theta=data['theta'])


@dataclass(frozen=True)
class ClassEmbeddingTable:
    """
    Frozen bin-center values for one pose component.

    values[t] = lo + (t + 0.5) * (hi - lo) / n. The array is read-only and
    never trained.
    """
    lo: float
    hi: float
    n: int
    values: np.ndarray = field(compare=False, repr=False)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / self.n

    def params(self) -> Dict[str, Any]:
        return {'lo': self.lo, 'hi': self.hi, 'n': self.n}

    def __len__(self) -> int:
        return self.n


@dataclass
class PoseDistributionSet:
    """Four discrete distributions over the x, y, cos and sin tables."""
    dx: np.ndarray
    dy: np.ndarray
    dcos: np.ndarray
    dsin: np.ndarray

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        yield 'x', self.dx
        yield 'y', self.dy
        yield 'cos', self.dcos
        yield 'sin', self.dsin

    def component(self, name: str) -> np.ndarray:
        return {'x': self.dx, 'y': self.dy, 'cos': self.dcos, 'sin': self.dsin}[name]

    def is_valid(self, atol: float = 1e-6) -> bool:
        """Every entry >= 0 and each vector sums to 1 within atol."""
        for _, d in self.items():
            if np.any(d < 0) or abs(float(np.sum(d)) - 1.0) > atol:
                return False
        return True

    def to_dict(self) -> Dict[str, list]:
        return {name: d.tolist() for name, d in self.items()}
