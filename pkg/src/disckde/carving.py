"""Randomized ball-carving hash with an explicit boundary zone.

A hash is a ball of uniform random radius ``r`` in ``[0, 3R]`` around a
Gaussian center ``c ~ N(0, R^2 I / d)``. Points well inside hash to 0, points
well outside to 1, and the shell of half-width ``alpha R / sqrt(d)`` around
the sphere is reported as ``BOUNDARY``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

BOUNDARY = -1
ALPHA_MIN = 1e-6
ALPHA_MAX = 0.25


@dataclass(frozen=True, slots=True)
class CarvingParams:
    c: np.ndarray = field(repr=False)
    r: float
    R: float
    alpha: float

    @property
    def dim(self) -> int:
        return int(self.c.shape[0])

    @property
    def half_width(self) -> float:
        return self.alpha * self.R / math.sqrt(self.dim)


def alpha_for(n: int, phi: float, c1: float = 0.1) -> float:
    """``c1 / (4 ln n ln phi)^2`` with both logs floored at 1, clamped to (1e-6, 1/4)."""
    a = c1 / (4.0 * max(math.log(max(n, 1)), 1.0) * max(math.log(phi), 1.0)) ** 2
    return min(max(a, ALPHA_MIN), ALPHA_MAX * (1 - 1e-12))


def sample_carving(R: float, alpha: float, d: int, rng: np.random.Generator) -> CarvingParams:
    if not R > 0.0:
        raise ConfigError(f"carving scale must be positive, got {R}")
    if not 0.0 < alpha < ALPHA_MAX:
        raise ConfigError(f"alpha must lie in (0, 1/4), got {alpha}")
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    c = rng.standard_normal(d) * (R / math.sqrt(d))
    r = float(rng.uniform(0.0, 3.0 * R))
    return CarvingParams(c, r, float(R), float(alpha))


def hash_eval(p: CarvingParams, x) -> np.ndarray | int:
    """0 (inside), 1 (outside) or BOUNDARY for one point or each row of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    dist = np.sqrt(np.sum((x - p.c) ** 2, axis=-1))
    w = p.half_width
    out = np.where(dist <= p.r - w, 0, np.where(dist > p.r + w, 1, BOUNDARY))
    return int(out) if out.ndim == 0 else out
