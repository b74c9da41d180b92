"""Coresets for queries far outside a point set's enclosing ball.

Queries at distance between ``base_r`` and the far radius from a (randomly
shifted) center fall into one of geometrically growing rings, each with its
own coreset. Beyond the far radius the whole set collapses onto the center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .balance import Coreset, process_captured, query_captured
from .core import BuildParams, ShellGeometry
from .embedding import Side
from .errors import ContractError, GeometryError
from .kernels import RadialKernel, kernel_eval

C_FAR = 8.0


def far_radius(r: float, eps: float, xi: float) -> float:
    """Distance beyond which a set in B(0, r) acts like |P| copies of its center."""
    return C_FAR * r * math.log(1.0 / xi) / eps


def ring_count(eps: float, xi: float) -> int:
    return math.ceil(math.log2(C_FAR * math.log(1.0 / xi) / eps)) + 1


@dataclass(frozen=True, eq=False, slots=True)
class FarFieldDS:
    cen: np.ndarray = field(repr=False)
    r_min: float
    r_in: float
    base_r: float
    size: int
    rings: tuple = field(repr=False)
    side_violations: int = 0


def _uniform_in_ball(radius: float, d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(d)
    norm = float(np.linalg.norm(g))
    while norm == 0.0:
        g = rng.standard_normal(d)
        norm = float(np.linalg.norm(g))
    return g / norm * radius * rng.random() ** (1.0 / d)


def preprocess_far(
    P,
    c,
    r_in: float,
    r: float,
    k: RadialKernel,
    params: BuildParams,
    rng: np.random.Generator,
    *,
    ids: Optional[np.ndarray] = None,
    data: Optional[np.ndarray] = None,
) -> FarFieldDS:
    """Ring coresets for ``P`` (inside B(c, r_in)) serving queries beyond distance ``r``."""
    P = np.asarray(P, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if not r_in > 0.0:
        raise GeometryError("far-field inner radius must be positive")
    if r < 2.0 * r_in * (1 - 1e-12):
        raise GeometryError(f"need r >= 2 r_in, got r={r}, r_in={r_in}")
    dist_c = np.sqrt(np.sum((P - c) ** 2, axis=1))
    if np.any(dist_c > r_in * (1 + 1e-9)):
        raise ContractError(f"point at distance {dist_c.max():.12g} from center exceeds r_in={r_in:.12g}")
    d = P.shape[1]
    cen = c + _uniform_in_ball(r_in / 3.0, d, rng)
    r_min = r_in / 100.0
    r_in_new = 4.0 * r_in / 3.0
    base_r = r - r_in / 3.0
    norms = np.sqrt(np.sum((P - cen) ** 2, axis=1))
    low = norms < r_min
    violations = int(np.count_nonzero(low))
    if violations and float(norms.min()) > 0.0:
        r_min = float(norms.min())
    rings = []
    for h in range(ring_count(params.eps, params.xi)):
        geom = ShellGeometry(cen, r_min, r_in_new, math.ldexp(base_r, h), math.ldexp(base_r, h + 1))
        rings.append(
            process_captured(
                P if ids is None else None, geom, Side.INNER, k, params.eps, params.xi, params.delta, rng, ids=ids, data=data
            )
        )
    return FarFieldDS(cen, r_min, r_in_new, base_r, P.shape[0], tuple(rings), violations)


def ring_index(dist: float, base_r: float) -> int:
    """h with 2^h base_r <= dist < 2^(h+1) base_r (an exact power maps to ring h)."""
    if dist <= base_r:
        return 0
    h = int(math.floor(math.log2(dist / base_r)))
    while h > 0 and math.ldexp(base_r, h) > dist:
        h -= 1
    while math.ldexp(base_r, h + 1) <= dist:
        h += 1
    return h


def query_far(q, f: FarFieldDS, k: RadialKernel, eps: float = None, xi: float = None) -> float:
    q = np.asarray(q, dtype=np.float64)
    dist = math.sqrt(float(np.sum((q - f.cen) ** 2)))
    if dist < f.base_r * (1 - 1e-9):
        raise ContractError(f"far query at distance {dist:.12g} inside base radius {f.base_r:.12g}")
    h = ring_index(dist, f.base_r)
    if h < len(f.rings):
        return query_captured(f.rings[h], q)
    return f.size * kernel_eval(k, q, f.cen)
