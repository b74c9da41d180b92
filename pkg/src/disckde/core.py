"""Shared data types and geometric helpers.

Points and datasets are plain float64 numpy arrays: a point is a vector of
shape ``(d,)`` and a dataset is a matrix of shape ``(n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, GeometryError, StructuralError

# Above this size the exact O(n^2) aspect ratio is not computed implicitly.
EXACT_PHI_LIMIT = 20_000


def as_point(x, dim: Optional[int] = None) -> np.ndarray:
    """Validate and return ``x`` as a finite float64 vector."""
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 1:
        raise StructuralError(f"point must be 1-D, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise StructuralError(f"point has dimension {p.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(p)):
        raise StructuralError("point has non-finite coordinates")
    return p


def as_dataset(points) -> np.ndarray:
    """Validate and return ``points`` as a nonempty finite ``(n, d)`` array."""
    try:
        P = np.asarray(points, dtype=np.float64)
    except ValueError as exc:  # ragged nested lists
        raise StructuralError(f"dataset is not rectangular: {exc}") from None
    if P.ndim == 1 and P.size > 0:
        P = P[:, None]
    if P.ndim != 2 or P.shape[0] == 0 or P.shape[1] == 0:
        raise StructuralError(f"dataset must be a nonempty (n, d) array, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise StructuralError("dataset has non-finite coordinates")
    return P


@dataclass(frozen=True)
class BuildParams:
    """Parameters shared by every coreset and tree built from one dataset.

    ``xi`` is the additive per-point error, ``phi`` an upper bound on the
    aspect ratio of the data plus any query (``None`` means compute it),
    ``c1`` the separation constant entering the boundary width ``alpha``.
    """

    eps: float = 0.2
    xi: float = 1e-4
    delta: float = 0.01
    alpha_override: Optional[float] = None
    phi: Optional[float] = None
    seed: int = 0
    num_trees: int = 3
    c1: float = 0.1

    def __post_init__(self):
        for name in ("eps", "xi", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.phi is not None and not self.phi >= 1.0:
            raise ConfigError(f"phi must be >= 1, got {self.phi}")
        if self.num_trees < 1:
            raise ConfigError(f"num_trees must be >= 1, got {self.num_trees}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.alpha_override is not None and not 0.0 < self.alpha_override < 0.25:
            raise ConfigError("alpha_override must lie in (0, 1/4)")
        if self.c1 <= 0:
            raise ConfigError("c1 must be positive")

    @classmethod
    def from_tau(cls, eps: float, tau: float, **kw) -> "BuildParams":
        """Build params with ``xi = eps * tau / 4`` for a density floor ``tau``."""
        if not 0.0 < tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {tau}")
        return cls(eps=eps, xi=eps * tau / 4.0, **kw)


@dataclass(frozen=True, slots=True)
class ShellGeometry:
    """Center plus radii ``r_min <= r_in < r_out <= r_max`` of a shell split."""

    center: np.ndarray = field(repr=False)
    r_min: float
    r_in: float
    r_out: float
    r_max: float

    def __post_init__(self):
        if not (0.0 < self.r_min <= self.r_in < self.r_out <= self.r_max):
            raise GeometryError(
                "need 0 < r_min <= r_in < r_out <= r_max, got "
                f"({self.r_min}, {self.r_in}, {self.r_out}, {self.r_max})"
            )
        if not math.isfinite(self.r_max):
            raise GeometryError("r_max must be finite")

    @property
    def dim(self) -> int:
        return int(np.asarray(self.center).shape[0])


def approx_meb(P) -> tuple[np.ndarray, float]:
    """2-approximate minimum enclosing ball: center at the first point."""
    P = as_dataset(P)
    center = P[0].copy()
    radius = float(np.sqrt(np.max(np.sum((P - center) ** 2, axis=1))))
    return center, radius


def _pairwise_extremes(P: np.ndarray, block: int = 1024) -> tuple[float, float]:
    """Max pairwise distance and min nonzero pairwise distance, blockwise."""
    from scipy.spatial.distance import cdist

    n = P.shape[0]
    dmax = 0.0
    dmin = math.inf
    for i in range(0, n, block):
        for j in range(i, n, block):
            D = cdist(P[i : i + block], P[j : j + block])
            dmax = max(dmax, float(D.max()))
            pos = D[D > 0.0]
            if pos.size:
                dmin = min(dmin, float(pos.min()))
    return dmax, dmin if math.isfinite(dmin) else 0.0


def aspect_ratio_bound(P) -> float:
    """Exact aspect ratio: max pairwise distance over min nonzero distance.

    Returns 1 for a dataset of identical points.
    """
    P = as_dataset(P)
    if P.shape[0] < 2:
        return 1.0
    dmax, dmin = _pairwise_extremes(P)
    if dmax == 0.0 or dmin == 0.0:
        return 1.0
    return max(1.0, dmax / dmin)


def _min_nonzero_distance(P: np.ndarray, block: int = 2048, tol: float = 1e-10) -> float:
    """Smallest nonzero pairwise distance via blocked Gram products.

    Pairs whose squared distance is tiny relative to their norms are recomputed
    from coordinate differences, since the Gram identity cancels there.
    """
    n = P.shape[0]
    sq = np.einsum("ij,ij->i", P, P)
    best = math.inf
    for i in range(0, n, block):
        A = P[i : i + block]
        for j in range(i, n, block):
            B = P[j : j + block]
            D2 = sq[i : i + block, None] + sq[None, j : j + block] - 2.0 * (A @ B.T)
            scale = sq[i : i + block, None] + sq[None, j : j + block]
            if i == j:
                np.fill_diagonal(D2, math.inf)
            risky = D2 <= tol * scale
            if np.any(risky):
                ri, rj = np.nonzero(risky)
                exact = np.einsum("ij,ij->i", A[ri] - B[rj], A[ri] - B[rj])
                D2[ri, rj] = np.where(exact > 0.0, exact, math.inf)
            best = min(best, float(D2.min()))
    return math.sqrt(best) if math.isfinite(best) else 0.0


def estimate_aspect_ratio(P) -> float:
    """Upper bound on the aspect ratio for datasets too large for the exact scan.

    Twice the approximate enclosing radius over the minimum nonzero pairwise
    distance; the Gram-product distances carry a relative error far below the
    1e-5 safety factor applied here.
    """
    P = as_dataset(P)
    _, rad = approx_meb(P)
    if rad == 0.0:
        return 1.0
    dmin = _min_nonzero_distance(P - P[0])
    if dmin == 0.0:
        return 1.0
    return max(1.0, 2.0 * rad / (dmin * (1 - 1e-5)))
