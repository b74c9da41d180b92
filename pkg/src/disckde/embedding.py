"""Shell-scaled truncated feature embeddings, accessed only through inner products.

For a shell with radii ``r_min <= r_in < r_out <= r_max`` and error ``xi`` set

    t0  = ln(1/xi) / (r_out - r_in)^2
    rho = 1 - min(1 / (t0 r_in^2), 1/2).

Points on the outer band are scaled by ``rho`` and points on the inner band by
``1/rho`` before the truncated Laplace feature map is applied. The scalings
cancel for one inner and one outer point, so that inner product is a
truncated version of the kernel itself; two points on the same side see the
scaled version. Every quantity reduces to ``psi(a, t0)`` with

    a = |x|^2 + |y|^2 - 2 s <x, y>,  s = rho^2 (outer), 1/rho^2 (inner), 1 (mixed).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import ShellGeometry
from .errors import ConfigError, ContractError, GeometryError
from .kernels import RadialKernel

SIDE_RTOL = 1e-9


class Side(enum.Enum):
    INNER = "inner"
    OUTER = "outer"

    @property
    def opposite(self) -> "Side":
        return Side.OUTER if self is Side.INNER else Side.INNER


@dataclass(frozen=True)
class EmbeddingOracle:
    kernel: RadialKernel
    geom: ShellGeometry
    xi: float
    t0: float
    rho: float

    def band(self, side: Side) -> tuple[float, float]:
        g = self.geom
        return (g.r_min, g.r_in) if side is Side.INNER else (g.r_out, g.r_max)

    def check_side(self, norms, side: Side) -> None:
        """Raise ContractError unless every norm lies in the band of ``side``."""
        lo, hi = self.band(side)
        norms = np.atleast_1d(np.asarray(norms, dtype=np.float64))
        bad = (norms < lo * (1 - SIDE_RTOL)) | (norms > hi * (1 + SIDE_RTOL))
        if np.any(bad):
            worst = float(norms[bad][0])
            raise ContractError(
                f"{side.value} point has norm {worst:.12g} outside the band [{lo:.12g}, {hi:.12g}]"
            )

    def scale(self, sx: Side, sy: Side) -> float:
        if sx is not sy:
            return 1.0
        return self.rho**2 if sx is Side.OUTER else 1.0 / self.rho**2

    def inner(self, x, sx: Side, y, sy: Side) -> float:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.check_side(math.sqrt(x @ x), sx)
        self.check_side(math.sqrt(y @ y), sy)
        if sx is not sy:
            # Same arithmetic as kernel_eval, so the one-sided bound survives rounding.
            diff = x - y
            a = float(diff @ diff)
            return min(float(self.kernel.psi(a, self.t0)), float(self.kernel.G(a)))
        a = float(x @ x + y @ y - 2.0 * self.scale(sx, sy) * (x @ y))
        return float(self.kernel.psi(a, self.t0))

    def norm_sq(self, z, side: Side) -> float:
        z = np.asarray(z, dtype=np.float64)
        zz = float(z @ z)
        self.check_side(math.sqrt(zz), side)
        if side is Side.OUTER:
            a = 2.0 * (1.0 - self.rho**2) * zz
        else:
            a = -2.0 * (1.0 / self.rho**2 - 1.0) * zz
        return float(self.kernel.psi(a, self.t0))

    def gram_rows(self, Y: np.ndarray, sq: np.ndarray, side: Side, rows) -> np.ndarray:
        """Embedded inner products between ``Y[rows]`` and all of ``Y`` (same side).

        ``sq`` holds the squared norms of ``Y``; band membership is the caller's job.
        """
        s = self.scale(side, side)
        a = sq[rows, None] + sq[None, :] - 2.0 * s * (Y[rows] @ Y.T)
        if side is Side.OUTER:
            np.maximum(a, 0.0, out=a)
        return np.asarray(self.kernel.psi(a, self.t0))

    def norm_sq_all(self, sq: np.ndarray, side: Side) -> np.ndarray:
        if side is Side.OUTER:
            a = 2.0 * (1.0 - self.rho**2) * sq
        else:
            a = -2.0 * (1.0 / self.rho**2 - 1.0) * sq
        return np.atleast_1d(np.asarray(self.kernel.psi(a, self.t0)))


def embedding_constants(geom: ShellGeometry, xi: float) -> tuple[float, float]:
    """(t0, rho) for a shell and additive error ``xi``."""
    if not 0.0 < xi < 1.0:
        raise ConfigError(f"xi must lie in (0, 1), got {xi}")
    gap = geom.r_out - geom.r_in
    if not gap > 0.0:
        raise GeometryError("r_out must exceed r_in")
    t0 = math.log(1.0 / xi) / gap**2
    rho = 1.0 - min(1.0 / (t0 * geom.r_in**2), 0.5)
    return t0, rho


def make_oracle(k: RadialKernel, geom: ShellGeometry, xi: float) -> EmbeddingOracle:
    t0, rho = embedding_constants(geom, xi)
    return EmbeddingOracle(k, geom, float(xi), t0, rho)


def emb_inner(o: EmbeddingOracle, x, sx: Side, y, sy: Side) -> float:
    """Embedded inner product of centered points ``x`` (side ``sx``) and ``y`` (side ``sy``)."""
    return o.inner(x, sx, y, sy)


def emb_norm_sq(o: EmbeddingOracle, z, s: Side) -> float:
    return o.norm_sq(z, s)
