"""Self-balancing walk and repeated-halving coresets for one shell.

The walk colors vectors it can only see through a Gram oracle. Each round of
``process_captured`` colors the current set and keeps the smaller color
class; after ``T`` rounds the survivors, weighted by ``2^T``, stand in for the
whole set for every query on the other side of the shell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ShellGeometry
from .embedding import EmbeddingOracle, Side, make_oracle
from .errors import ContractError
from .kernels import RadialKernel, kernel_row

_ROW_BLOCK = 256


class GramOracle:
    """Symmetric Gram matrix exposed row by row; counts every entry requested."""

    def __init__(self):
        self.calls = 0

    def __len__(self) -> int:
        raise NotImplementedError

    def _rows(self, start: int, stop: int) -> np.ndarray:
        raise NotImplementedError

    def _diag(self) -> np.ndarray:
        raise NotImplementedError

    def rows(self, start: int, stop: int) -> np.ndarray:
        out = self._rows(start, stop)
        self.calls += out.size
        return out

    def row(self, i: int) -> np.ndarray:
        return self.rows(i, i + 1)[0]

    def diag(self) -> np.ndarray:
        out = self._diag()
        self.calls += out.size
        return out

    def subset(self, idx: np.ndarray) -> "GramOracle":
        raise NotImplementedError


class EmbeddingGram(GramOracle):
    """Gram oracle of embedded same-side points, in shell-centered coordinates."""

    def __init__(self, oracle: EmbeddingOracle, Y: np.ndarray, side: Side):
        super().__init__()
        self.oracle = oracle
        self.side = side
        self._Y = np.ascontiguousarray(Y, dtype=np.float64)
        self._sq = np.einsum("ij,ij->i", self._Y, self._Y)

    def __len__(self):
        return self._Y.shape[0]

    def _rows(self, start, stop):
        return self.oracle.gram_rows(self._Y, self._sq, self.side, slice(start, stop))

    def _diag(self):
        return self.oracle.norm_sq_all(self._sq, self.side)

    def subset(self, idx):
        return EmbeddingGram(self.oracle, self._Y[idx], self.side)


class VectorGram(GramOracle):
    """Gram oracle over explicit vectors (rows of ``V``)."""

    def __init__(self, V: np.ndarray):
        super().__init__()
        self._V = np.ascontiguousarray(V, dtype=np.float64)

    def __len__(self):
        return self._V.shape[0]

    def _rows(self, start, stop):
        return self._V[start:stop] @ self._V.T

    def _diag(self):
        return np.einsum("ij,ij->i", self._V, self._V)

    def subset(self, idx):
        return VectorGram(self._V[idx])


def walk_constant(n: int, delta: float) -> float:
    return 30.0 * math.log(n / delta)


def self_balancing_walk(
    g: GramOracle,
    n: int,
    delta: float,
    rng: np.random.Generator,
    trials: Optional[int] = None,
) -> np.ndarray:
    """Signs in {-1, +1}^n keeping every ``<w, v_j>`` small.

    Vectors are normalized by the largest norm seen on the diagonal. With
    ``trials`` set, that many independent walks run together and the result
    has shape ``(trials, n)``.
    """
    batch = 1 if trials is None else int(trials)
    if n == 0:
        out = np.ones((batch, 0), dtype=np.int8)
        return out[0] if trials is None else out
    m2 = float(np.max(g.diag()))
    if m2 <= 0.0:
        out = np.where(rng.random((batch, n)) < 0.5, 1, -1).astype(np.int8)
        return out[0] if trials is None else out
    c = walk_constant(n, delta)
    s = np.zeros((batch, n))
    signs = np.empty((batch, n), dtype=np.int8)
    for start in range(0, n, _ROW_BLOCK):
        stop = min(n, start + _ROW_BLOCK)
        block = g.rows(start, stop) / m2
        for off, i in enumerate(range(start, stop)):
            p_plus = np.clip(0.5 - s[:, i] / (2.0 * c), 0.0, 1.0)
            sigma = np.where(rng.random(batch) < p_plus, 1, -1).astype(np.int8)
            signs[:, i] = sigma
            s += sigma[:, None] * block[off][None, :]
    return signs[0] if trials is None else signs


@dataclass(frozen=True, eq=False, slots=True)
class Coreset:
    """Survivors ``ids`` of ``T`` halvings, referencing rows of ``data``."""

    ids: np.ndarray
    weight_log2: int
    side: Side
    geom: ShellGeometry
    kernel: RadialKernel
    source_size: int
    data: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.ids.shape[0])

    @property
    def points(self) -> np.ndarray:
        return self.data[self.ids]


def geometry_factor(geom: ShellGeometry, xi: float) -> float:
    """((r_out - r_in) / (2 r_max)) * (r_min / r_in) / sqrt(ln(1/xi))."""
    return (
        (geom.r_out - geom.r_in) / (2.0 * geom.r_max) * (geom.r_min / geom.r_in)
        / math.sqrt(math.log(1.0 / xi))
    )


def halving_count(m: int, geom: ShellGeometry, k: RadialKernel, eps, xi, delta) -> int:
    """Number of halvings for ``m`` points: ceil(log2(m / size_bound)), clamped."""
    if m < 2:
        return 0
    L, t = k.smoothness()
    z = eps * m / math.log(m / delta) ** 2 / L * geometry_factor(geom, xi) ** t
    if z <= 1.0:
        return 0
    return min(math.ceil(math.log2(z)), int(math.floor(math.log2(m))))


def coreset_size_bound(m: int, geom: ShellGeometry, k: RadialKernel, eps, xi, delta) -> float:
    """Upper bound on the survivors of ``m`` points after all halvings."""
    L, t = k.smoothness()
    return math.log(m / delta) ** 2 / eps * L * geometry_factor(geom, xi) ** (-t)


def process_captured(
    X,
    geom: ShellGeometry,
    side: Side,
    k: RadialKernel,
    eps: float,
    xi: float,
    delta: float,
    rng: np.random.Generator,
    *,
    ids: Optional[np.ndarray] = None,
    data: Optional[np.ndarray] = None,
    halvings: Optional[int] = None,
    gram: Optional[GramOracle] = None,
) -> Coreset:
    """Halve ``X`` (all on ``side`` of ``geom``) down to a weighted coreset.

    ``ids``/``data`` let a caller keep indices into a larger array instead of
    copies (``X`` may then be None); by default ids index ``X`` itself.
    ``halvings`` overrides the computed round count.
    """
    if X is None:
        ids = np.asarray(ids)
        m = ids.shape[0]
    else:
        X = np.asarray(X, dtype=np.float64).reshape(-1, geom.dim)
        m = X.shape[0]
        if data is None:
            data = X
        if ids is None:
            ids = np.arange(m)
    if m == 0:
        return Coreset(ids[:0], 0, side, geom, k, 0, data)
    T = halving_count(m, geom, k, eps, xi, delta) if halvings is None else int(halvings)
    if T == 0:
        return Coreset(ids, 0, side, geom, k, m, data)
    if gram is None:
        if X is None:
            X = data[ids]
        oracle = make_oracle(k, geom, xi)
        Y = X - geom.center
        oracle.check_side(np.sqrt(np.einsum("ij,ij->i", Y, Y)), side)
        gram = EmbeddingGram(oracle, Y, side)
    keep = np.arange(m)
    cur = gram
    rounds = 0
    for _ in range(T):
        # a singleton cannot be split; the weight reflects the rounds actually run
        if len(cur) < 2:
            break
        rounds += 1
        signs = self_balancing_walk(cur, len(cur), delta / T, rng)
        plus = np.flatnonzero(signs > 0)
        minus = np.flatnonzero(signs < 0)
        chosen = plus if plus.size <= minus.size else minus
        keep = keep[chosen]
        cur = cur.subset(chosen)
    return Coreset(ids[keep], rounds, side, geom, k, m, data)


def query_captured(cs: Coreset, q) -> float:
    """``2^T`` times the kernel sum of ``q`` against the coreset."""
    if cs.size == 0:
        return 0.0
    q = np.asarray(q, dtype=np.float64)
    g = cs.geom
    lo, hi = (g.r_out, g.r_max) if cs.side is Side.INNER else (g.r_min, g.r_in)
    dist = math.sqrt(float(np.sum((q - g.center) ** 2)))
    if not (lo * (1 - 1e-9) <= dist <= hi * (1 + 1e-9)):
        raise ContractError(
            f"query at distance {dist:.12g} outside the {cs.side.opposite.value} band "
            f"[{lo:.12g}, {hi:.12g}]"
        )
    vals = kernel_row(cs.kernel, cs.points, q)
    return math.ldexp(float(np.sum(vals)), cs.weight_log2)
