"""Brute-force references used to check the fast structures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import ShellGeometry, as_dataset, as_point
from .embedding import Side, embedding_constants
from .errors import NumericError, SizeError
from .kernels import ExpMixture, RadialKernel, RationalQuadratic, kernel_row

MAX_EXHAUSTIVE = 20


@dataclass(frozen=True)
class ExactAnswer:
    value: float
    terms: int


def exact_kde(P, q, k: RadialKernel) -> ExactAnswer:
    """Kernel sum over ``P`` with correctly rounded summation."""
    P = as_dataset(P)
    q = as_point(q, dim=P.shape[1])
    return ExactAnswer(math.fsum(kernel_row(k, P, q)), P.shape[0])


def exact_min_discrepancy(u_products) -> float:
    """min over signs of |sum_i chi_i u_i| by enumerating all colorings (n <= 20)."""
    u = np.asarray(u_products, dtype=np.float64).ravel()
    n = u.shape[0]
    if n > MAX_EXHAUSTIVE:
        raise SizeError(f"exhaustive search limited to {MAX_EXHAUSTIVE} terms, got {n}")
    if n == 0:
        return 0.0
    # chi_0 = +1 without loss of generality; the rest doubles the table each step.
    sums = np.array([u[0]])
    for x in u[1:]:
        sums = np.concatenate([sums + x, sums - x])
    return float(np.min(np.abs(sums)))


def _measure_nodes(k: RadialKernel, t0: float, quad_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights representing mu restricted to [0, t0]."""
    if isinstance(k, ExpMixture):
        keep = [i for i, t in enumerate(k.rates) if t <= t0]
        return np.asarray(k.rates)[keep], np.asarray(k.weights)[keep]
    if not isinstance(k, RationalQuadratic):
        raise TypeError(f"no series oracle for {type(k).__name__}")
    beta = k.beta
    # t = t0 u^2 turns t^(beta-1) dt into 2 t0^beta u^(2 beta - 1) du, smooth for beta >= 1.
    order = 20
    panels = max(1, quad_nodes // order)
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    t = t0 * u * u
    dens = 2.0 * t0**beta * u ** (2.0 * beta - 1.0) * np.exp(-t - special.gammaln(beta))
    return t, wu * dens


def series_embedding_inner(
    k: RadialKernel,
    geom: ShellGeometry,
    xi: float,
    x,
    sx: Side,
    y,
    sy: Side,
    k_max: int = 60,
    quad_nodes: int = 10_000,
) -> float:
    """Embedded inner product summed term by term from the tensor-power features.

    ``x`` and ``y`` are shell-centered. Evaluates
    ``int_0^t0 exp(-t(|x|^2+|y|^2)) sum_{j<=k_max} (2 t s <x,y>)^j / j! mu(dt)``.
    """
    t0, rho = embedding_constants(geom, xi)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if sx is not sy:
        s = 1.0
    elif sx is Side.OUTER:
        s = rho * rho
    else:
        s = 1.0 / (rho * rho)
    t, w = _measure_nodes(k, t0, quad_nodes)
    if t.size == 0:
        return 0.0
    z = 2.0 * t * s * float(x @ y)
    term = np.ones_like(t)
    total = term.copy()
    for j in range(1, k_max + 1):
        term = term * z / j
        total += term
    if np.any(np.abs(term) > 1e-13 * np.maximum(np.abs(total), 1e-300)):
        raise NumericError(
            f"series not converged after {k_max} terms (max |2 t s <x,y>| = {np.max(np.abs(z)):.4g})"
        )
    base = np.exp(-t * float(x @ x + y @ y))
    return float(np.sum(w * base * total))
