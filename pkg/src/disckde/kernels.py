"""Positive-definite radial kernels ``K(x, y) = G(||x - y||^2)``.

Every kernel here is completely monotone in the squared distance, so it is
the Laplace transform of a nonnegative measure ``mu`` on ``[0, inf)``:
``G(lam) = int exp(-t * lam) mu(dt)``. The embedding code only ever needs
the truncated transform

    psi(a, t0) = int_0^t0 exp(-t * a) mu(dt),

evaluated at possibly negative ``a``. Three families are provided:

* ``RationalQuadratic(beta)``: ``G(lam) = (1 + lam)^-beta``, whose measure is
  the Gamma(beta, 1) density. ``beta = 1`` is the Cauchy kernel and gets a
  closed form.
* ``ExpMixture``: ``G(lam) = sum_i w_i exp(-t_i lam)``, a finite set of atoms.
  Used to approximate kernels whose measure has no convenient form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError, NumericError, StructuralError

# t0 * max(0, -a) above this would overflow exp() in the transform.
PSI_EXPONENT_LIMIT = 50.0

QUAD_REL_TOL = 1e-12
QUAD_MAX_NODES = 2**20
_GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def _one_minus_exp_over(s: np.ndarray) -> np.ndarray:
    """(1 - exp(-s)) / s, accurate near s = 0 and for negative s."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    small = np.abs(s) < 1e-6
    ss = s[small]
    out[small] = 1.0 - ss / 2.0 + ss * ss / 6.0
    big = ~small
    out[big] = -np.expm1(-s[big]) / s[big]
    return out


def _scalar_or_array(value: np.ndarray, like) -> "float | np.ndarray":
    if np.ndim(like) == 0:
        return float(value.reshape(()))
    return value


class RadialKernel:
    """Common interface; concrete families override ``G`` and ``psi``."""

    smooth_L: Optional[float]
    smooth_t: Optional[float]

    def G(self, lam):
        raise NotImplementedError

    def psi(self, a, t0: float):
        raise NotImplementedError

    @property
    def descriptor(self) -> str:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        return kernel_eval(self, x, y)

    def smoothness(self) -> tuple[float, float]:
        if self.smooth_L is None or self.smooth_t is None:
            raise ConfigError(f"kernel {self.descriptor!r} has no smoothness parameters (L, t)")
        return float(self.smooth_L), float(self.smooth_t)

    def _check_psi_args(self, a: np.ndarray, t0: float) -> None:
        if not (t0 > 0.0 and math.isfinite(t0)):
            raise DomainError(f"t0 must be finite and positive, got {t0}")
        if a.size and t0 * max(0.0, -float(a.min())) > PSI_EXPONENT_LIMIT * (1 + 1e-12):
            raise DomainError(
                f"psi overflow guard: t0 * max(0, -a) = {t0 * -float(a.min()):.4g} "
                f"exceeds {PSI_EXPONENT_LIMIT}"
            )


@dataclass(frozen=True)
class RationalQuadratic(RadialKernel):
    """``G(lam) = (1 + lam)^-beta`` for ``beta >= 1``; (L, t) defaults to (1, 2 beta)."""

    beta: float = 1.0
    smooth_L: Optional[float] = None
    smooth_t: Optional[float] = None

    def __post_init__(self):
        if not (self.beta >= 1.0 and math.isfinite(self.beta)):
            raise ConfigError(f"rational quadratic needs beta >= 1, got {self.beta}")
        if self.smooth_L is None:
            object.__setattr__(self, "smooth_L", 1.0)
        if self.smooth_t is None:
            object.__setattr__(self, "smooth_t", 2.0 * self.beta)

    @property
    def is_cauchy(self) -> bool:
        return self.beta == 1.0

    @property
    def descriptor(self) -> str:
        return "cauchy" if self.is_cauchy else f"rq:{self.beta!r}"

    def G(self, lam):
        lam_a = np.asarray(lam, dtype=np.float64)
        if np.any(lam_a < 0):
            raise DomainError("G is defined for lambda >= 0 only")
        return _scalar_or_array(np.power(1.0 + lam_a, -self.beta), lam)

    def psi(self, a, t0: float):
        a_arr = np.atleast_1d(np.asarray(a, dtype=np.float64))
        self._check_psi_args(a_arr, t0)
        if self.is_cauchy:
            out = t0 * _one_minus_exp_over(t0 * (a_arr + 1.0))
        else:
            out = self._psi_gamma(a_arr, t0)
        return _scalar_or_array(out, a)

    def _psi_gamma(self, a: np.ndarray, t0: float) -> np.ndarray:
        beta = self.beta
        b = a + 1.0
        s = t0 * b
        out = np.empty_like(a)
        pos = s > 1e-6
        out[pos] = special.gammainc(beta, s[pos]) / np.power(b[pos], beta)
        small = (~pos) & (s > -1e-6)
        if np.any(small):
            # 1F1(beta; beta+1; -s) truncated: t0^beta / Gamma(beta+1) * (1 - beta s/(beta+1) + ...)
            ss = s[small]
            series = 1.0 - beta * ss / (beta + 1.0) + beta * ss * ss / (2.0 * (beta + 2.0))
            out[small] = t0**beta / special.gamma(beta + 1.0) * series
        neg = s <= -1e-6
        if np.any(neg):
            out[neg] = _gamma_density_quadrature(beta, b[neg], t0)
        return out

    def __repr__(self):
        return f"RationalQuadratic(beta={self.beta})"


def Cauchy() -> RationalQuadratic:
    """``K(x, y) = 1 / (1 + ||x - y||^2)``, smoothness (L, t) = (1, 2)."""
    return RationalQuadratic(1.0)


def _gamma_density_quadrature(beta: float, b: np.ndarray, t0: float) -> np.ndarray:
    """int_0^t0 t^(beta-1) exp(-t b) dt / Gamma(beta) for b <= 0.

    Composite Gauss-Legendre on dyadically graded panels towards t = 0 (where
    t^(beta-1) may be non-smooth), doubling the subpanel count until two
    successive estimates agree to ``QUAD_REL_TOL``.
    """
    b = np.asarray(b, dtype=np.float64)
    lg = special.gammaln(beta)

    def estimate(level: int) -> tuple[np.ndarray, int]:
        n_geo = 8 + 4 * level
        sub = 2**level
        edges = [0.0] + [t0 * 2.0 ** (-j) for j in range(n_geo, -1, -1)]
        knots = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo == 0.0:
                knots.append((lo, hi))
                continue
            step = (hi - lo) / sub
            knots.extend((lo + k * step, lo + (k + 1) * step) for k in range(sub))
        lo = np.array([k[0] for k in knots])
        hi = np.array([k[1] for k in knots])
        half = 0.5 * (hi - lo)
        t = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_X[None, :]
        w = (half[:, None] * _GL_W[None, :]).ravel()
        t = t.ravel()
        logf = (beta - 1.0) * np.log(t)[None, :] - np.outer(b, t) - lg
        return np.exp(logf) @ w, t.size

    prev, nodes = estimate(0)
    level = 1
    while True:
        cur, nodes = estimate(level)
        if nodes > QUAD_MAX_NODES:
            raise NumericError(
                f"gamma-density quadrature did not converge: beta={beta}, t0={t0}, "
                f"b range=({b.min():.4g}, {b.max():.4g}), nodes={nodes}"
            )
        if np.all(np.abs(cur - prev) <= QUAD_REL_TOL * np.abs(cur)):
            return cur
        prev = cur
        level += 1


@dataclass(frozen=True)
class ExpMixture(RadialKernel):
    """``G(lam) = sum_i w_i exp(-t_i lam)``: measure with atoms ``w_i`` at ``t_i``.

    Weights must be nonnegative with sum at most 1; the smoothness parameters
    cannot be derived automatically and must be supplied.
    """

    weights: tuple = (1.0,)
    rates: tuple = (1.0,)
    smooth_L: Optional[float] = None
    smooth_t: Optional[float] = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        r = tuple(float(x) for x in self.rates)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)
        if len(w) != len(r) or not w:
            raise ConfigError("expmix needs equally many weights and rates (at least one)")
        if any(x < 0 for x in w) or any(x < 0 for x in r):
            raise ConfigError("expmix weights and rates must be nonnegative")
        if sum(w) > 1.0 + 1e-12:
            raise ConfigError(f"expmix weights sum to {sum(w)} > 1")

    @property
    def descriptor(self) -> str:
        body = ",".join(f"{w!r}:{t!r}" for w, t in zip(self.weights, self.rates))
        tail = "" if self.smooth_L is None else f"@{self.smooth_L!r}:{self.smooth_t!r}"
        return f"expmix:{body}{tail}"

    def G(self, lam):
        lam_a = np.asarray(lam, dtype=np.float64)
        if np.any(lam_a < 0):
            raise DomainError("G is defined for lambda >= 0 only")
        w = np.asarray(self.weights)
        r = np.asarray(self.rates)
        out = np.exp(-np.multiply.outer(lam_a, r)) @ w
        return _scalar_or_array(np.asarray(out), lam)

    def psi(self, a, t0: float):
        a_arr = np.atleast_1d(np.asarray(a, dtype=np.float64))
        self._check_psi_args(a_arr, t0)
        keep = [i for i, t in enumerate(self.rates) if t <= t0]
        if not keep:
            return _scalar_or_array(np.zeros_like(a_arr), a)
        w = np.asarray(self.weights)[keep]
        r = np.asarray(self.rates)[keep]
        out = np.exp(-np.multiply.outer(a_arr, r)) @ w
        return _scalar_or_array(out, a)


def eval_G(k: RadialKernel, lam):
    """Kernel profile ``G`` at squared distance ``lam >= 0``."""
    return k.G(lam)


def kernel_eval(k: RadialKernel, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise StructuralError(f"dimension mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    return float(k.G(float(diff @ diff)))


def kernel_row(k: RadialKernel, X: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vector of ``K(x, q)`` over the rows of ``X``."""
    diff = X - q
    return np.asarray(k.G(np.einsum("ij,ij->i", diff, diff)), dtype=np.float64)


def psi(k: RadialKernel, a, t0: float):
    """Truncated measure transform ``int_0^t0 exp(-t a) mu(dt)``."""
    return k.psi(a, t0)


def smoothness_params(k: RadialKernel) -> tuple[float, float]:
    return k.smoothness()


def parse_kernel(text: str) -> RadialKernel:
    """Parse ``cauchy``, ``rq:<beta>`` or ``expmix:<w>:<t>,...[@<L>:<t>]``."""
    s = text.strip().lower()
    if s == "cauchy":
        return Cauchy()
    if s.startswith("rq:"):
        try:
            beta = float(s[3:])
        except ValueError:
            raise ConfigError(f"bad rq beta in {text!r}") from None
        return RationalQuadratic(beta)
    if s.startswith("expmix:"):
        body, _, smooth = s[7:].partition("@")
        weights, rates = [], []
        try:
            for item in body.split(","):
                w, t = item.split(":")
                weights.append(float(w))
                rates.append(float(t))
            L = t_exp = None
            if smooth:
                L_s, t_s = smooth.split(":")
                L, t_exp = float(L_s), float(t_s)
        except ValueError:
            raise ConfigError(f"malformed expmix descriptor {text!r}") from None
        return ExpMixture(tuple(weights), tuple(rates), L, t_exp)
    raise ConfigError(f"unknown kernel descriptor {text!r}")
