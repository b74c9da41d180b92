"""Statistical self-checks of the randomized components, with fixed seeds."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .balance import VectorGram, self_balancing_walk, walk_constant
from .carving import BOUNDARY
from .core import BuildParams, ShellGeometry
from .embedding import Side, make_oracle
from .farfield import far_radius, ring_count
from .kernels import Cauchy, RationalQuadratic, kernel_eval, kernel_row
from .tree import build_forest

# Embedding norm slack constant and far-field ring ratio limit used by the checks.
C_NORM = 30.0
RING_RATIO_LIMIT = 2700.0


def _check(suite: str, name: str, value: float, limit: float, ok: bool, **extra) -> dict:
    row = {"suite": suite, "check": name, "value": value, "limit": limit, "pass": bool(ok)}
    row.update(extra)
    return row


def unit_vectors(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    g = rng.standard_normal((m, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def carving_frequencies(d: int, draws: int, alpha: float, sep: float, rng: np.random.Generator) -> dict:
    """Monte-Carlo frequencies of the carving events for a fixed pair at distance ``sep * R``."""
    R = 1.0
    x = np.zeros(d)
    x[0] = 0.5 * R
    y = x.copy()
    y[1] = sep * R
    c = rng.standard_normal((draws, d)) * (R / math.sqrt(d))
    r = rng.uniform(0.0, 3.0 * R, draws)
    w = alpha * R / math.sqrt(d)
    dx = np.linalg.norm(x - c, axis=1)
    dy = np.linalg.norm(y - c, axis=1)

    def h(dist):
        return np.where(dist <= r - w, 0, np.where(dist > r + w, 1, BOUNDARY))

    hx, hy = h(dx), h(dy)
    separated = (hx != BOUNDARY) & (hy != BOUNDARY) & (hx != hy)
    return {
        "separation": float(separated.mean()),
        "boundary": float((hx == BOUNDARY).mean()),
        "far_from_center": float(((dx >= R / 100.0) & (np.linalg.norm(c, axis=1) <= 2.0 * R)).mean()),
    }


def suite_carving(seed: int = 0) -> list[dict]:
    rows = []
    draws = 100_000
    # narrower than the R/100 separation being tested, as in any built tree
    alpha = 1e-3
    for d in (10, 50, 100):
        rng = np.random.default_rng([seed, d])
        f = carving_frequencies(d, draws, alpha, 0.01, rng)
        c1_hat = f["separation"] * math.sqrt(d)
        rows.append(_check("carving", f"separation_d{d}", c1_hat, 0.01, c1_hat >= 0.01, note="fitted c1"))
        p = alpha / math.sqrt(d)
        sigma = math.sqrt(max(p * (1 - p), 1e-12) / draws)
        rows.append(_check("carving", f"boundary_d{d}", f["boundary"], p + 3 * sigma, f["boundary"] <= p + 3 * sigma))
        if d >= 50:
            rows.append(
                _check("carving", f"far_from_center_d{d}", f["far_from_center"], 0.999, f["far_from_center"] >= 0.999)
            )
    return rows


def walk_tail_frequency(n: int, d: int, delta: float, trials: int, directions: int, rng) -> np.ndarray:
    """Per-direction frequency of |<w_n, u>| exceeding 30 ln(n/delta)."""
    V = unit_vectors(rng, n, d)
    U = unit_vectors(rng, directions, d)
    signs = self_balancing_walk(VectorGram(V), n, delta, rng, trials=trials)
    proj = signs.astype(np.float64) @ (V @ U.T)
    return (np.abs(proj) > walk_constant(n, delta)).mean(axis=0)


def suite_walk(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    delta = 0.01
    freq = walk_tail_frequency(256, 64, delta, 2000, 5, rng)
    rows = [_check("walk", "tail_frequency_max", float(freq.max()), 0.02, freq.max() <= 0.02)]
    # Identical vectors: the running inner product is held near the origin.
    n = 200
    v = np.ones((n, 4)) / 2.0
    signs = self_balancing_walk(VectorGram(v), n, delta, rng, trials=200)
    partial = np.abs(np.cumsum(signs, axis=1))  # <w_i, v>/|v|^2
    c = walk_constant(n, delta)
    rows.append(_check("walk", "identical_partial_max", float(partial.max()), c + 1, partial.max() <= c + 1))
    return rows


def random_shell(rng: np.random.Generator, d: int) -> tuple[ShellGeometry, float]:
    """Random well-separated geometry (log-uniform scales) and additive error."""
    r_in = 10 ** rng.uniform(-1.5, 1.5)
    r_min = r_in * 10 ** rng.uniform(-2, 0)
    r_out = r_in * (1 + 10 ** rng.uniform(-1.5, 1))
    r_max = r_out * (1 + 10 ** rng.uniform(-1, 1))
    xi = 10 ** rng.uniform(-8, -1)
    return ShellGeometry(np.zeros(d), r_min, r_in, r_out, r_max), xi


def point_in_band(rng, d, lo, hi) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v) * rng.uniform(lo, hi)


def embedding_checks(configs: int, rng: np.random.Generator, kernels=None) -> dict:
    """Counts of one-sided, norm-bound and exponent violations over random configurations."""
    kernels = kernels or [Cauchy(), RationalQuadratic(2.0), RationalQuadratic(1.5)]
    out = {"one_sided": 0, "norm_bound": 0, "inner_exponent": 0, "worst_gap_over_xi": 0.0, "worst_norm_ratio": 0.0}
    for i in range(configs):
        k = kernels[i % len(kernels)]
        d = int(rng.integers(1, 6))
        geom, xi = random_shell(rng, d)
        o = make_oracle(k, geom, xi)
        x = point_in_band(rng, d, geom.r_min, geom.r_in)
        y = point_in_band(rng, d, geom.r_out, geom.r_max)
        K = kernel_eval(k, x, y)
        e = o.inner(x, Side.INNER, y, Side.OUTER)
        gap = K - e
        if not (0.0 <= gap <= xi):
            out["one_sided"] += 1
        out["worst_gap_over_xi"] = max(out["worst_gap_over_xi"], gap / xi)
        scale = (geom.r_out - geom.r_in) ** 2 / (math.log(1 / xi) * geom.r_in**2)
        for z, s in ((x, Side.INNER), (y, Side.OUTER)):
            nrm = o.norm_sq(z, s)
            bound = C_NORM * float(k.G(scale * float(z @ z)))
            out["worst_norm_ratio"] = max(out["worst_norm_ratio"], nrm / bound * C_NORM)
            if nrm > bound:
                out["norm_bound"] += 1
        expo = o.t0 * 2.0 * (1.0 / o.rho**2 - 1.0) * float(x @ x)
        if expo > 12.0 + 1e-9:
            out["inner_exponent"] += 1
    return out


def suite_embedding(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    res = embedding_checks(2000, rng)
    rows = [
        _check("embedding", "one_sided_violations", res["one_sided"], 0, res["one_sided"] == 0),
        _check("embedding", "inner_exponent_violations", res["inner_exponent"], 0, res["inner_exponent"] == 0),
        _check(
            "embedding", "norm_bound_violations", res["norm_bound"], 0, res["norm_bound"] == 0,
            worst_ratio=res["worst_norm_ratio"],
        ),
    ]
    # Same-side Gram matrices are positive semidefinite.
    worst = 0.0
    for _ in range(50):
        d = 3
        geom, xi = random_shell(rng, d)
        o = make_oracle(Cauchy(), geom, xi)
        for side in (Side.INNER, Side.OUTER):
            lo, hi = o.band(side)
            Y = np.array([point_in_band(rng, d, lo, hi) for _ in range(20)])
            G = o.gram_rows(Y, np.einsum("ij,ij->i", Y, Y), side, slice(None))
            worst = min(worst, float(np.linalg.eigvalsh(0.5 * (G + G.T)).min() / max(1.0, np.abs(G).max())))
    rows.append(_check("embedding", "gram_min_eigenvalue", worst, -1e-8, worst >= -1e-8))
    return rows


def far_collapse_trial(rng, k, eps, xi, n=50, d=None) -> bool:
    d = d or int(rng.integers(1, 20))
    r = 10 ** rng.uniform(-1, 1)
    P = np.array([point_in_band(rng, d, 0.0, r) for _ in range(n)])
    u = point_in_band(rng, d, 1.0, 1.0)
    q = u * far_radius(r, eps, xi)
    exact = math.fsum(kernel_row(k, P, q))
    approx = n * kernel_eval(k, np.zeros(d), q)
    return (1 - eps) * exact - 2 * xi * n <= approx <= (1 + eps) * exact + 2 * xi * n


def ring_ratio(eps: float, xi: float, r_in: float = 1.0, r: float = 2.0) -> float:
    """Largest (2 r_max / (r_out - r_in)) (r_in / r_min) over the rings of one far structure."""
    r_min, rin, base = r_in / 100.0, 4.0 * r_in / 3.0, r - r_in / 3.0
    return max(
        2.0 * 2 ** (h + 1) * base / (2**h * base - rin) * (rin / r_min) for h in range(ring_count(eps, xi))
    )


def suite_farfield(seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    kernels = [Cauchy(), RationalQuadratic(2.0), RationalQuadratic(4.0)]
    bad = 0
    trials = 300
    for i in range(trials):
        eps = rng.uniform(0.05, 0.9)
        xi = 10 ** rng.uniform(-8, -1)
        if not far_collapse_trial(rng, kernels[i % 3], eps, xi):
            bad += 1
    ratio = ring_ratio(0.2, 1e-4)
    return [
        _check("farfield", "collapse_violations", bad, 0, bad == 0),
        _check("farfield", "ring_ratio", ratio, RING_RATIO_LIMIT, ratio <= RING_RATIO_LIMIT),
    ]


def uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float = 1.0) -> np.ndarray:
    g = unit_vectors(rng, n, d)
    return g * radius * rng.random((n, 1)) ** (1.0 / d)


def e2e_accuracy(n: int, d: int, queries: int, seed: int, eps: float = 0.2, tau: float = 1e-3) -> dict:
    rng = np.random.default_rng(seed)
    P = uniform_ball(rng, n, d)
    params = BuildParams.from_tau(eps, tau, delta=0.01, seed=seed)
    k = Cauchy()
    forest = build_forest(P, k, params)
    Q = uniform_ball(rng, queries, d)
    good = fails = 0
    for q in Q:
        res = forest.query(q)
        if not res.ok:
            fails += 1
            continue
        exact = math.fsum(kernel_row(k, P, q))
        slack = 2 * params.xi * n
        if (1 - eps) * exact - slack <= res.estimate <= (1 + eps) * exact + slack:
            good += 1
    return {"good": good, "fails": fails, "queries": queries, "stats": forest.stats}


def suite_e2e(seed: int = 0) -> list[dict]:
    res = e2e_accuracy(2000, 30, 100, seed)
    return [_check("e2e", "within_bounds", res["good"], 90, res["good"] >= 90, fails=res["fails"])]


SUITES: dict[str, Callable[[int], list[dict]]] = {
    "carving": suite_carving,
    "walk": suite_walk,
    "embedding": suite_embedding,
    "farfield": suite_farfield,
    "e2e": suite_e2e,
}
