"""Synthetic benchmark: build time, index size, query latency and accuracy."""

from __future__ import annotations

import math
import os
import tempfile
import time

import numpy as np

from .core import BuildParams, estimate_aspect_ratio
from .io import save_index
from .kernels import RadialKernel, kernel_row
from .selftest import uniform_ball, unit_vectors
from .tree import build_forest

DISTRIBUTIONS = ("uniform-ball", "two-clusters", "shells")
COLUMNS = (
    "n", "d", "kernel", "eps", "dist", "build_s", "index_bytes",
    "query_mean_s", "query_median_s", "query_p95_s", "mean_rel_err", "fail_rate",
)


def make_points(dist: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if dist == "uniform-ball":
        return uniform_ball(rng, n, d)
    if dist == "two-clusters":
        half = n // 2
        a = uniform_ball(rng, half, d, 0.01)
        b = uniform_ball(rng, n - half, d, 0.01)
        b[:, 0] += 10.0
        return np.vstack([a, b])
    if dist == "shells":
        radii = rng.choice([0.5, 1.0, 2.0], size=(n, 1))
        return unit_vectors(rng, n, d) * radii * (1 + 0.01 * rng.standard_normal((n, 1)))
    raise ValueError(f"unknown distribution {dist!r}")


def bench_row(
    n: int, d: int, k: RadialKernel, eps: float, dist: str, seed: int = 0,
    tau: float = 1e-3, trees: int = 3, queries: int = 100,
) -> dict:
    rng = np.random.default_rng([seed, n, d])
    P = make_points(dist, n, d, rng)
    phi = estimate_aspect_ratio(P)
    params = BuildParams.from_tau(eps, tau, seed=seed, num_trees=trees, phi=phi)
    t0 = time.perf_counter()
    forest = build_forest(P, k, params)
    build_s = time.perf_counter() - t0
    fd, path = tempfile.mkstemp(suffix=".kdcs")
    os.close(fd)
    try:
        save_index(forest, path)
        index_bytes = os.path.getsize(path)
    finally:
        os.unlink(path)
    Q = P[rng.integers(0, n, queries)] + 0.01 * rng.standard_normal((queries, d)) / math.sqrt(d)
    times, errs, fails = [], [], 0
    for q in Q:
        t = time.perf_counter()
        res = forest.query(q)
        times.append(time.perf_counter() - t)
        if not res.ok:
            fails += 1
            continue
        exact = math.fsum(kernel_row(k, P, q))
        errs.append(abs(res.estimate - exact) / exact)
    times = np.asarray(times)
    return {
        "n": n,
        "d": d,
        "kernel": k.descriptor,
        "eps": eps,
        "dist": dist,
        "build_s": round(build_s, 3),
        "index_bytes": index_bytes,
        "query_mean_s": float(times.mean()),
        "query_median_s": float(np.median(times)),
        "query_p95_s": float(np.percentile(times, 95)),
        "mean_rel_err": float(np.mean(errs)) if errs else float("nan"),
        "fail_rate": fails / queries,
    }
