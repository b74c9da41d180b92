import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from disckde.carving import BOUNDARY, CarvingParams, alpha_for, hash_eval, sample_carving
from disckde.errors import ConfigError
from disckde.selftest import carving_frequencies


def test_hash_eval_margins():
    d, R, alpha = 16, 2.0, 0.1
    p = CarvingParams(np.zeros(d), 3.0, R, alpha)
    w = alpha * R / math.sqrt(d)
    e = np.zeros(d)
    e[0] = 1.0
    assert hash_eval(p, (3.0 - 2 * w) * e) == 0
    assert hash_eval(p, 3.0 * e) == BOUNDARY
    assert hash_eval(p, (3.0 + 2 * w) * e) == 1


def test_hash_eval_matrix():
    p = CarvingParams(np.zeros(2), 1.0, 1.0, 0.01)
    X = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    assert list(hash_eval(p, X)) == [0, BOUNDARY, 1]


@given(st.integers(1, 40), st.floats(0.1, 10.0), st.floats(1e-5, 0.24), st.integers(0, 2**32 - 1))
def test_sample_ranges(d, R, alpha, seed):
    p = sample_carving(R, alpha, d, np.random.default_rng(seed))
    assert 0.0 <= p.r <= 3.0 * R
    assert p.dim == d and p.half_width == pytest.approx(alpha * R / math.sqrt(d))


def test_center_second_moment(rng):
    R, d = 2.0, 20
    C = np.array([sample_carving(R, 0.1, d, rng).c for _ in range(100_000)])
    assert np.mean(np.sum(C * C, axis=1)) == pytest.approx(R * R, rel=0.02)


def test_center_within_two_R_at_d50(rng):
    d = 50
    norms = np.linalg.norm(rng.standard_normal((100_000, d)) / math.sqrt(d), axis=1)
    assert np.mean(norms <= 2.0) >= 0.999
    # the sampler uses exactly this construction
    p = sample_carving(1.0, 0.1, d, np.random.default_rng(0))
    assert np.allclose(p.c, np.random.default_rng(0).standard_normal(d) / math.sqrt(d), rtol=1e-15)


def test_radius_uniform_ks(rng):
    r = np.array([sample_carving(1.5, 0.1, 3, rng).r for _ in range(10_000)])
    assert stats.kstest(r, "uniform", args=(0.0, 4.5)).pvalue > 0.01


def test_alpha_for():
    assert alpha_for(1, 1.0) == pytest.approx(0.1 / 16)
    n, phi = 1000, 50.0
    assert alpha_for(n, phi) == pytest.approx(0.1 / (4 * math.log(n) * math.log(phi)) ** 2)
    assert alpha_for(10**9, 1e9, c1=1e-9) == 1e-6
    assert alpha_for(1, 1.0, c1=100.0) < 0.25


@pytest.mark.parametrize("args", [(0.0, 0.1, 3), (1.0, 0.0, 3), (1.0, 0.25, 3), (1.0, 0.1, 0)])
def test_sample_rejects(args):
    with pytest.raises(ConfigError):
        sample_carving(*args, np.random.default_rng(0))


@pytest.mark.parametrize("d", [10, 50, 100])
def test_boundary_frequency(d):
    alpha, draws = 0.05, 100_000
    f = carving_frequencies(d, draws, alpha, 0.01, np.random.default_rng(d))
    p = alpha / math.sqrt(d)
    assert f["boundary"] <= p + 3 * math.sqrt(p * (1 - p) / draws)


def test_separation_grows_with_distance():
    d, draws = 20, 50_000
    near = carving_frequencies(d, draws, 1e-3, 0.01, np.random.default_rng(1))["separation"]
    far = carving_frequencies(d, draws, 1e-3, 0.5, np.random.default_rng(1))["separation"]
    assert far > 10 * near
    assert far * math.sqrt(d) >= 0.01
