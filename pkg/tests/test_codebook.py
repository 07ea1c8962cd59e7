import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from mincomm.codebook import (Codebook, Prior, SharedRandomness, derive_codeword, derive_seed,
                              materialize)
from mincomm.errors import ConfigError

seeds = st.integers(0, 2**64 - 1)


def test_degenerate_prior_gives_mean():
    q = Prior(np.array([1.0, -2.0, 0.5]), 0.0)
    cb = Codebook.from_seed(9, q)
    assert np.array_equal(cb.block(1, 50), np.tile(q.mean, (50, 1)))


@given(seeds, st.integers(1, 10**9))
def test_codeword_deterministic(seed, j):
    q = Prior.standard(3)
    a = derive_codeword(SharedRandomness(seed), j, q)
    b = derive_codeword(SharedRandomness(seed), j, q)
    assert a.tobytes() == b.tobytes()


def test_codeword_moments():
    cw = Codebook.from_seed(2024, Prior.standard(2)).block(1, 100_000)
    assert np.all(np.abs(cw.mean(axis=0)) < 4 / np.sqrt(1e5))
    assert np.all(np.abs(cw.var(axis=0) - 1) < 0.05)


def test_codeword_marginal_ks():
    q = Prior(np.array([0.7, -1.0]), 2.5)
    cw = Codebook.from_seed(77, q).block(1, 100_000)
    assert stats.kstest(cw[:, 0], "norm", args=(0.7, np.sqrt(2.5))).pvalue > 0.01


def test_codewords_nearly_uncorrelated_across_index():
    cw = Codebook.from_seed(5, Prior.standard(1)).block(1, 100_000)[:, 0]
    assert abs(np.corrcoef(cw[:-1], cw[1:])[0, 1]) < 4 / np.sqrt(1e5)


def test_materialize():
    q = Prior.standard(4)
    cb = Codebook.from_seed(3, q, capacity=8)
    one = materialize(cb, 1)
    assert len(one) == 1 and np.array_equal(one[0], derive_codeword(cb.randomness, 1, q))
    a, b = materialize(cb), materialize(cb)
    assert len(a) == 8 and all(np.array_equal(x, y) for x, y in zip(a, b))
    with pytest.raises(ConfigError):
        materialize(cb, 0)
    with pytest.raises(ConfigError):
        cb.block(5, 10)


@given(seeds, st.lists(st.integers(1, 10**6), min_size=1, max_size=10))
def test_independent_instances_agree(seed, js):
    q = Prior(np.array([0.1, 0.2]), 0.3)
    a = Codebook.from_seed(seed, q)
    b = Codebook.from_seed(seed, Prior.from_json(q.to_json()))
    for j in js:
        assert a[j].tobytes() == b[j].tobytes()


def test_lazy_access_matches_block():
    cb = Codebook.from_seed(11, Prior.standard(3))
    block = cb.block(1, 1000)
    assert np.array_equal(cb[1000], block[-1])
    assert np.array_equal(cb.block(500, 3), block[499:502])
    assert np.all(np.isfinite(cb[2**40]))


def test_validation():
    with pytest.raises(ConfigError):
        derive_codeword(SharedRandomness(1), 0, Prior.standard(2))
    with pytest.raises(ConfigError):
        SharedRandomness(2**64)
    with pytest.raises(ConfigError):
        Prior(np.array([np.nan]), 1.0)
    with pytest.raises(ConfigError):
        Prior(np.zeros(2), -1.0)


def test_derive_seed_separates_tags():
    s = {derive_seed(0, t, k) for t in range(50) for k in ("data", "train", "codebook")}
    assert len(s) == 150
    assert derive_seed(0, 1, "data") == derive_seed(0, 1, "data")
