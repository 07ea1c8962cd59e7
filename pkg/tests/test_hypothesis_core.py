import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import logit

from mincomm.errors import ConfigError
from mincomm.hypothesis import (Dataset, LossSpec, Sample, as_hypothesis, dataset_from_bytes,
                                dataset_to_bytes, empirical_risk, gen_error, load_dataset, load_model,
                                loss, model_from_bytes, model_to_bytes, population_risk_mc,
                                save_dataset, save_model)
from mincomm.codebook import Prior
from mincomm.trainer import TrainConfig, make_synthetic_task, sgd_train

SPEC = LossSpec(2.0)


class ZeroFeatures:
    """Every feature is the zero vector, so every loss is exactly 0.5."""

    def __init__(self, d):
        self.d = d

    def sample(self, m, rng):
        return np.zeros((m, self.d)), (rng.random(m) < 0.5).astype(np.uint8)


def test_loss_at_origin_is_half():
    assert loss(Sample(np.zeros(2), 0), np.array([3.0, -1.0]), SPEC) == 0.5
    assert loss(Sample(np.zeros(2), 1), np.array([3.0, -1.0]), SPEC) == 0.5


def test_loss_large_margin_is_near_zero():
    assert loss(Sample(np.array([10.0, 0.0]), 1), np.array([10.0, 0.0]), SPEC) == pytest.approx(0.0, abs=1e-9)


def test_loss_dimension_mismatch():
    with pytest.raises(ConfigError):
        loss(Sample(np.zeros(3), 1), np.zeros(2), SPEC)


def test_empirical_risk_single_and_pair():
    w = np.array([1.0, 0.0])
    one = Dataset(np.array([[logit(0.2), 0.0]]), np.array([0]))
    assert empirical_risk(one, w) == pytest.approx(0.2)
    two = Dataset(np.array([[logit(0.2), 0.0], [logit(0.6), 0.0]]), np.array([0, 0]))
    assert empirical_risk(two, w) == pytest.approx(0.4)


def test_empirical_risk_confident_correct_labels():
    rng = np.random.default_rng(0)
    w = np.array([50.0, -50.0])
    x = rng.uniform(-1, 1, (100, 2))
    x = x[np.abs(x @ w) > 10]
    y = (x @ w > 0).astype(np.uint8)
    assert empirical_risk(Dataset(x, y), w) < 1e-3


def test_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        Dataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ConfigError):
        Dataset.from_samples([])


def test_dataset_validation():
    with pytest.raises(ConfigError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]))
    with pytest.raises(ConfigError):
        Dataset(np.array([[np.nan, 0.0]]), np.array([1]))
    with pytest.raises(ConfigError):
        as_hypothesis([1.0, np.inf])


def test_population_risk_constant_loss():
    est, se = population_risk_mc(ZeroFeatures(3), np.ones(3), 1000, seed=1)
    assert est == 0.5 and se == 0.0


def test_population_risk_seed_consistency():
    _, task = make_synthetic_task(4, 10, 0.1, seed=3)
    w = task.true_w * 0.3
    a, sa = population_risk_mc(task, w, 200_000, seed=1)
    b, sb = population_risk_mc(task, w, 200_000, seed=2)
    assert abs(a - b) < 3 * math.hypot(sa, sb)
    assert population_risk_mc(task, w, 1000, seed=5) == population_risk_mc(task, w, 1000, seed=5)


def test_trained_model_beats_zero():
    S, task = make_synthetic_task(4, 300, 0.0, seed=4)
    w = sgd_train(S, TrainConfig(epochs=50), Prior.standard(4))
    trained, _ = population_risk_mc(task, w, 50_000, seed=9)
    zero, _ = population_risk_mc(task, np.zeros(4), 50_000, seed=9)
    assert trained < zero


def test_gen_error_examples():
    S = Dataset(np.zeros((3, 2)), np.array([0, 1, 1]))
    w = np.zeros(2)
    assert gen_error(S, w, empirical_risk(S, w)) == 0.0
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (50, 2))
    x = x[np.abs(x[:, 0]) > 0.2]
    w = np.array([100.0, 0.0])
    S = Dataset(x, (x[:, 0] > 0).astype(np.uint8))
    assert gen_error(S, w, 1.0) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ConfigError):
        gen_error(S, w, 1.5)


def test_gen_error_constant_loss_task():
    S = Dataset(np.zeros((20, 3)), np.arange(20) % 2)
    pop, se = population_risk_mc(ZeroFeatures(3), np.ones(3), 5000, seed=0)
    assert abs(gen_error(S, np.ones(3), pop)) <= 3 * se + 1e-12


def test_lipschitz_probe():
    rng = np.random.default_rng(7)
    m, d = 10_000, 5
    g = rng.standard_normal((m, d))
    x = g / np.linalg.norm(g, axis=1, keepdims=True) * SPEC.feature_bound * rng.random((m, 1))
    y = rng.integers(0, 2, m)
    w1, w2 = rng.standard_normal((m, d)) * 3, rng.standard_normal((m, d)) * 3
    sig = lambda z: 1 / (1 + np.exp(-z))
    gap = np.abs(np.abs(sig((x * w1).sum(1)) - y) - np.abs(sig((x * w2).sum(1)) - y))
    assert np.all(gap <= SPEC.lipschitz_const * np.linalg.norm(w1 - w2, axis=1) + 1e-12)
    assert SPEC.lipschitz_const == 0.5


@given(st.integers(0, 2**32 - 1))
def test_empirical_risk_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    S, _ = make_synthetic_task(3, 25, 0.2, seed=seed)
    perm = rng.permutation(S.n)
    w = rng.standard_normal(3)
    assert empirical_risk(S, w) == pytest.approx(empirical_risk(Dataset(S.x[perm], S.y[perm]), w), abs=1e-15)


@given(st.integers(1, 6), st.integers(1, 30), st.integers(0, 1000))
def test_dataset_bytes_round_trip(d, n, seed):
    S, _ = make_synthetic_task(d, n, 0.1, seed=seed)
    back = dataset_from_bytes(dataset_to_bytes(S))
    assert np.array_equal(back.x, S.x) and np.array_equal(back.y, S.y)


def test_binary_layout_and_files(tmp_path):
    S = Dataset(np.array([[1.5, -2.0]]), np.array([1]))
    raw = dataset_to_bytes(S)
    assert raw[:4] == b"RCDS" and raw[4:16] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
    assert len(raw) == 16 + 2 * 8 + 1
    save_dataset(tmp_path / "d.rcds", S)
    assert np.array_equal(load_dataset(tmp_path / "d.rcds").x, S.x)
    w = np.array([0.25, -1e300, 3.0])
    assert model_to_bytes(w)[:4] == b"RCMW"
    save_model(tmp_path / "m.rcmw", w)
    assert np.array_equal(load_model(tmp_path / "m.rcmw"), w)
    with pytest.raises(ConfigError):
        model_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ConfigError):
        dataset_from_bytes(raw[:-1])
