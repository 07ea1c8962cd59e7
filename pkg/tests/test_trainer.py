import numpy as np
import pytest

from mincomm.codebook import Prior
from mincomm.errors import ConfigError, DivergenceError
from mincomm.hypothesis import empirical_risk, population_risk_mc
from mincomm.quantkernel import QuantKernel, kl_to_prior
from mincomm.trainer import (TrainConfig, make_synthetic_task, objective, objective_grad,
                             sgd_train)

# frozen from the first training run on this task and seed
NOISELESS_D10_RISK = 0.05610835027294726


def test_task_deterministic_and_bounded():
    a, _ = make_synthetic_task(5, 100, 0.1, seed=3)
    b, _ = make_synthetic_task(5, 100, 0.1, seed=3)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert np.all(np.linalg.norm(a.x, axis=1) <= 2.0)
    with pytest.raises(ConfigError):
        make_synthetic_task(0, 10, 0.0, 1)


def test_true_direction_beats_zero():
    S, task = make_synthetic_task(6, 5000, 0.0, seed=1)
    assert empirical_risk(S, task.true_w) < empirical_risk(S, np.zeros(6))


def test_pure_noise_labels():
    _, task = make_synthetic_task(3, 10, 0.5, seed=2)
    est, se = population_risk_mc(task, np.array([3.0, -1.0, 2.0]), 100_000, seed=0)
    assert abs(est - 0.5) < 4 * se + 1e-3


def test_heavy_penalty_pins_to_prior_mean():
    q = Prior(np.array([1.0, -1.0, 0.5]), 1.0)
    S, _ = make_synthetic_task(3, 200, 0.0, seed=4)
    w = sgd_train(S, TrainConfig(learning_rate=1e-7, kl_weight=1e6, epochs=200), q)
    assert np.linalg.norm(w - q.mean) < 1e-2


def test_noiseless_golden():
    S, _ = make_synthetic_task(10, 200, 0.0, seed=0)
    w = sgd_train(S, TrainConfig(kl_weight=0.0, seed=1), Prior.standard(10))
    risk = empirical_risk(S, w)
    assert risk < 0.1
    assert risk == pytest.approx(NOISELESS_D10_RISK, abs=1e-12)


def test_kl_non_increasing_in_penalty():
    q, k = Prior.standard(8), QuantKernel(1.0)
    S, _ = make_synthetic_task(8, 200, 0.0, seed=5)
    kls = [kl_to_prior(sgd_train(S, TrainConfig(kl_weight=lam, seed=2), q), k, q)
           for lam in (0.0, 0.01, 0.1, 1.0)]
    assert all(a >= b - 1e-6 for a, b in zip(kls, kls[1:]))


def test_training_deterministic():
    q = Prior.standard(4)
    S, _ = make_synthetic_task(4, 150, 0.1, seed=6)
    cfg = TrainConfig(kl_weight=0.1, seed=9)
    assert sgd_train(S, cfg, q).tobytes() == sgd_train(S, cfg, q).tobytes()
    assert sgd_train(S, cfg, q).tobytes() != sgd_train(S, TrainConfig(kl_weight=0.1, seed=10), q).tobytes()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    q = Prior(np.array([0.3, -0.2, 0.0, 0.1]), 0.7)
    S, _ = make_synthetic_task(4, 64, 0.1, seed=7)
    h = 1e-6
    for _ in range(100):
        w = rng.standard_normal(4)
        g = objective_grad(w, S, 0.3, q)
        fd = np.array([(objective(w + h * e, S, 0.3, q) - objective(w - h * e, S, 0.3, q)) / (2 * h)
                       for e in np.eye(4)])
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-3)


def test_divergence_reports_config():
    q = Prior.standard(3)
    S, _ = make_synthetic_task(3, 50, 0.0, seed=8)
    cfg = TrainConfig(learning_rate=50.0, kl_weight=1.0)
    with pytest.raises(DivergenceError) as err:
        sgd_train(S, cfg, q)
    assert err.value.config == cfg


def test_config_validation():
    for bad in ({"learning_rate": 0}, {"epochs": 0}, {"batch_size": 0}, {"kl_weight": -1}):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)
    S, _ = make_synthetic_task(3, 10, 0.0, seed=0)
    with pytest.raises(ConfigError):
        sgd_train(S, TrainConfig(), Prior.standard(4))
