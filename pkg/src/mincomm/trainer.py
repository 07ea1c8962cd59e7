"""Synthetic logistic task and mini-batch SGD with an optional KL-to-prior penalty."""
from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import ConfigError, DivergenceError
from .hypothesis import Dataset, LossSpec

FEATURE_BOUND = 2.0
DIVERGENCE_NORM = 1e6
DEFAULT_SIGNAL = 20.0


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    epochs: int = 200
    batch_size: int = 32
    kl_weight: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.epochs >= 1 and self.batch_size >= 1):
            raise ConfigError(f"invalid training config {self}")
        if self.kl_weight < 0:
            raise ConfigError("kl_weight must be >= 0")

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """Features uniform in the ball of radius ``feature_bound``; logistic labels, then flips.

    ``y = 1{sigmoid(true_w . x) > u}`` with ``u ~ U(0, 1)``, after which each
    label is flipped with probability ``label_noise``.
    """

    true_w: np.ndarray
    feature_bound: float = FEATURE_BOUND
    label_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.label_noise <= 0.5:
            raise ConfigError("label_noise must lie in [0, 0.5]")

    @property
    def d(self):
        return self.true_w.shape[0]

    @property
    def loss_spec(self):
        return LossSpec(self.feature_bound)

    def sample(self, m, rng):
        d = self.d
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radius = self.feature_bound * rng.random(m) ** (1.0 / d)
        x = g * radius[:, None]
        y = (expit(x @ self.true_w) > rng.random(m)).astype(np.uint8)
        flip = rng.random(m) < self.label_noise
        return x, np.where(flip, 1 - y, y).astype(np.uint8)


def make_synthetic_task(d, n, noise, seed, signal=DEFAULT_SIGNAL):
    """Draw a task (random direction scaled to ``signal``) and ``n`` training samples from it."""
    if d < 1 or n < 1:
        raise ConfigError("d and n must be >= 1")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    task = SyntheticTask(signal * direction / np.linalg.norm(direction), FEATURE_BOUND, noise)
    x, y = task.sample(n, rng)
    return Dataset(x, y), task


def objective(w, S, kl_weight, prior):
    """Empirical risk plus ``kl_weight * |w - mu|^2 / (2 v)`` (the w-dependent part of the KL)."""
    delta = w - prior.mean
    risk = np.abs(expit(S.x @ w) - S.y).mean()
    return float(risk + kl_weight * (delta @ delta) / (2.0 * prior.variance))


def objective_grad(w, S, kl_weight, prior):
    s = expit(S.x @ w)
    coef = (1.0 - 2.0 * S.y.astype(np.float64)) * s * (1.0 - s)
    return coef @ S.x / S.n + kl_weight * (w - prior.mean) / prior.variance


def sgd_train(S, cfg, prior, kernel=None, w0=None):
    """Mini-batch SGD on the objective above; deterministic given ``cfg.seed``.

    The kernel is accepted for interface symmetry: the penalty's gradient
    ``(w - mu)/v`` does not depend on the kernel variance.

    Raises:
        DivergenceError: when the iterate leaves the ball of radius 1e6.
    """
    if S.d != prior.d:
        raise ConfigError(f"dataset has d={S.d}, prior has d={prior.d}")
    if prior.variance <= 0 and cfg.kl_weight > 0:
        raise ConfigError("KL penalty needs a positive prior variance")
    w = np.zeros(S.d) if w0 is None else np.array(w0, dtype=np.float64)
    inv_pvar = 1.0 / prior.variance if prior.variance > 0 else 0.0
    w, blew_up = _kernels.sgd_run(S.x, S.y.astype(np.float64), w, prior.mean, cfg.learning_rate,
                                  cfg.epochs, cfg.batch_size, cfg.kl_weight, inv_pvar,
                                  np.uint64(cfg.seed))
    if blew_up or not np.all(np.isfinite(w)) or math.sqrt(float(w @ w)) > DIVERGENCE_NORM:
        raise DivergenceError("SGD diverged", cfg)
    return w
