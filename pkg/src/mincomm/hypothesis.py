"""Hypotheses, datasets, the bounded Lipschitz loss and the three risks.

A hypothesis is a plain 1-D float64 array.  A dataset stores features as an
``(n, d)`` array and binary labels as a ``uint8`` vector; :class:`Sample` is
only a convenience view for single-point calls.
"""
from dataclasses import dataclass
import struct

import numpy as np
from scipy.special import expit

from .errors import ConfigError

DATASET_MAGIC = b"RCDS"
MODEL_MAGIC = b"RCMW"
FORMAT_VERSION = 1


def as_hypothesis(w, d=None):
    """Validate and return ``w`` as a finite float64 vector."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ConfigError(f"hypothesis must be a non-empty vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise ConfigError(f"dimension mismatch: expected {d}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("hypothesis has non-finite entries")
    return arr


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.asarray(self.y)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ConfigError(f"dataset needs n >= 1 samples of d >= 1 features, got {x.shape}")
        if y.shape != (x.shape[0],):
            raise ConfigError("labels must be a vector with one entry per sample")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("labels must be 0 or 1")
        if not np.all(np.isfinite(x)):
            raise ConfigError("features must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y.astype(np.uint8))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return Sample(self.x[i], int(self.y[i]))

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        if not samples:
            raise ConfigError("empty dataset")
        return cls(np.stack([s.x for s in samples]), np.array([s.y for s in samples]))


@dataclass(frozen=True)
class LossSpec:
    """``|sigmoid(w.x) - y|`` with Lipschitz constant ``feature_bound / 4``."""

    feature_bound: float
    kind: str = "sigmoid-abs"

    def __post_init__(self):
        if self.kind != "sigmoid-abs":
            raise ConfigError(f"unsupported loss kind {self.kind!r}")
        if not self.feature_bound > 0:
            raise ConfigError("feature_bound must be positive")

    @property
    def lipschitz_const(self):
        return self.feature_bound / 4.0


def _losses(x, y, w):
    return np.abs(expit(x @ w) - y)


def loss(z, w, spec=None):
    """Loss of one sample; always in ``[0, 1]``."""
    x = np.asarray(z.x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise ConfigError(f"dimension mismatch: x has {x.shape}, w has {w.shape}")
    return float(abs(expit(x @ w) - z.y))


def empirical_risk(S, w, spec=None):
    """Mean loss over the dataset."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (S.d,):
        raise ConfigError(f"dimension mismatch: dataset d={S.d}, w has {w.shape}")
    return float(_losses(S.x, S.y, w).mean())


def empirical_risks(S, ws):
    """Empirical risk of each row of ``ws`` (shape ``(m, d)``) on ``S``."""
    ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
    return np.abs(expit(S.x @ ws.T) - S.y[:, None]).mean(axis=0)


def population_risk_mc(sampler, w, m, seed):
    """Monte Carlo population risk.

    Args:
        sampler: object with ``sample(m, rng) -> (x, y)``; a ``SyntheticTask``.
        w: hypothesis.
        m: number of fresh draws.
        seed: integer seed for the draws.

    Returns:
        ``(estimate, standard_error)``.
    """
    if m < 1:
        raise ConfigError("m must be >= 1")
    x, y = sampler.sample(int(m), np.random.default_rng(seed))
    vals = _losses(x, y, np.asarray(w, dtype=np.float64))
    se = float(vals.std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return float(vals.mean()), se


def gen_error(S, w, pop_risk, spec=None):
    """Population risk minus empirical risk."""
    if not 0.0 <= pop_risk <= 1.0:
        raise ConfigError("pop_risk must lie in [0, 1]")
    return pop_risk - empirical_risk(S, w, spec)


# -- binary formats ---------------------------------------------------------

def _record_dtype(d):
    return np.dtype([("x", "<f8", (d,)), ("y", "u1")])


def dataset_to_bytes(S):
    head = DATASET_MAGIC + struct.pack("<III", FORMAT_VERSION, S.n, S.d)
    rec = np.empty(S.n, dtype=_record_dtype(S.d))
    rec["x"] = S.x
    rec["y"] = S.y
    return head + rec.tobytes()


def dataset_from_bytes(buf):
    if len(buf) < 16 or buf[:4] != DATASET_MAGIC:
        raise ConfigError("not an RCDS dataset")
    version, n, d = struct.unpack_from("<III", buf, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset version {version}")
    dt = _record_dtype(d)
    if len(buf) != 16 + n * dt.itemsize:
        raise ConfigError("truncated or oversized dataset file")
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=16)
    return Dataset(rec["x"].copy(), rec["y"].copy())


def model_to_bytes(w):
    w = as_hypothesis(w)
    return MODEL_MAGIC + struct.pack("<II", FORMAT_VERSION, w.shape[0]) + w.astype("<f8").tobytes()


def model_from_bytes(buf):
    if len(buf) < 12 or buf[:4] != MODEL_MAGIC:
        raise ConfigError("not an RCMW model")
    version, d = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported model version {version}")
    if len(buf) != 12 + 8 * d:
        raise ConfigError("truncated or oversized model file")
    return np.frombuffer(buf, dtype="<f8", count=d, offset=12).astype(np.float64)


def save_dataset(path, S):
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(S))


def load_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


def save_model(path, w):
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(w))


def load_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
