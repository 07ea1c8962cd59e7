"""Shared Gaussian prior, common randomness and the lazily indexed codebook.

Codeword ``j`` (1-based) is ``mean + sd * g`` where ``g`` is a standard
normal vector hashed from ``(master_seed, j)``.  Nothing is sequential, so
any index can be derived without touching the ones before it and two
parties holding the same seed and prior get identical vectors.
"""
from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from . import _kernels
from .errors import ConfigError

U64_MASK = (1 << 64) - 1


def derive_seed(master_seed, *tags):
    """Stable 64-bit seed from a master seed and any number of tags."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed) & U64_MASK).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True, eq=False)
class Prior:
    """Isotropic Gaussian ``N(mean, variance * I)``.

    ``variance == 0`` is accepted so degenerate codebooks can be built in
    tests; anything needing a density rejects it.
    """

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1 or mean.shape[0] == 0 or not np.all(np.isfinite(mean)):
            raise ConfigError("prior mean must be a finite non-empty vector")
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ConfigError("prior variance must be finite and >= 0")
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))

    @classmethod
    def standard(cls, d, variance=1.0):
        return cls(np.zeros(d), variance)

    @property
    def d(self):
        return self.mean.shape[0]

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def to_json(self):
        return {"mean": self.mean.tolist(), "variance": self.variance}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["mean"], dtype=np.float64), float(obj["variance"]))


@dataclass(frozen=True)
class SharedRandomness:
    master_seed: int

    def __post_init__(self):
        s = int(self.master_seed)
        if not 0 <= s <= U64_MASK:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", s)


@dataclass(frozen=True, eq=False)
class Codebook:
    """Codebook handle; ``capacity=None`` means unbounded (ORC)."""

    prior: Prior
    randomness: SharedRandomness
    capacity: int | None = field(default=None)

    @classmethod
    def from_seed(cls, seed, prior, capacity=None):
        return cls(prior, SharedRandomness(seed), capacity)

    @property
    def seed(self):
        return self.randomness.master_seed

    @property
    def d(self):
        return self.prior.d

    def __getitem__(self, j):
        return derive_codeword(self.randomness, j, self.prior)

    def block(self, start, count):
        """Codewords ``start .. start+count-1`` as a ``(count, d)`` array."""
        if start < 1:
            raise ConfigError("codeword indices start at 1")
        if self.capacity is not None and start + count - 1 > self.capacity:
            raise ConfigError(f"index {start + count - 1} beyond capacity {self.capacity}")
        return _kernels.codewords(np.uint64(self.seed), int(start), int(count), self.prior.mean, self.prior.sd)


def derive_codeword(rand, j, q):
    """Codeword ``j >= 1`` for shared randomness ``rand`` and prior ``q``."""
    if j < 1:
        raise ConfigError("codeword index must be >= 1")
    return _kernels.codewords(np.uint64(rand.master_seed), int(j), 1, q.mean, q.sd)[0]


def materialize(cb, n=None):
    """List of codewords ``1..n`` (``n`` defaults to the capacity)."""
    n = cb.capacity if n is None else n
    if n is None or n < 1:
        raise ConfigError("materialize needs N >= 1")
    return list(cb.block(1, n))

