"""The client's quantization kernel ``N(w, variance * I)``.

Provides exact log density ratios against the prior, the KL divergence, the
supremum of the log ratio (when finite) and tail probabilities of the log
ratio, both by Monte Carlo and through the one-dimensional reduction: the
log ratio is ``k0 + k2 |Z|^2 + k1 . Z`` for a standard normal ``Z``, i.e. an
affine image of a noncentral chi-square variate (or of a Gaussian when
``k2 == 0``).
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import _kernels
from .errors import ConfigError, DegenerateKernelError
from .hypothesis import as_hypothesis

MIN_TAIL_SAMPLES = 1000


@dataclass(frozen=True)
class QuantKernel:
    variance: float

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ConfigError("kernel variance must be finite and >= 0")
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def sd(self):
        return math.sqrt(self.variance)

    def to_json(self):
        return {"variance": self.variance}

    @classmethod
    def from_json(cls, obj):
        return cls(float(obj["variance"]))


def _require_densities(k, q):
    if k.variance == 0 or q.variance == 0:
        raise DegenerateKernelError("log density ratio needs positive kernel and prior variances")


def log_density_ratio(w, w_hat, k, q):
    """``log dP(.|w)/dQ`` at ``w_hat``; rows of a 2-D ``w_hat`` give a vector."""
    _require_densities(k, q)
    w = as_hypothesis(w, q.d)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    if w_hat.shape[-1] != q.d:
        raise ConfigError("dimension mismatch between w_hat and prior")
    out = _kernels.log_ratios_of_np(np.atleast_2d(w_hat), w, q.mean, q.sd, k.sd)
    return float(out[0]) if w_hat.ndim == 1 else out


def kl_to_prior(w, k, q):
    """Closed-form ``KL(N(w, s2 I) || N(mu, v I))`` in nats."""
    _require_densities(k, q)
    w = as_hypothesis(w, q.d)
    r = k.variance / q.variance
    delta = w - q.mean
    kl = 0.5 * q.d * (r - 1.0 - math.log(r)) + float(delta @ delta) / (2.0 * q.variance)
    return max(kl, 0.0)


def second_moment(k, d):
    """``E |W - What|^2`` under the kernel."""
    return d * k.variance


def expected_distance(k, d):
    """``E |W - What|``: mean of a scaled chi distribution."""
    return k.sd * math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0))


def log_ratio_sup(w, k, q):
    """Supremum of the log ratio over all ``w_hat``; ``inf`` unless the kernel is narrower."""
    _require_densities(k, q)
    if k.variance >= q.variance:
        return math.inf
    delta = as_hypothesis(w, q.d) - q.mean
    sup = 0.5 * q.d * math.log(q.variance / k.variance) \
        + float(delta @ delta) / (2.0 * (q.variance - k.variance))
    # absorbs rounding in the kernels' evaluation of the ratio
    return sup + 1e-9 * (1.0 + abs(sup))


def sample_kernel(w, k, seed, size=None):
    """Draw from ``N(w, variance * I)``; ``size`` rows if given."""
    w = as_hypothesis(w)
    rng = np.random.default_rng(seed)
    shape = w.shape if size is None else (size, w.shape[0])
    return w + k.sd * rng.standard_normal(shape)


def _quadratic_form(w, k, q, under):
    """Coefficients ``(k0, k2, k1)`` of the log ratio as a function of ``Z``."""
    delta = as_hypothesis(w, q.d) - q.mean
    c0 = 0.5 * q.d * math.log(q.variance / k.variance)
    dd = float(delta @ delta)
    if under == "kernel":
        return (c0 + dd / (2 * q.variance), -0.5 + k.variance / (2 * q.variance),
                k.sd * delta / q.variance)
    if under == "prior":
        return (c0 - dd / (2 * k.variance), 0.5 - q.variance / (2 * k.variance),
                q.sd * delta / k.variance)
    raise ConfigError(f"unknown measure {under!r}; use 'kernel' or 'prior'")


def log_ratio_exceedance(w, k, q, threshold, under="kernel"):
    """Exact ``P(log rho(What) > threshold)`` for What from the kernel or the prior."""
    _require_densities(k, q)
    k0, k2, k1 = _quadratic_form(w, k, q, under)
    b2 = float(k1 @ k1)
    if abs(k2) < 1e-12:
        if b2 == 0.0:
            return 1.0 if k0 > threshold else 0.0
        return float(stats.norm.sf((threshold - k0) / math.sqrt(b2)))
    nc = b2 / (4.0 * k2 * k2)
    y = (threshold - k0 + b2 / (4.0 * k2)) / k2
    dist = stats.chi2(q.d) if nc == 0.0 else stats.ncx2(q.d, nc)
    return float(dist.sf(y) if k2 > 0 else dist.cdf(y))


@dataclass(frozen=True)
class TailEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    se: float
    m: int
    semi_analytic: float
    warning: str = ""


def log_ratio_tail(w, k, q, t, m, seed, under="kernel"):
    """Tail ``P(log rho > KL + t/2)``: Monte Carlo with a Wilson interval plus the exact value.

    The same ``seed`` gives the same draws for every ``t``, so estimates at
    different ``t`` share random numbers.
    """
    if not t > 0:
        raise ConfigError("t must be positive")
    _require_densities(k, q)
    w = as_hypothesis(w, q.d)
    threshold = kl_to_prior(w, k, q) + t / 2.0
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((int(m), q.d))
    draws = w + k.sd * z if under == "kernel" else q.mean + q.sd * z
    lr = _kernels.log_ratios_of_np(draws, w, q.mean, q.sd, k.sd)
    hits = int(np.count_nonzero(lr > threshold))
    p = hits / m
    ci = stats.binomtest(hits, int(m)).proportion_ci(0.95, method="wilson")
    warning = f"only {m} samples; at least {MIN_TAIL_SAMPLES} advised" if m < MIN_TAIL_SAMPLES else ""
    return TailEstimate(p, float(ci.low), float(ci.high), math.sqrt(p * (1 - p) / m), int(m),
                        log_ratio_exceedance(w, k, q, threshold, under), warning)
