"""Numerical right-hand sides of the risk, generalization and covering bounds.

Every function here is deterministic given its inputs and seeds.  Rates are
compared with an allowance of three binomial standard errors; bounds whose
failure mass is at least one are flagged vacuous instead of being checked.
"""
from dataclasses import dataclass, asdict, field
import math

import numpy as np

from . import _kernels
from .codebook import derive_seed
from .encoders import DEFAULT_ORC_CAP, orc_candidate_count, parse_precision
from .errors import ConfigError
from .hypothesis import as_hypothesis, empirical_risk
from .quantkernel import (QuantKernel, expected_distance, kl_to_prior, log_ratio_exceedance,
                          log_ratio_tail, second_moment)
from .trainer import FEATURE_BOUND

DEFAULT_LIPSCHITZ = FEATURE_BOUND / 4.0
DEFAULT_GAMMAS = (0.5, 1.0, 2.0, 4.0)
CONDITION_FREQUENCY = 1.0 - 1e-3


@dataclass(frozen=True)
class BoundConfig:
    t: float = 4.0
    delta: float = 0.05
    n: int = 200
    lipschitz: float = DEFAULT_LIPSCHITZ
    mc_samples: int = 10_000
    epsilon_vq: float = 1.0
    N_vq: int = 4096
    tail_measure: str = "kernel"
    ratio_scale: str = "log"

    def __post_init__(self):
        if not (self.t > 0 and 0 < self.delta < 1 and self.n >= 1 and self.lipschitz > 0
                and self.mc_samples >= 1 and self.epsilon_vq > 0 and self.N_vq >= 1):
            raise ConfigError(f"invalid bound config {self}")
        if self.tail_measure not in ("kernel", "prior"):
            raise ConfigError("tail_measure must be 'kernel' or 'prior'")
        if self.ratio_scale not in ("log", "linear"):
            raise ConfigError("ratio_scale must be 'log' or 'linear'")

    def to_json(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    name: str
    rhs_value: float
    lhs_empirical: float
    ci_low: float
    ci_high: float
    violated: bool
    vacuous: bool = False

    @property
    def confidence(self):
        return self.ci_low, self.ci_high

    @classmethod
    def for_rate(cls, name, hits, trials, allowed, vacuous=False):
        """Violation frequency ``hits / trials`` against an allowed rate, with a 3-SE allowance."""
        rate = hits / trials if trials else 0.0
        se = math.sqrt(rate * (1.0 - rate) / trials) if trials else 0.0
        return cls(name, float(allowed), rate, max(0.0, rate - 3 * se), min(1.0, rate + 3 * se),
                   (not vacuous) and rate > allowed + 3 * se, vacuous)

    @classmethod
    def for_mean(cls, name, values, rhs, vacuous=False):
        """Sample mean of ``values`` against ``rhs`` with a 3-SE allowance."""
        values = np.asarray(values, dtype=np.float64)
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        return cls(name, float(rhs), mean, mean - 3 * se, mean + 3 * se,
                   (not vacuous) and mean > rhs + 3 * se, vacuous)

    def row(self, config_hash=""):
        return {"name": self.name, "rhs": self.rhs_value, "lhs": self.lhs_empirical,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "violated": int(self.violated),
                "vacuous": int(self.vacuous), "config_hash": config_hash}


def _tail_threshold(w, k, q, t):
    return kl_to_prior(w, k, q) + t / 2.0


def b_w(w, k, q, t, m=10_000, seed=0, under="kernel", semi_analytic=True):
    """``exp(-t/4) + 2 sqrt(P(log rho > KL + t/2))``.

    The exact tail is used by default; ``semi_analytic=False`` substitutes a
    Monte Carlo estimate from ``m`` draws.
    """
    if not t > 0:
        raise ConfigError("t must be positive")
    if semi_analytic:
        tail = log_ratio_exceedance(w, k, q, _tail_threshold(w, k, q, t), under)
    else:
        tail = log_ratio_tail(w, k, q, t, m, seed, under).estimate
    return math.exp(-t / 4.0) + 2.0 * math.sqrt(max(tail, 0.0))


@dataclass(frozen=True)
class EncodingStats:
    """Encoder-side averages over draws of K for one ``(S, w, codebook)``."""

    mean_delta_u: float = 0.0
    draws: int = 0


@dataclass(frozen=True)
class RiskBound:
    rhs: float
    prob_floor: float
    b_w: float
    vacuous: bool

    def __iter__(self):
        return iter((self.rhs, self.prob_floor))


def emp_risk_bound_rhs(S, w, k, q, t, encoding_stats, lipschitz=DEFAULT_LIPSCHITZ, b=None):
    """Upper bound on ``E_K[emp_risk(S, decoded)]`` holding with probability ``1 - 2 sqrt(b)``.

    ``rhs = emp_risk(S, w) + L (2 sqrt(d s2 b) - E_K[Delta_U]) / (1 - sqrt(b))``.
    ``b`` defaults to :func:`b_w`.  When ``b >= 1`` the result is flagged
    vacuous and ``rhs`` is ``inf``.
    """
    w = as_hypothesis(w, q.d)
    b = b_w(w, k, q, t) if b is None else float(b)
    root = math.sqrt(b)
    if b >= 1.0:
        return RiskBound(math.inf, 1.0 - 2.0 * root, b, True)
    mean_delta = getattr(encoding_stats, "mean_delta_u", encoding_stats)
    gap = 2.0 * lipschitz * math.sqrt(second_moment(k, q.d) * b) - lipschitz * float(mean_delta)
    return RiskBound(empirical_risk(S, w) + gap / (1.0 - root), 1.0 - 2.0 * root, b, False)


def _concentration_term(n, delta):
    return math.log(math.sqrt(2.0 * n) / delta)


def expectation_bound_terms(models, k, q, t, n, delta, lipschitz=DEFAULT_LIPSCHITZ):
    """``(C_S, t_S, eps_S)`` for a sample of models trained on one dataset.

    ``models`` is a list of ``(w, b)`` pairs; a ``b`` of ``None`` is computed.
    """
    if not models:
        raise ConfigError("need at least one model")
    kls, bs = [], []
    for w, b in models:
        kls.append(kl_to_prior(w, k, q))
        bs.append(b_w(w, k, q, t) if b is None else float(b))
    c_s = float(np.mean(kls))
    t_s = min(t, math.log(c_s + 1.0) + 4.0)
    mean_b = float(np.mean(bs))
    spread = math.sqrt(second_moment(k, q.d))
    eps_s = 2.0 * mean_b + 8.0 * math.sqrt(lipschitz * spread * mean_b)
    return c_s, t_s, eps_s


def gen_bound_expectation_rhs(S, models, k, q, t, n, delta, lipschitz=DEFAULT_LIPSCHITZ):
    """Bound on the model-averaged generalization error for one dataset, holding w.p. ``1 - delta``."""
    if n < 1 or not 0 < delta < 1:
        raise ConfigError("need n >= 1 and delta in (0, 1)")
    c_s, t_s, eps_s = expectation_bound_terms(models, k, q, t, n, delta, lipschitz)
    return math.sqrt((c_s + t_s + _concentration_term(n, delta)) / (2 * n - 1) + eps_s)


def decoded_epsilon(w, k, q, t, precision_mode, lipschitz=DEFAULT_LIPSCHITZ, b=None,
                    mean_payload_norm=None):
    """Distortion term for one model: zero without precision, else the single-model plug-in.

    With ``mean_payload_norm`` (``E_K |W_eps|``) the plug-in is capped by
    ``4 L E_K |W_eps|``.
    """
    kind, _ = parse_precision(precision_mode)
    if kind == "none":
        return 0.0
    b = b_w(w, k, q, t) if b is None else float(b)
    eps = 2.0 * b + 8.0 * math.sqrt(lipschitz * math.sqrt(second_moment(k, q.d)) * b)
    if mean_payload_norm is not None:
        eps = min(eps, 4.0 * lipschitz * float(mean_payload_norm))
    return eps


def gen_bound_decoded_rhs(w, k, q, t, n, delta, precision_mode="none", lipschitz=DEFAULT_LIPSCHITZ,
                          b=None, mean_payload_norm=None):
    """Per-model bound on ``E_K[gen(S, decoded)]`` holding w.p. ``1 - delta``."""
    if n < 1 or not 0 < delta < 1:
        raise ConfigError("need n >= 1 and delta in (0, 1)")
    kl = kl_to_prior(w, k, q)
    eps = decoded_epsilon(w, k, q, t, precision_mode, lipschitz, b, mean_payload_norm)
    return math.sqrt((kl + t + _concentration_term(n, delta)) / (2 * n - 1) + eps)


def gen_bound_oneshot_rhs(N, n, delta, lipschitz, eps):
    """``sqrt((ln N + ln(1/delta)) / (2n)) + 2 L eps`` for the nearest-codeword encoder."""
    if N < 1 or n < 1 or not 0 < delta <= 1:
        raise ConfigError("need N >= 1, n >= 1 and delta in (0, 1]")
    return math.sqrt((math.log(N) + math.log(1.0 / delta)) / (2.0 * n)) + 2.0 * lipschitz * eps


# -- covering failure probability for the nearest-codeword encoder ----------

@dataclass(frozen=True)
class TauResult:
    tau: float
    argmin: tuple | None
    terms: tuple | None
    feasible: bool
    evaluated: int
    admissible: int
    note: str = ""


def default_tau_grid(N, gammas=DEFAULT_GAMMAS):
    """``(gamma, N1, N2)`` with ``N2`` a power of two and ``N1 = N // N2``."""
    grid = []
    n2 = 1
    while n2 <= N:
        for g in gammas:
            grid.append((float(g), N // n2, n2))
        n2 *= 2
    return grid


def tau_eps(k, q, N, eps, w_samples, search_grid=None, m=2000, seed=0, ratio_scale="log"):
    """Grid-search upper bound on the covering failure probability.

    For each model in ``w_samples`` (draws of the trained model), ``m`` kernel
    draws give per-model frequencies of leaving the ``eps`` ball and of
    ``log rho > log N1 - gamma``; the same draws serve every grid point.
    Conditions on each grid point are required for at least a ``1 - 1e-3``
    fraction of the sampled models.  Returns ``tau = 1`` when nothing is
    admissible.
    """
    if N < 1 or not eps > 0:
        raise ConfigError("need N >= 1 and eps > 0")
    if ratio_scale not in ("log", "linear"):
        raise ConfigError("ratio_scale must be 'log' or 'linear'")
    grid = default_tau_grid(N) if search_grid is None else list(search_grid)
    if not grid:
        raise ConfigError("empty search grid")
    ws = np.atleast_2d(np.asarray(w_samples, dtype=np.float64))
    if ws.shape[1] != q.d:
        raise ConfigError("w_samples dimension does not match the prior")
    rng = np.random.default_rng(seed)
    out_f = np.empty((ws.shape[0], m), dtype=bool)
    lrs = np.empty((ws.shape[0], m))
    for i, w in enumerate(ws):
        draws = w + k.sd * rng.standard_normal((m, q.d))
        out_f[i] = np.linalg.norm(draws - w, axis=1) > eps
        lrs[i] = _kernels.log_ratios_of_np(draws, w, q.mean, q.sd, k.sd)
    lam = out_f.mean(axis=1)

    best = None
    admissible = 0
    for gamma, n1, n2 in grid:
        if n1 < 1 or n2 < 1 or n1 * n2 > N:
            continue
        if ratio_scale == "log":
            thr = math.log(n1) - gamma
        else:
            # the ratio itself compared with log(N1) - gamma
            level = math.log(n1) - gamma
            thr = math.log(level) if level > 0 else -math.inf
        out_i = lrs > thr
        # (b): lam**N2 + N2 (1 - lam) >= 1, with lam = 1 admissible
        cond_b = lam ** n2 + n2 * (1.0 - lam) >= 1.0 - 1e-12
        # (c): P(outside F or outside I | W) + exp(-exp(-gamma)) <= 1
        cond_c = (out_f | out_i).mean(axis=1) + math.exp(-math.exp(-gamma)) <= 1.0
        if cond_b.mean() < CONDITION_FREQUENCY or cond_c.mean() < CONDITION_FREQUENCY:
            continue
        admissible += 1
        terms = (float(np.mean(lam ** n2)), n2 * math.exp(-math.exp(gamma)), n2 * float(out_i.mean()))
        total = sum(terms)
        if best is None or total < best[0]:
            best = (total, (gamma, n1, n2), terms)
    if best is None:
        return TauResult(1.0, None, None, False, len(grid), 0, "no admissible grid point")
    return TauResult(min(1.0, best[0]), best[1], best[2], True, len(grid), admissible,
                     "second term uses exp(-exp(gamma)); condition (c) uses exp(-exp(-gamma))")


@dataclass(frozen=True)
class RadiusCalibration:
    epsilon: float
    kernel: QuantKernel
    tau: TauResult


def calibrate_vq_radius(q, N, w_samples, target=0.2, eps_grid=None, kernel_variances=None,
                        m=2000, seed=0, ratio_scale="log"):
    """Smallest ``eps`` on the grid for which some kernel gives ``tau <= target``.

    The kernel is part of the infimum defining the covering probability, so
    it is searched over as well.  Returns ``None`` if no grid point qualifies.
    """
    eps_grid = np.round(np.arange(0.25, 6.01, 0.25), 10) if eps_grid is None else eps_grid
    kernel_variances = (0.05, 0.1, 0.2, 0.3, 0.5) if kernel_variances is None else kernel_variances
    for eps in sorted(eps_grid):
        best = None
        for var in kernel_variances:
            res = tau_eps(QuantKernel(var), q, N, float(eps), w_samples, m=m, seed=seed,
                          ratio_scale=ratio_scale)
            if best is None or res.tau < best[1].tau:
                best = (QuantKernel(var), res)
        if best[1].tau <= target:
            return RadiusCalibration(float(eps), best[0], best[1])
    return None


# -- concentration claim behind the expected-distance argument --------------

@dataclass(frozen=True, eq=False)
class AppendixDiagnostics:
    I_w: float
    I_N: np.ndarray
    sigma0: float
    a_threshold: float
    log_a: float
    clipped_gap: dict
    B_term: float
    B_bound: float
    N: int
    b_w: float
    tail_mass: float
    weights_dev_freq: float
    weights_dev_bound: float
    indicator_fired: int
    probes: int
    mean_abs_gap: float = field(default=0.0)


def appendix_claim_check(w, k, q, t, N=None, trials=1000, seed=0, cap=DEFAULT_ORC_CAP, probes=100_000):
    """Check ``E_U |I_N(U, w) - I(w)| <= sigma0 * b_w`` over ``trials`` independent codebooks.

    ``I_N`` is the density-ratio weighted mean distance of ``N`` codewords to
    ``w`` and ``I(w)`` the exact mean distance under the kernel.  Also
    reports the three terms of the clipped-norm decomposition at threshold
    ``a = exp(KL + t/2)`` and the frequency with which the mean density
    ratio strays from 1 by more than ``sqrt(b_w)``.
    """
    w = as_hypothesis(w, q.d)
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    kl = kl_to_prior(w, k, q)
    if N is None:
        N = orc_candidate_count(kl, t, cap)
    elif N > cap:
        orc_candidate_count(math.log(N), 0.0, cap)
    log_a = kl + t / 2.0
    seeds = np.array([derive_seed(seed, "appendix-codebook", i) for i in range(trials)], dtype=np.uint64)
    i_n, rho_mean, i_clip = _kernels.appendix_sums(seeds, int(N), w, q.mean, q.sd, k.sd, log_a)

    i_w = expected_distance(k, q.d)
    sigma0 = math.sqrt(second_moment(k, q.d))
    b = b_w(w, k, q, t)
    gaps = np.abs(i_n - i_w)
    report = BoundReport.for_mean("appendix_claim", gaps, sigma0 * b)

    rng = np.random.default_rng(derive_seed(seed, "appendix-probes"))
    draws = w + k.sd * rng.standard_normal((int(probes), q.d))
    dist = np.linalg.norm(draws - w, axis=1)
    lr = _kernels.log_ratios_of_np(draws, w, q.mean, q.sd, k.sd)
    fired = lr > log_a
    clipped_mean = float(np.where(fired, 0.0, dist).mean())
    tail = log_ratio_exceedance(w, k, q, log_a, "kernel")
    eps_w = math.sqrt(b)
    diag = AppendixDiagnostics(
        I_w=i_w, I_N=i_n, sigma0=sigma0, a_threshold=math.exp(min(log_a, 700.0)), log_a=log_a,
        clipped_gap={"clip_gap": float(np.abs(i_n - i_clip).mean()),
                     "clip_bias": abs(clipped_mean - i_w),
                     "clip_gap_bound": sigma0 * math.sqrt(tail),
                     "clip_bias_bound": sigma0 * math.sqrt(tail)},
        B_term=float(np.abs(i_clip - clipped_mean).mean()),
        B_bound=math.sqrt(math.exp(min(log_a, 700.0)) * sigma0 ** 2 / N),
        N=int(N), b_w=b, tail_mass=tail,
        weights_dev_freq=float(np.mean(np.abs(rho_mean - 1.0) > eps_w)),
        weights_dev_bound=b / eps_w,
        indicator_fired=int(fired.sum()), probes=int(probes),
        mean_abs_gap=float(gaps.mean()))
    return diag, report
