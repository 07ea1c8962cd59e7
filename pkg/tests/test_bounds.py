import math

import numpy as np
import pytest
from scipy import stats

from mincomm.bounds import (BoundConfig, BoundReport, EncodingStats, appendix_claim_check, b_w,
                            calibrate_vq_radius, default_tau_grid, emp_risk_bound_rhs,
                            expectation_bound_terms, gen_bound_decoded_rhs,
                            gen_bound_expectation_rhs, gen_bound_oneshot_rhs, tau_eps)
from mincomm.codebook import Codebook, Prior
from mincomm.encoders import delta_u, quantize_residual
from mincomm.errors import CapExceededError, ConfigError
from mincomm.hypothesis import Dataset, empirical_risk
from mincomm.quantkernel import QuantKernel

K1 = QuantKernel(1.0)


def _dataset(d, n=20, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.uniform(-1, 1, (n, d)), rng.integers(0, 2, n))


def test_b_w_examples():
    q = Prior.standard(3)
    assert b_w(q.mean, K1, q, 4.0) == pytest.approx(math.exp(-1))
    assert b_w(q.mean, K1, q, 8.0) == pytest.approx(math.exp(-2))
    # d=1, w=1: log ratio = X - 1/2 with X ~ N(1, 1); tail P(X > 2) at t = 2
    oracle = math.exp(-0.5) + 2 * math.sqrt(stats.norm.sf(1.0))
    assert b_w([1.0], K1, Prior.standard(1), 2.0) == pytest.approx(oracle, rel=1e-12)
    assert b_w([1.0], K1, Prior.standard(1), 2.0) == pytest.approx(1.4031617, abs=1e-7)


def test_b_w_mc_agrees_with_exact():
    q, k = Prior.standard(4), QuantKernel(0.5)
    w = np.array([1.0, 0.5, 0.0, -1.0])
    exact = b_w(w, k, q, 2.0)
    mc = b_w(w, k, q, 2.0, m=200_000, seed=1, semi_analytic=False)
    assert mc == pytest.approx(exact, abs=0.02)
    with pytest.raises(ConfigError):
        b_w(w, k, q, 0.0)


def test_emp_risk_rhs_golden_no_precision():
    q = Prior.standard(4)
    S = _dataset(4)
    res = emp_risk_bound_rhs(S, q.mean, K1, q, 8.0, EncodingStats(0.0))
    # b = e^-2, so the gap is L * 2 sqrt(4 b) / (1 - sqrt b) = 2 / (e - 1)
    assert res.b_w == pytest.approx(math.exp(-2))
    assert res.rhs == pytest.approx(0.5 + 2 / (math.e - 1), rel=1e-12)
    assert res.rhs == pytest.approx(1.6639534, abs=1e-7)
    rhs, floor = res
    assert floor == pytest.approx(1 - 2 * math.exp(-1))


def test_emp_risk_rhs_vacuous():
    q = Prior.standard(2)
    res = emp_risk_bound_rhs(_dataset(2), [0.1, 0.2], K1, q, 4.0, EncodingStats(), b=1.2)
    assert res.vacuous and res.rhs == math.inf


def test_emp_risk_rhs_full_precision_holds():
    q, k = Prior.standard(3), QuantKernel(0.3)
    cb = Codebook.from_seed(3, q)
    S = _dataset(3)
    w = np.array([0.5, -0.5, 0.2])
    gain = np.mean([delta_u(w, j, quantize_residual(w, cb[j], "full"), cb) for j in range(1, 65)])
    res = emp_risk_bound_rhs(S, w, k, q, 8.0, EncodingStats(gain, 64))
    if not res.vacuous and res.rhs >= empirical_risk(S, w):
        assert empirical_risk(S, w) <= res.rhs


def test_emp_risk_rhs_decreases_with_precision():
    q, k = Prior.standard(4), QuantKernel(0.5)
    S = _dataset(4)
    rng = np.random.default_rng(4)
    for i in range(1000):
        cb = Codebook.from_seed(i, q)
        w = rng.standard_normal(4)
        j = int(rng.integers(1, 50))
        rhs = [emp_risk_bound_rhs(S, w, k, q, 8.0, delta_u(w, j, quantize_residual(w, cb[j], m), cb),
                                  b=0.1).rhs for m in ("none", "q8", "full")]
        assert rhs[0] >= rhs[1] - 1e-12 and rhs[1] >= rhs[2] - 1e-12


def test_expectation_rhs_examples():
    q = Prior.standard(2)
    S = _dataset(2)
    val = gen_bound_expectation_rhs(S, [(q.mean, 0.0)], K1, q, 1.0, 50, 0.05)
    assert val == pytest.approx(math.sqrt((1 + math.log(10 / 0.05)) / 99), rel=1e-12)
    assert val == pytest.approx(0.2522287996, abs=1e-10)
    floor = gen_bound_expectation_rhs(S, [(q.mean, 0.0)], K1, q, 1e-300, 50, 1 - 1e-15)
    assert floor == pytest.approx(math.sqrt(math.log(10) / 99), rel=1e-9)
    c_s, t_s, eps_s = expectation_bound_terms([(q.mean, 0.0), (q.mean, 0.0)], K1, q, 10.0, 50, 0.05)
    assert (c_s, t_s, eps_s) == (0.0, 4.0, 0.0)


def test_expectation_terms_plug_in():
    q, k = Prior.standard(4), QuantKernel(0.25)
    models = [(np.ones(4), 0.1), (np.zeros(4), 0.3)]
    _, _, eps_s = expectation_bound_terms(models, k, q, 4.0, 100, 0.05, lipschitz=0.5)
    assert eps_s == pytest.approx(2 * 0.2 + 8 * math.sqrt(0.5 * 2 * 0.5 * 0.2))


def test_decoded_rhs_examples():
    q = Prior.standard(2)
    w = np.array([1.0, 0.0])
    val = gen_bound_decoded_rhs(w, K1, q, 1.0, 100, 0.1)
    assert val == pytest.approx(math.sqrt((0.5 + 1 + math.log(math.sqrt(200) / 0.1)) / 199), rel=1e-12)
    assert val == pytest.approx(0.1800578324, abs=1e-10)
    assert gen_bound_decoded_rhs(w, K1, q, 2.0, 100, 0.1) > val
    assert gen_bound_decoded_rhs(w, K1, q, 1.0, 100, 0.1, "full", b=0.0) == pytest.approx(val)
    assert gen_bound_decoded_rhs(w, K1, q, 1.0, 100, 0.1, "q8") > val
    capped = gen_bound_decoded_rhs(w, K1, q, 1.0, 100, 0.1, "q8", mean_payload_norm=0.0)
    assert capped == pytest.approx(val)


def test_oneshot_rhs():
    assert gen_bound_oneshot_rhs(1, 100, 1.0, 0.5, 0.3) == pytest.approx(0.3)
    val = gen_bound_oneshot_rhs(55, 100, 0.05, 1.0, 0.1)
    assert val == pytest.approx(math.sqrt((math.log(55) + math.log(20)) / 200) + 0.2)
    assert val == pytest.approx(0.3871238, abs=1e-7)
    base = gen_bound_oneshot_rhs(64, 100, 0.05, 0.5, 0.5)
    assert gen_bound_oneshot_rhs(128, 100, 0.05, 0.5, 0.5) > base
    assert gen_bound_oneshot_rhs(64, 100, 0.05, 0.5, 0.6) > base
    assert gen_bound_oneshot_rhs(64, 200, 0.05, 0.5, 0.5) < base
    with pytest.raises(ConfigError):
        gen_bound_oneshot_rhs(0, 100, 0.05, 0.5, 0.5)


def test_tau_grid_shape():
    grid = default_tau_grid(8)
    assert {(n1, n2) for _, n1, n2 in grid} == {(8, 1), (4, 2), (2, 4), (1, 8)}
    assert all(n1 * n2 <= 8 for _, n1, n2 in grid)


def test_tau_single_codeword():
    q, k = Prior.standard(2), QuantKernel(0.2)
    ws = np.zeros((20, 2))
    res = tau_eps(k, q, 1, 0.5, ws, m=4000, seed=0)
    assert res.argmin is None or res.argmin[1:] == (1, 1)
    assert 0.0 <= res.tau <= 1.0


def test_tau_large_radius_small():
    q, k = Prior.standard(2), QuantKernel(0.1)
    ws = np.random.default_rng(0).standard_normal((50, 2)) * 0.3
    res = tau_eps(k, q, 4096, 100.0, ws, m=2000, seed=1)
    assert res.feasible and res.terms[0] == 0.0 and res.tau < 0.05


def test_tau_tiny_radius_vacuous():
    q, k = Prior.standard(2), QuantKernel(0.5)
    ws = np.zeros((10, 2))
    res = tau_eps(k, q, 4096, 1e-9, ws, m=1000, seed=2)
    assert res.tau == 1.0


def test_tau_monotone_in_eps_and_deterministic():
    q, k = Prior.standard(3), QuantKernel(0.2)
    ws = np.random.default_rng(3).standard_normal((40, 3)) * 0.5
    taus = [tau_eps(k, q, 2048, e, ws, m=1000, seed=4).tau for e in (0.5, 1.0, 1.5, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(taus, taus[1:]))
    assert tau_eps(k, q, 2048, 1.0, ws, m=1000, seed=4) == tau_eps(k, q, 2048, 1.0, ws, m=1000, seed=4)


def test_tau_linear_scale_and_errors():
    q, k = Prior.standard(2), QuantKernel(0.2)
    ws = np.zeros((5, 2))
    assert 0 <= tau_eps(k, q, 256, 1.0, ws, m=500, ratio_scale="linear").tau <= 1
    with pytest.raises(ConfigError):
        tau_eps(k, q, 256, 0.0, ws)
    with pytest.raises(ConfigError):
        tau_eps(k, q, 256, 1.0, ws, search_grid=[])
    with pytest.raises(ConfigError):
        tau_eps(k, q, 256, 1.0, np.zeros((5, 3)))


def test_calibration_returns_smallest_radius():
    q = Prior.standard(2)
    ws = np.random.default_rng(5).standard_normal((30, 2)) * 0.3
    cal = calibrate_vq_radius(q, 1024, ws, target=0.2, m=500)
    assert cal is not None and cal.tau.tau <= 0.2
    if cal.epsilon > 0.25:
        for var in (0.05, 0.1, 0.2, 0.3, 0.5):
            assert tau_eps(QuantKernel(var), q, 1024, cal.epsilon - 0.25, ws, m=500).tau > 0.2


def test_appendix_prior_equals_kernel():
    q = Prior.standard(2)
    diag, rep = appendix_claim_check(q.mean, K1, q, 4.0, trials=1000, seed=0)
    assert not rep.violated
    assert diag.b_w == pytest.approx(math.exp(-1))
    assert diag.mean_abs_gap < diag.sigma0 * diag.b_w / 3
    assert diag.sigma0 ** 2 >= diag.I_w ** 2
    assert diag.weights_dev_freq == 0.0


def test_appendix_clipped_terms_vanish_at_large_t():
    q = Prior.standard(2)
    diag, _ = appendix_claim_check([1.0, 0.0], K1, q, 60.0, N=2000, trials=50, probes=1_000_000)
    assert diag.indicator_fired == 0
    assert diag.clipped_gap["clip_gap"] == 0.0


def test_appendix_cap():
    q = Prior.standard(2)
    with pytest.raises(CapExceededError):
        appendix_claim_check([5.0, 5.0], K1, q, 8.0, cap=1 << 10)


def test_bound_report_rules():
    ok = BoundReport.for_rate("x", 5, 100, 0.05)
    assert not ok.violated and ok.confidence[0] <= 0.05 <= ok.confidence[1]
    assert BoundReport.for_rate("x", 30, 100, 0.05).violated
    assert not BoundReport.for_rate("x", 30, 100, 0.05, vacuous=True).violated
    m = BoundReport.for_mean("m", [1.0, 1.2, 0.8], 1.0)
    assert not m.violated and set(m.row("h")) == {"name", "rhs", "lhs", "ci_low", "ci_high",
                                                  "violated", "vacuous", "config_hash"}


def test_bound_config_validation():
    BoundConfig()
    for bad in ({"t": 0}, {"delta": 1.0}, {"tail_measure": "x"}, {"ratio_scale": "x"}):
        with pytest.raises(ConfigError):
            BoundConfig(**bad)
