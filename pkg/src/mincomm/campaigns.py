"""Monte Carlo campaigns that check each guarantee against its empirical counterpart."""
from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.special import expit

from . import _kernels
from .bounds import (BoundReport, EncodingStats, b_w, calibrate_vq_radius, emp_risk_bound_rhs,
                     gen_bound_expectation_rhs, gen_bound_oneshot_rhs, appendix_claim_check)
from .codebook import Codebook, Prior, derive_seed
from .encoders import (encode_mrc, encode_orc, encode_vq, orc_candidate_count, orc_select,
                       quantize_residual)
from .errors import ConfigError
from .harness import BUDGET_SLACK_NATS, CampaignSizes, ExperimentConfig, run_pipeline, summarize
from .hypothesis import empirical_risks
from .index_codec import IndexCode, comm_budget, encode_index
from .quantkernel import QuantKernel, kl_to_prior, log_density_ratio
from .trainer import make_synthetic_task, sgd_train

LN2 = math.log(2.0)


@dataclass
class CampaignResult:
    name: str
    reports: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return not any(r.violated for r in self.reports) and all(self.checks.values())


def _train(cfg, data_seed, train_seed, kl_weight=None):
    S, task = make_synthetic_task(cfg.task.d, cfg.task.n, cfg.task.noise, data_seed, cfg.task.signal)
    tc = replace(cfg.train, seed=train_seed)
    if kl_weight is not None:
        tc = replace(tc, kl_weight=kl_weight)
    return S, task, sgd_train(S, tc, cfg.prior, cfg.kernel)


def _pop_risks(task, ws, m, seed):
    """Population risks of the rows of ``ws`` on one shared set of fresh draws."""
    x, y = task.sample(m, np.random.default_rng(seed))
    return np.abs(expit(x @ np.atleast_2d(ws).T) - y[:, None]).mean(axis=0)


def _histogram_tv(a, b, buckets):
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, buckets + 1)
    pa, _ = np.histogram(a, edges)
    pb, _ = np.histogram(b, edges)
    return 0.5 * float(np.abs(pa / a.size - pb / b.size).sum())


def orc_mrc_equivalence(draws=100_000, d=4, t=4.0, offset=1.0, variance=1.0, buckets=32, seed=0):
    """Selected-codeword log-ratio histograms of ORC and MRC over fresh codebooks; TV must be < 0.02."""
    q = Prior.standard(d, variance)
    k = QuantKernel(variance)
    w = np.zeros(d)
    w[0] = offset
    n_w = orc_candidate_count(kl_to_prior(w, k, q), t)
    lr_orc = np.empty(draws)
    lr_mrc = np.empty(draws)
    for i in range(draws):
        cb = Codebook.from_seed(derive_seed(seed, "equiv-codebook", i), q)
        ko = encode_orc(w, cb, t, k, q, derive_seed(seed, "equiv-orc", i), precision=None).index
        km = encode_mrc(w, cb, n_w, k, q, derive_seed(seed, "equiv-mrc", i), precision=None).index
        lr = log_density_ratio(w, np.stack([cb[ko], cb[km]]), k, q)
        lr_orc[i], lr_mrc[i] = lr[0], lr[1]
    tv = _histogram_tv(lr_orc, lr_mrc, buckets)
    return CampaignResult("orc_mrc_equivalence", checks={"tv_below_0.02": tv < 0.02},
                          details={"tv": tv, "draws": draws, "N_w": n_w,
                                   "mean_lr_orc": float(lr_orc.mean()), "mean_lr_mrc": float(lr_mrc.mean())})


def decoded_risk_campaign(cfg, t, trials=None, draws=None, precision="none"):
    """Fixed ``(S, w)``; per codebook, ``E_K`` of the decoded empirical risk over encoder draws.

    The violation frequency across codebooks is compared with ``2 sqrt(b_w)``.
    """
    trials = cfg.campaign.risk_trials if trials is None else trials
    draws = cfg.campaign.encoder_draws if draws is None else draws
    ms = cfg.master_seed
    q, k, bc = cfg.prior, cfg.kernel, cfg.bounds
    S, _, w = _train(cfg, derive_seed(ms, "risk-data"), derive_seed(ms, "risk-train"))
    b = b_w(w, k, q, t, under=bc.tail_measure)
    n_w = orc_candidate_count(kl_to_prior(w, k, q), t)
    hits, lhs_all, rhs_all = 0, [], []
    bound = None
    for i in range(trials):
        cb = Codebook.from_seed(derive_seed(ms, "risk-codebook", i), q)
        lr = _kernels.log_ratios(np.uint64(cb.seed), 1, n_w, w, q.mean, q.sd, k.sd)
        top = float(lr.max())
        cws = cb.block(1, n_w)
        ks = [orc_select(lr, derive_seed(ms, "risk-encoder", i, j), top) for j in range(draws)]
        decoded, gains = [], []
        for kk in ks:
            cw = cws[kk - 1]
            dec = quantize_residual(w, cw, precision).apply(cw)
            decoded.append(dec)
            gains.append(max(0.0, float(np.linalg.norm(w - cw) - np.linalg.norm(w - dec))))
        lhs = float(empirical_risks(S, np.stack(decoded)).mean())
        bound = emp_risk_bound_rhs(S, w, k, q, t, EncodingStats(float(np.mean(gains)), draws),
                                   bc.lipschitz, b)
        hits += lhs > bound.rhs
        lhs_all.append(lhs)
        rhs_all.append(bound.rhs)
    allowed = min(1.0, 2.0 * math.sqrt(b))
    rep = BoundReport.for_rate(f"emp_risk_bound_t{t:g}", hits, trials, allowed, vacuous=bound.vacuous)
    return CampaignResult(rep.name, [rep], details={
        "t": t, "b_w": b, "N_w": n_w, "prob_floor": bound.prob_floor, "mean_lhs": float(np.mean(lhs_all)),
        "mean_rhs": float(np.mean(rhs_all)), "violations": hits, "trials": trials, "draws": draws})


def expected_gen_campaign(cfg, t_values=(8.0, 48.0), datasets=None, models=None):
    """Per dataset, the SGD-seed average of ``gen(S, W)`` against the expectation bound."""
    datasets = cfg.campaign.gen_datasets if datasets is None else datasets
    models = cfg.campaign.models_per_dataset if models is None else models
    ms = cfg.master_seed
    q, k, bc = cfg.prior, cfg.kernel, cfg.bounds
    hits = {t: 0 for t in t_values}
    rhs_sum = {t: 0.0 for t in t_values}
    lhs_vals = []
    for i in range(datasets):
        S, task = make_synthetic_task(cfg.task.d, cfg.task.n, cfg.task.noise,
                                      derive_seed(ms, "gen-data", i), cfg.task.signal)
        ws = np.stack([sgd_train(S, replace(cfg.train, seed=derive_seed(ms, "gen-train", i, j)), q, k)
                       for j in range(models)])
        gens = _pop_risks(task, ws, cfg.campaign.pop_mc, derive_seed(ms, "gen-pop", i)) \
            - empirical_risks(S, ws)
        lhs = float(gens.mean())
        lhs_vals.append(lhs)
        for t in t_values:
            rhs = gen_bound_expectation_rhs(S, [(w, b_w(w, k, q, t, under=bc.tail_measure)) for w in ws],
                                            k, q, t, S.n, bc.delta, bc.lipschitz)
            hits[t] += lhs > rhs
            rhs_sum[t] += rhs
    reports = [BoundReport.for_rate(f"expected_gen_t{t:g}", hits[t], datasets, bc.delta) for t in t_values]
    return CampaignResult("expected_gen_campaign", reports, details={
        "mean_lhs": float(np.mean(lhs_vals)), "max_lhs": float(np.max(lhs_vals)),
        "mean_rhs": {str(t): rhs_sum[t] / datasets for t in t_values}, "datasets": datasets,
        "models_per_dataset": models})


def comm_budget_check(cfg, t=None, models=None, encodings=None):
    """Mean ORC index length under the Zipf code tuned to the mean KL, in nats, against the budget."""
    t = cfg.bounds.t if t is None else t
    models = cfg.campaign.budget_models if models is None else models
    encodings = cfg.campaign.budget_encodings if encodings is None else encodings
    ms = cfg.master_seed
    q, k = cfg.prior, cfg.kernel
    ws = [_train(cfg, derive_seed(ms, "budget-data", i), derive_seed(ms, "budget-train", i))[2]
          for i in range(models)]
    c_hat = float(np.mean([kl_to_prior(w, k, q) for w in ws]))
    zipf = IndexCode.for_rate(c_hat)
    bits_z, bits_e = [], []
    for i, w in enumerate(ws):
        for j in range(encodings):
            cb = Codebook.from_seed(derive_seed(ms, "budget-codebook", i, j), q)
            kk = encode_orc(w, cb, t, k, q, derive_seed(ms, "budget-encoder", i, j), precision=None).index
            bits_z.append(len(encode_index(kk, zipf)))
            bits_e.append(len(encode_index(kk, IndexCode())))
    nats = np.array(bits_z) * LN2
    budget = comm_budget(c_hat) + BUDGET_SLACK_NATS
    rep = BoundReport.for_mean("comm_budget_zipf", nats, budget)
    return CampaignResult("comm_budget", [rep], checks={"mean_within_budget": float(nats.mean()) <= budget},
                          details={"C_hat": c_hat, "zipf_exponent": zipf.zipf_exponent,
                                   "mean_nats_zipf": float(nats.mean()),
                                   "mean_nats_elias": float(np.mean(bits_e) * LN2),
                                   "budget_with_slack": budget, "encodings": len(bits_z), "t": t})


def vq_oneshot(cfg, N=None, draws=None, pilot=None, target_tau=0.2):
    """Nearest-codeword encoder: covering frequency vs ``tau`` and one-shot generalization rate."""
    N = cfg.bounds.N_vq if N is None else N
    draws = cfg.campaign.vq_draws if draws is None else draws
    pilot = cfg.campaign.pilot_models if pilot is None else pilot
    ms = cfg.master_seed
    q, bc = cfg.prior, cfg.bounds
    ws = np.stack([_train(cfg, derive_seed(ms, "vq-pilot-data", i), derive_seed(ms, "vq-pilot-train", i))[2]
                   for i in range(pilot)])
    cal = calibrate_vq_radius(q, N, ws, target=target_tau, seed=derive_seed(ms, "vq-tau"),
                              ratio_scale=bc.ratio_scale)
    if cal is None:
        return CampaignResult("vq_oneshot", checks={"tau_calibrated": False},
                              details={"note": "no radius on the grid reached the target"})
    eps, tau = cal.epsilon, cal.tau.tau
    rhs = gen_bound_oneshot_rhs(N, cfg.task.n, bc.delta, bc.lipschitz, eps)
    far = gen_hits = 0
    dists, gens = [], []
    for i in range(draws):
        S, task, w = _train(cfg, derive_seed(ms, "vq-data", i), derive_seed(ms, "vq-train", i))
        cb = Codebook.from_seed(derive_seed(ms, "vq-codebook", i), q)
        cw = cb[encode_vq(w, cb, N, precision=None).index]
        dist = float(np.linalg.norm(w - cw))
        gen = float(_pop_risks(task, cw, cfg.campaign.pop_mc, derive_seed(ms, "vq-pop", i))[0]
                    - empirical_risks(S, cw)[0])
        far += dist > eps
        gen_hits += gen > rhs
        dists.append(dist)
        gens.append(gen)
    reports = [BoundReport.for_rate("vq_covering", far, draws, tau),
               BoundReport.for_rate("vq_oneshot_gen", gen_hits, draws, bc.delta + tau)]
    return CampaignResult("vq_oneshot", reports, checks={"tau_calibrated": tau <= target_tau}, details={
        "epsilon": eps, "kernel_variance": cal.kernel.variance, "tau": tau, "tau_argmin": cal.tau.argmin,
        "tau_terms": cal.tau.terms, "N": N, "oneshot_rhs": rhs, "mean_distance": float(np.mean(dists)),
        "max_distance": float(np.max(dists)), "mean_gen": float(np.mean(gens)), "draws": draws})


def appendix_grid(ts=(2.0, 4.0, 8.0), norms=(0.0, 1.0, 2.0), ds=(2, 8), trials=1000, seed=0, variance=1.0):
    """The weighted-distance concentration claim over a grid of ``(d, |w - mu|, t)``."""
    res = CampaignResult("appendix_grid")
    for d in ds:
        q = Prior.standard(d, variance)
        k = QuantKernel(variance)
        for r in norms:
            w = np.zeros(d)
            w[0] = r
            for t in ts:
                diag, rep = appendix_claim_check(w, k, q, t, trials=trials,
                                                 seed=derive_seed(seed, "appendix", d, r, t))
                name = f"appendix_d{d}_r{r:g}_t{t:g}"
                res.reports.append(replace(rep, name=name))
                res.checks[name] = diag.mean_abs_gap <= diag.sigma0 * diag.b_w
                res.reports.append(BoundReport.for_rate(f"{name}_weights", round(diag.weights_dev_freq * trials),
                                                        trials, min(1.0, diag.weights_dev_bound)))
                res.rows.append({"d": d, "offset": r, "t": t, "N": diag.N, "lhs": diag.mean_abs_gap,
                                 "rhs": diag.sigma0 * diag.b_w, "b_w": diag.b_w, "sigma0": diag.sigma0,
                                 "I_w": diag.I_w, "clip_gap": diag.clipped_gap["clip_gap"],
                                 "clip_gap_bound": diag.clipped_gap["clip_gap_bound"],
                                 "clip_bias": diag.clipped_gap["clip_bias"], "B_term": diag.B_term,
                                 "B_bound": diag.B_bound, "indicator_fired": diag.indicator_fired,
                                 "weights_dev_freq": diag.weights_dev_freq,
                                 "weights_dev_bound": diag.weights_dev_bound})
    return res


def _non_increasing(vals, slack):
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def lambda_sweep(cfg, lambdas=(0.0, 0.01, 0.1, 1.0), datasets=5, models=None, slack=1e-6):
    """KL to the prior, the budget and the expectation bound as the penalty weight grows."""
    models = cfg.campaign.models_per_dataset if models is None else models
    ms = cfg.master_seed
    q, k, bc = cfg.prior, cfg.kernel, cfg.bounds
    res = CampaignResult("lambda_sweep")
    for i in range(datasets):
        S, _ = make_synthetic_task(cfg.task.d, cfg.task.n, cfg.task.noise,
                                   derive_seed(ms, "lambda-data", i), cfg.task.signal)
        c_vals, rhs_vals = [], []
        for lam in lambdas:
            tc = replace(cfg.train, kl_weight=lam)
            ws = [sgd_train(S, replace(tc, seed=derive_seed(ms, "lambda-train", i, j)), q, k)
                  for j in range(models)]
            c_s = float(np.mean([kl_to_prior(w, k, q) for w in ws]))
            rhs = gen_bound_expectation_rhs(S, [(w, None) for w in ws], k, q, bc.t, S.n, bc.delta,
                                            bc.lipschitz)
            c_vals.append(c_s)
            rhs_vals.append(rhs)
            res.rows.append({"dataset": i, "kl_weight": lam, "C_S": c_s, "budget": comm_budget(c_s),
                             "gen_bound": rhs})
        res.checks[f"dataset{i}_kl_non_increasing"] = _non_increasing(c_vals, slack)
        res.checks[f"dataset{i}_gen_bound_non_increasing"] = _non_increasing(rhs_vals, slack)
    return res


PRECISION_BITS = {"none": 0, "full": 64}


def _precision_label(value):
    value = str(value).strip()
    if value in ("0", "none"):
        return "none"
    if value == "full":
        return "full"
    if value.isdigit():
        return f"q{value}"
    if value.startswith("q") and value[1:].isdigit():
        return value
    raise ConfigError(f"bad precision value {value!r}")


SWEEP_PARAMS = ("precision_bits", "kl_weight", "t", "kernel_variance", "encoder")


def sweep(cfg, param, values, threads=1):
    """Run the pipeline once per value with identical trial seeds; one summary row per value."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    rows = []
    for raw in values:
        if param == "precision_bits":
            label = _precision_label(raw)
            c = replace(cfg, precision=label)
            bits = PRECISION_BITS.get(label, int(label[1:]) if label.startswith("q") else 0)
        elif param == "kl_weight":
            c, bits = replace(cfg, train=replace(cfg.train, kl_weight=float(raw))), None
        elif param == "t":
            c, bits = replace(cfg, bounds=replace(cfg.bounds, t=float(raw))), None
        elif param == "kernel_variance":
            c, bits = replace(cfg, kernel=QuantKernel(float(raw))), None
        else:
            c, bits = replace(cfg, encoder=str(raw)), None
        summary, _ = summarize(c, run_pipeline(c, threads))
        row = {"param": param, "value": str(raw)}
        if bits is not None:
            row["bits"] = bits
        row.update({key: val for key, val in summary.items() if key.startswith("mean_")})
        row["failed"] = summary["failed"]
        rows.append(row)
    return rows


def precision_sweep(cfg, modes=("none", "4", "8", "full"), trials=None, threads=1):
    """Risk gap, payload size, distance gain and distortion term across precision levels."""
    c = cfg if trials is None else replace(cfg, trials=trials)
    rows = sweep(c, "precision_bits", modes, threads)
    gap = [r["mean_emp_gap_abs"] for r in rows]
    payload = [r["mean_payload_bits"] for r in rows]
    gain = [r["mean_delta_u"] for r in rows]
    eps = [r["mean_eps_term"] for r in rows]
    checks = {
        "risk_gap_non_increasing": _non_increasing(gap, 0.0),
        "payload_bits_increasing": all(b > a for a, b in zip(payload, payload[1:])),
        "delta_u_non_decreasing": _non_increasing([-g for g in gain], 0.0),
        "eps_term_non_decreasing": _non_increasing([-e for e in eps], 0.0),
    }
    return CampaignResult("precision_sweep", checks=checks, rows=rows)


def quick_config(master_seed=0):
    """Reduced trial counts used by the self-test."""
    return ExperimentConfig(campaign=CampaignSizes(risk_trials=200, encoder_draws=32, gen_datasets=60,
                                                   models_per_dataset=4, budget_models=40,
                                                   budget_encodings=50, vq_draws=200, pilot_models=100,
                                                   appendix_trials=300, equivalence_draws=20_000,
                                                   pop_mc=10_000),
                            trials=40, master_seed=master_seed)


def selftest(cfg=None):
    """Reduced versions of every campaign; the caller fails on any violation."""
    cfg = quick_config() if cfg is None else cfg
    cs = cfg.campaign
    return [
        decoded_risk_campaign(cfg, 4.0), decoded_risk_campaign(cfg, 8.0),
        expected_gen_campaign(cfg),
        comm_budget_check(cfg),
        vq_oneshot(cfg),
        appendix_grid(ts=(2.0, 8.0), norms=(0.0, 2.0), ds=(2, 8), trials=cs.appendix_trials,
                      seed=cfg.master_seed),
        lambda_sweep(cfg, datasets=2, models=2),
        precision_sweep(cfg),
    ]
