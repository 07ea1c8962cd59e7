"""End-to-end pipeline: draw data, train, encode, transmit, decode on a separate server, measure."""
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, asdict, fields, replace
import hashlib
import json
import math
import os
import time

import numpy as np
from scipy.special import expit

from .bounds import BoundConfig, BoundReport, b_w, decoded_epsilon, gen_bound_decoded_rhs
from .codebook import Codebook, Prior, derive_seed
from .encoders import (decode, decode_message, encode_message, encode_mrc, encode_orc, encode_vq,
                       orc_candidate_count, parse_precision)
from .errors import ConfigError, MincommError
from .hypothesis import empirical_risk, empirical_risks
from .index_codec import IndexCode, comm_budget
from .quantkernel import QuantKernel, kl_to_prior
from .trainer import DEFAULT_SIGNAL, TrainConfig, make_synthetic_task, sgd_train

BUDGET_SLACK_NATS = 0.7


@dataclass(frozen=True)
class TaskConfig:
    d: int = 8
    n: int = 200
    noise: float = 0.0
    signal: float = DEFAULT_SIGNAL

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or not 0 <= self.noise <= 0.5:
            raise ConfigError(f"invalid task config {self}")


@dataclass(frozen=True)
class CampaignSizes:
    """Trial counts for the bound-validation campaigns."""

    risk_trials: int = 1000
    encoder_draws: int = 64
    gen_datasets: int = 200
    models_per_dataset: int = 8
    budget_models: int = 200
    budget_encodings: int = 50
    vq_draws: int = 1000
    pilot_models: int = 200
    appendix_trials: int = 1000
    equivalence_draws: int = 100_000
    pop_mc: int = 20_000


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    task: TaskConfig = TaskConfig()
    train: TrainConfig = TrainConfig(kl_weight=0.1)
    prior_variance: float = 1.0
    prior_mean: tuple | None = None
    kernel: QuantKernel = QuantKernel(1.0)
    bounds: BoundConfig = BoundConfig()
    campaign: CampaignSizes = CampaignSizes()
    encoder: str = "orc"
    precision: str = "none"
    index_code: str = "elias_delta"
    rate_estimate: float | None = None
    trials: int = 100
    pop_mc: int = 20_000
    master_seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if self.encoder not in ("mrc", "orc", "vq"):
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        parse_precision(self.precision)
        if self.index_code not in ("elias_delta", "zipf"):
            raise ConfigError(f"unknown index code {self.index_code!r}")
        if self.trials < 1 or self.pop_mc < 2:
            raise ConfigError("trials must be >= 1 and pop_mc >= 2")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.prior_mean is not None and len(self.prior_mean) != self.task.d:
            raise ConfigError("prior mean length must equal task.d")
        if not self.prior_variance > 0:
            raise ConfigError("prior variance must be positive")

    @property
    def prior(self):
        mean = np.zeros(self.task.d) if self.prior_mean is None else np.asarray(self.prior_mean, float)
        return Prior(mean, self.prior_variance)

    @property
    def code(self):
        if self.index_code == "zipf":
            return IndexCode.for_rate(self.rate_estimate if self.rate_estimate is not None else 0.0)
        return IndexCode()

    def to_json(self):
        return {
            "task": asdict(self.task), "train": asdict(self.train),
            "prior": {"mean": None if self.prior_mean is None else list(self.prior_mean),
                      "variance": self.prior_variance},
            "kernel": self.kernel.to_json(), "bounds": asdict(self.bounds),
            "campaign": asdict(self.campaign), "encoder": self.encoder, "precision": self.precision,
            "index_code": self.index_code, "rate_estimate": self.rate_estimate,
            "trials": self.trials, "pop_mc": self.pop_mc, "master_seed": str(self.master_seed),
            "out": self.out,
        }

    @classmethod
    def from_json(cls, obj):
        """Build from a (possibly partial) JSON object; unknown keys are a config error."""
        obj = dict(obj)
        known = {"task", "train", "prior", "kernel", "bounds", "campaign", "encoder", "precision",
                 "index_code", "rate_estimate", "trials", "pop_mc", "master_seed", "out"}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {}
        try:
            for key, typ in (("task", TaskConfig), ("bounds", BoundConfig), ("campaign", CampaignSizes)):
                if key in obj:
                    kw[key] = _sub(typ, obj[key])
            if "train" in obj:
                kw["train"] = _sub(TrainConfig, {**asdict(cls.train), **obj["train"]})
            if "kernel" in obj:
                kw["kernel"] = QuantKernel.from_json(obj["kernel"])
            if "prior" in obj:
                prior = obj["prior"]
                kw["prior_variance"] = float(prior.get("variance", 1.0))
                mean = prior.get("mean")
                kw["prior_mean"] = None if mean is None else tuple(float(v) for v in mean)
            for key in ("encoder", "precision", "index_code", "out"):
                if key in obj:
                    kw[key] = str(obj[key])
            for key in ("trials", "pop_mc"):
                if key in obj:
                    kw[key] = int(obj[key])
            if "master_seed" in obj:
                kw["master_seed"] = int(obj["master_seed"])
            if obj.get("rate_estimate") is not None:
                kw["rate_estimate"] = float(obj["rate_estimate"])
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls(**kw)

    def config_hash(self):
        """Stable digest of the canonical serialization (the output path excluded)."""
        obj = self.to_json()
        obj.pop("out")
        blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kw):
        return replace(self, **kw)


def _sub(typ, obj):
    names = {f.name for f in fields(typ)}
    extra = set(obj) - names
    if extra:
        raise ConfigError(f"unknown {typ.__name__} keys: {sorted(extra)}")
    return typ(**obj)


def load_config(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_json(obj)


@dataclass
class TrialRecord:
    trial: int
    status: str = "ok"
    error: str = ""
    data_seed: int = 0
    train_seed: int = 0
    codebook_seed: int = 0
    encoder_seed: int = 0
    emp_risk: float = math.nan
    emp_risk_decoded: float = math.nan
    emp_gap: float = math.nan
    emp_gap_abs: float = math.nan
    pop_risk: float = math.nan
    pop_risk_decoded: float = math.nan
    gen: float = math.nan
    gen_decoded: float = math.nan
    kl: float = math.nan
    b_w: float = math.nan
    index: int = 0
    candidates: int = 0
    index_bits: int = 0
    message_bytes: int = 0
    payload_bits: int = 0
    delta_u: float = math.nan
    weps_norm: float = math.nan
    gen_rhs_decoded: float = math.nan
    eps_term: float = math.nan
    wall_time: float = 0.0


TRIAL_COLUMNS = [f.name for f in fields(TrialRecord)]
BOUND_COLUMNS = ["name", "rhs", "lhs", "ci_low", "ci_high", "violated", "vacuous", "config_hash"]


def trial_seeds(master_seed, trial):
    return {stage: derive_seed(master_seed, trial, stage)
            for stage in ("data", "train", "codebook", "encoder", "population")}


def server_decode(message, codebook_seed, prior_json, code=IndexCode()):
    """Server side: rebuild the codebook from the shared seed and prior, then decode."""
    prior = Prior.from_json(prior_json)
    cb = Codebook.from_seed(codebook_seed, prior)
    k, payload = decode_message(message, prior.d, code, cb)
    return k, payload, decode(k, payload, cb)


def _encode(cfg, w, cb, kernel, prior, enc_seed):
    t = cfg.bounds.t
    if cfg.encoder == "orc":
        return encode_orc(w, cb, t, kernel, prior, enc_seed, cfg.precision)
    if cfg.encoder == "mrc":
        n_w = orc_candidate_count(kl_to_prior(w, kernel, prior), t)
        return encode_mrc(w, cb, n_w, kernel, prior, enc_seed, cfg.precision)
    return encode_vq(w, cb, cfg.bounds.N_vq, cfg.precision)


def run_trial(cfg, trial):
    rec = TrialRecord(trial)
    start = time.perf_counter()
    seeds = trial_seeds(cfg.master_seed, trial)
    rec.data_seed, rec.train_seed = seeds["data"], seeds["train"]
    rec.codebook_seed, rec.encoder_seed = seeds["codebook"], seeds["encoder"]
    try:
        prior, kernel, code = cfg.prior, cfg.kernel, cfg.code
        S, task = make_synthetic_task(cfg.task.d, cfg.task.n, cfg.task.noise, seeds["data"],
                                      cfg.task.signal)
        w = sgd_train(S, replace(cfg.train, seed=seeds["train"]), prior, kernel)

        client_cb = Codebook.from_seed(seeds["codebook"], prior)
        result = _encode(cfg, w, client_cb, kernel, prior, seeds["encoder"])
        message = encode_message(result, code)
        k, payload, w_dec = server_decode(message, seeds["codebook"], prior.to_json(), code)

        cw = client_cb[k]
        rec.index, rec.candidates = int(k), result.candidates_examined
        rec.message_bytes = len(message)
        rec.index_bits = int.from_bytes(message[:4], "little")
        rec.payload_bits = payload.payload_bits
        rec.weps_norm = payload.norm
        rec.delta_u = max(0.0, float(np.linalg.norm(w - cw) - np.linalg.norm(w - w_dec)))

        x, y = task.sample(cfg.pop_mc, np.random.default_rng(seeds["population"]))
        pop = np.abs(expit(x @ np.stack([w, w_dec]).T) - y[:, None]).mean(axis=0)
        risks = empirical_risks(S, np.stack([w, w_dec]))
        rec.emp_risk, rec.emp_risk_decoded = float(risks[0]), float(risks[1])
        rec.emp_gap = rec.emp_risk_decoded - rec.emp_risk
        rec.emp_gap_abs = abs(rec.emp_gap)
        rec.pop_risk, rec.pop_risk_decoded = float(pop[0]), float(pop[1])
        rec.gen, rec.gen_decoded = rec.pop_risk - rec.emp_risk, rec.pop_risk_decoded - rec.emp_risk_decoded

        bc = cfg.bounds
        rec.kl = kl_to_prior(w, kernel, prior)
        rec.b_w = b_w(w, kernel, prior, bc.t, under=bc.tail_measure)
        rec.eps_term = decoded_epsilon(w, kernel, prior, bc.t, cfg.precision, bc.lipschitz, rec.b_w)
        rec.gen_rhs_decoded = gen_bound_decoded_rhs(w, kernel, prior, bc.t, cfg.task.n, bc.delta,
                                                    cfg.precision, bc.lipschitz, rec.b_w)
    except MincommError as exc:
        rec.status, rec.error = "failed", f"{type(exc).__name__}: {exc}"
    rec.wall_time = time.perf_counter() - start
    return rec


def run_pipeline(cfg, threads=1):
    """One record per trial, ordered by trial id; failed trials are recorded, not retried."""
    if threads <= 1:
        return [run_trial(cfg, i) for i in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: run_trial(cfg, i), range(cfg.trials)))


def summarize(cfg, records):
    """Aggregates plus the per-trial bound checks that the pipeline alone supports."""
    ok = [r for r in records if r.status == "ok"]
    summary = {"trials": len(records), "failed": len(records) - len(ok),
               "config_hash": cfg.config_hash(), "encoder": cfg.encoder, "precision": cfg.precision}
    reports = []
    if ok:
        for col in ("emp_risk", "emp_risk_decoded", "emp_gap", "emp_gap_abs", "gen", "gen_decoded", "kl", "b_w",
                    "index_bits", "payload_bits", "delta_u", "weps_norm", "gen_rhs_decoded", "eps_term"):
            summary[f"mean_{col}"] = float(np.mean([getattr(r, col) for r in ok]))
        hits = sum(r.gen_decoded > r.gen_rhs_decoded for r in ok)
        reports.append(BoundReport.for_rate("decoded_gen_rate", hits, len(ok), cfg.bounds.delta))
        if cfg.encoder == "orc":
            nats = np.array([r.index_bits for r in ok]) * math.log(2.0)
            c_hat = summary["mean_kl"]
            reports.append(BoundReport.for_mean("comm_budget", nats, comm_budget(c_hat) + BUDGET_SLACK_NATS))
    summary["violations"] = {r.name: r.violated for r in reports}
    return summary, reports


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(out_dir, cfg, records=(), reports=(), summary=None, extra_name=None, extra_rows=None):
    """Write trials.csv, bounds.csv, config.echo.json and summary.json under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.config_hash()
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(TRIAL_COLUMNS)
        for r in sorted(records, key=lambda r: r.trial):
            wr.writerow([_fmt(getattr(r, c)) for c in TRIAL_COLUMNS])
    with open(os.path.join(out_dir, "bounds.csv"), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BOUND_COLUMNS)
        for rep in reports:
            row = rep.row(h)
            wr.writerow([_fmt(row[c]) for c in BOUND_COLUMNS])
    with open(os.path.join(out_dir, "config.echo.json"), "w") as fh:
        json.dump(cfg.to_json(), fh, indent=2, sort_keys=True)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary or {}, fh, indent=2, sort_keys=True, default=_json_default)
    if extra_name and extra_rows:
        with open(os.path.join(out_dir, extra_name), "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(extra_rows[0]))
            wr.writeheader()
            for row in extra_rows:
                wr.writerow({k: _fmt(v) for k, v in row.items()})


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")
