"""Command-line entry point: ``mincomm <subcommand> [flags]``.

Exit codes: 0 success, 1 a self-test check failed, 2 configuration or usage error.
"""
import argparse
from dataclasses import replace
import json
import os
import sys

import numpy as np

from . import campaigns
from .codebook import derive_seed
from .errors import ConfigError
from .harness import ExperimentConfig, load_config, run_pipeline, summarize, write_outputs
from .hypothesis import empirical_risk, save_dataset, save_model
from .quantkernel import kl_to_prior
from .trainer import make_synthetic_task, sgd_train

SUBCOMMANDS = ("train", "compress", "bounds", "verify-appendix", "sweep", "selftest")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (missing keys take defaults)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--trials", type=_positive, help="number of trials")
    common.add_argument("--seed", type=_u64, help="master seed")
    common.add_argument("--encoder", choices=("mrc", "orc", "vq"))
    common.add_argument("--precision", help="none, full or q<bits>")
    common.add_argument("--threads", type=_positive, default=1)

    parser = argparse.ArgumentParser(prog="mincomm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train one model and save dataset and model files")
    sub.add_parser("compress", parents=[common], help="end-to-end train/encode/decode pipeline")
    sub.add_parser("bounds", parents=[common], help="bound-validation campaigns")
    sub.add_parser("verify-appendix", parents=[common], help="weighted-distance concentration grid")
    sw = sub.add_parser("sweep", parents=[common], help="pipeline sweep over one parameter")
    sw.add_argument("--param", required=True, choices=campaigns.SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sub.add_parser("selftest", parents=[common], help="reduced campaigns; exit 1 on any failure")
    return parser


def resolve_config(args, base=None):
    cfg = load_config(args.config) if args.config else (base or ExperimentConfig())
    kw = {}
    if args.out:
        kw["out"] = args.out
    if args.trials:
        kw["trials"] = args.trials
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.encoder:
        kw["encoder"] = args.encoder
    if args.precision:
        kw["precision"] = args.precision
    return ExperimentConfig.from_json({**cfg.to_json(), **_json_kw(kw)})


def _json_kw(kw):
    out = dict(kw)
    if "master_seed" in out:
        out["master_seed"] = str(out["master_seed"])
    return out


def _print_reports(results):
    ok = True
    for res in results:
        for rep in res.reports:
            status = "vacuous" if rep.vacuous else ("FAIL" if rep.violated else "ok")
            print(f"{status:8s} {rep.name:32s} lhs={rep.lhs_empirical:.6g} rhs={rep.rhs_value:.6g}")
        for name, passed in res.checks.items():
            print(f"{'ok' if passed else 'FAIL':8s} {res.name}:{name}")
        ok = ok and res.passed
    return ok


def _campaign_summary(cfg, results):
    return {"config_hash": cfg.config_hash(),
            "campaigns": {r.name: {"passed": r.passed, "checks": r.checks, "details": r.details,
                                   "violations": {x.name: x.violated for x in r.reports}}
                          for r in results}}


def _cmd_train(cfg, args):
    ms = cfg.master_seed
    S, _ = make_synthetic_task(cfg.task.d, cfg.task.n, cfg.task.noise, derive_seed(ms, 0, "data"),
                               cfg.task.signal)
    w = sgd_train(S, replace(cfg.train, seed=derive_seed(ms, 0, "train")), cfg.prior, cfg.kernel)
    os.makedirs(cfg.out, exist_ok=True)
    save_dataset(os.path.join(cfg.out, "dataset.rcds"), S)
    save_model(os.path.join(cfg.out, "model.rcmw"), w)
    summary = {"config_hash": cfg.config_hash(), "emp_risk": empirical_risk(S, w),
               "kl_to_prior": kl_to_prior(w, cfg.kernel, cfg.prior), "norm": float(np.linalg.norm(w))}
    write_outputs(cfg.out, cfg, summary=summary)
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_compress(cfg, args):
    records = run_pipeline(cfg, args.threads)
    summary, reports = summarize(cfg, records)
    write_outputs(cfg.out, cfg, records, reports, summary)
    print(f"{summary['trials']} trials, {summary['failed']} failed -> {cfg.out}")
    _print_reports([campaigns.CampaignResult("compress", reports)])
    return 0


def _bound_campaigns(cfg, trials):
    c = cfg
    if trials:
        c = replace(cfg, campaign=replace(cfg.campaign, risk_trials=trials, gen_datasets=trials,
                                          vq_draws=trials))
    return [campaigns.decoded_risk_campaign(c, 4.0), campaigns.decoded_risk_campaign(c, 8.0),
            campaigns.expected_gen_campaign(c), campaigns.comm_budget_check(c), campaigns.vq_oneshot(c)]


def _cmd_bounds(cfg, args):
    results = _bound_campaigns(cfg, args.trials)
    _print_reports(results)
    write_outputs(cfg.out, cfg, reports=[r for res in results for r in res.reports],
                  summary=_campaign_summary(cfg, results))
    return 0


def _cmd_appendix(cfg, args):
    trials = args.trials or cfg.campaign.appendix_trials
    res = campaigns.appendix_grid(trials=trials, seed=cfg.master_seed)
    _print_reports([res])
    write_outputs(cfg.out, cfg, reports=res.reports, summary=_campaign_summary(cfg, [res]),
                  extra_name="appendix.csv", extra_rows=res.rows)
    return 0


def _cmd_sweep(cfg, args):
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    rows = campaigns.sweep(cfg, args.param, values, args.threads)
    write_outputs(cfg.out, cfg, summary={"config_hash": cfg.config_hash(), "param": args.param,
                                         "rows": rows}, extra_name="sweep.csv", extra_rows=rows)
    for row in rows:
        print(f"{row['value']:>8s} delta_u={row.get('mean_delta_u', float('nan')):.6g} "
              f"payload_bits={row.get('mean_payload_bits', float('nan')):.6g}")
    return 0


def _cmd_selftest(cfg, args):
    results = campaigns.selftest(cfg)
    ok = _print_reports(results)
    write_outputs(cfg.out, cfg, reports=[r for res in results for r in res.reports],
                  summary=_campaign_summary(cfg, results))
    print("selftest passed" if ok else "selftest FAILED")
    return 0 if ok else 1


_HANDLERS = {"train": _cmd_train, "compress": _cmd_compress, "bounds": _cmd_bounds,
             "verify-appendix": _cmd_appendix, "sweep": _cmd_sweep, "selftest": _cmd_selftest}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        base = campaigns.quick_config() if args.command == "selftest" else None
        cfg = resolve_config(args, base)
        return _HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
