"""Command-line driver: ``weibull-cross {cross,sensitivity,fit,simulate,sweep}``.

Exit codes: 0 success, 1 invalid input (nothing written), 2 computed but
statistically suspect (R-hat above 1.1 or failed replications; outputs are
still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .crossing import TARGETS, CurvePair, Sweep, crossing_point, grid_csv_text, sensitivity_grid
from .inference import (
    ConfigError,
    ConvergenceError,
    GammaPrior,
    PriorConfig,
    SamplerConfig,
    chain_csv_text,
    fit_json_dict,
    mh_sample,
    summarize,
)
from .simulation import (
    REFERENCE_CONTROL,
    REFERENCE_T_CHI,
    ScenarioSpec,
    SweepConfig,
    build_scenario,
    run_sweep,
    simulate_trial,
    summarize_sweep,
    summary_csv_text,
    sweep_csv_text,
    trend_checks,
)
from .weibull_core import DEFAULT_CENSOR_TIME, DatasetFormatError, WeibullParams, dataset_csv_text, read_dataset_csv

EXIT_OK, EXIT_INVALID, EXIT_SUSPECT = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _write_atomic(path, text)


def _info(msg: str, to_stderr: bool) -> None:
    print(msg, file=sys.stderr if to_stderr else sys.stdout)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _pair_from(args) -> CurvePair:
    return CurvePair(WeibullParams(args.l0, args.k0), WeibullParams(args.l1, args.k1))


def _linspace_step(lo: float, hi: float, step: float, name: str) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi) and math.isfinite(step)):
        raise ConfigError(f"{name} range must be finite")
    if step <= 0:
        raise ConfigError(f"{name} step must be positive")
    if hi < lo:
        raise ConfigError(f"{name} max must not be below its min")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    # rounding keeps 0.01-style steps free of representation drift
    return [round(lo + i * step, 12) for i in range(count)]


# -- verbs ---------------------------------------------------------------------


def run_cross(args) -> int:
    pair = _pair_from(args)
    if args.window is not None:
        a, b = args.window
        if not (0 <= a < b):
            raise ConfigError("window must satisfy 0 <= start < end")
    res = crossing_point(pair)
    in_window = None
    if args.window is not None and res.unique:
        in_window = res.within(args.window)
    record = {
        "kind": res.kind.value,
        "t_chi": res.t_chi if res.unique and math.isfinite(res.t_chi) else None,
        "message": res.describe(),
        "window": list(args.window) if args.window is not None else None,
        "in_window": in_window,
        "settings": {"control": pair.control.to_dict(), "treatment": pair.treatment.to_dict()},
    }
    if args.format == "json":
        text = _json(record)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("kind", "t_chi", "message", "in_window"))
        w.writerow(
            (
                record["kind"],
                "" if record["t_chi"] is None else repr(record["t_chi"]),
                record["message"],
                "" if in_window is None else int(in_window),
            )
        )
        text = buf.getvalue()
    _emit(text, args.out)
    if args.out is not None:
        print(res.describe())
        if in_window is not None:
            print(f"inside window [{args.window[0]:g}, {args.window[1]:g}]: {'yes' if in_window else 'no'}")
    return EXIT_OK


def run_sensitivity(args) -> int:
    pair = _pair_from(args)
    if not crossing_point(pair).unique:
        raise ConfigError("the curve pair has no unique crossing; nothing to perturb")
    phis = _linspace_step(args.phi_min, args.phi_max, args.phi_step, "phi")
    if any(p <= -1 for p in phis):
        raise ConfigError("phi must exceed -1 at every grid point")
    sweep = None
    if args.sweep is not None:
        if args.sweep_min is None or args.sweep_max is None or args.sweep_step is None:
            raise ConfigError("--sweep needs --sweep-min, --sweep-max and --sweep-step")
        values = _linspace_step(args.sweep_min, args.sweep_max, args.sweep_step, "sweep")
        if any(v <= 0 for v in values):
            raise ConfigError("sweep ratios must be positive")
        sweep = Sweep(args.sweep, values)
    rows = sensitivity_grid(pair, args.target, phis, sweep)
    if args.format == "json":
        text = _json(
            {
                "rows": [
                    {
                        "abscissa": r.abscissa,
                        "abscissa_kind": r.abscissa_kind,
                        "phi": r.phi,
                        "target": r.target,
                        "exact_ratio": r.exact_ratio,
                        "law_ratio": r.law_ratio,
                        "exact_rel_err": r.exact_rel_err,
                        "law_rel_err": r.law_rel_err,
                    }
                    for r in rows
                ],
                "settings": {
                    "control": pair.control.to_dict(),
                    "treatment": pair.treatment.to_dict(),
                    "target": args.target,
                    "sweep": args.sweep,
                },
            }
        )
    else:
        text = grid_csv_text(rows)
    _emit(text, args.out)
    return EXIT_OK


def _load_json_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON config: {err}") from None
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return d


def _sampler_and_priors(args, base: dict) -> tuple[SamplerConfig, PriorConfig]:
    try:
        sampler = SamplerConfig.from_dict(base.get("sampler", {}))
        priors = PriorConfig.from_dict(base.get("priors", {}))
    except TypeError as err:
        raise ConfigError(f"invalid config: {err}") from None
    overrides = {
        k: v
        for k, v in dict(
            burn_in=args.burn_in,
            samples=args.samples,
            chains=args.chains,
            initial_step=args.initial_step,
            target_accept=args.target_accept,
            seed=args.seed,
        ).items()
        if v is not None
    }
    sampler = replace(sampler, **overrides)
    k_prior = GammaPrior(
        priors.k_prior.shape if args.prior_k_shape is None else args.prior_k_shape,
        priors.k_prior.rate if args.prior_k_rate is None else args.prior_k_rate,
    )
    lam_prior = GammaPrior(
        priors.lambda_prior.shape if args.prior_lambda_shape is None else args.prior_lambda_shape,
        priors.lambda_prior.rate if args.prior_lambda_rate is None else args.prior_lambda_rate,
    )
    return sampler, PriorConfig(k_prior, lam_prior)


def run_fit(args) -> int:
    base = _load_json_config(args.config)
    sampler, priors = _sampler_and_priors(args, base)
    try:
        arms = read_dataset_csv(args.data)
    except OSError as err:
        raise ConfigError(f"cannot read dataset: {err}") from None
    data = arms.get(args.arm)
    if data is None or data.n == 0:
        raise ConfigError(f"arm {args.arm} has no records in {args.data}")
    if np.any(data.times[data.events] == 0):
        raise ConfigError("event records need positive times")

    chain = mh_sample(data, priors, sampler)
    fit = summarize(chain)
    settings = {"data": str(args.data), "arm": args.arm, "sampler": sampler.to_dict(), "priors": priors.to_dict()}
    record = fit_json_dict(fit, chain, **settings)
    if args.format == "csv":
        keys = ("mean_lambda", "mean_k", "sd_lambda", "sd_k", "ci_lambda", "ci_k", "rhat_lambda", "rhat_k", "seed")
        flat = []
        for key in keys:
            val = record[key]
            flat.extend(val if isinstance(val, list) else [val])
        header = [
            "mean_lambda", "mean_k", "sd_lambda", "sd_k",
            "ci_lambda_lo", "ci_lambda_hi", "ci_k_lo", "ci_k_hi", "rhat_lambda", "rhat_k", "seed",
        ]
        text = ",".join(header) + "\n" + ",".join("" if v is None else repr(v) for v in flat) + "\n"
    else:
        text = _json(record)
    _emit(text, args.out)
    if args.chain_out is not None:
        _write_atomic(args.chain_out, chain_csv_text(chain))
    if not chain.converged:
        print(
            f"warning: R-hat above 1.1 (lambda {chain.rhat_lambda:.4g}, k {chain.rhat_k:.4g})",
            file=sys.stderr,
        )
        return EXIT_SUSPECT
    return EXIT_OK


def run_simulate(args) -> int:
    spec = ScenarioSpec(args.varied, args.rel_diff, args.t_chi, WeibullParams(args.l0, args.k0))
    scenario = build_scenario(spec)
    if args.n < 1:
        raise ConfigError("--n must be at least 1")
    if not args.censor > 0:
        raise ConfigError("--censor must be positive")
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    control, treatment = simulate_trial(scenario, args.n, args.censor, args.seed)
    _emit(dataset_csv_text({0: control, 1: treatment}), args.out)
    tr = scenario.pair.treatment
    t_chi = crossing_point(scenario.pair).t_chi
    to_err = args.out is None
    _info(f"treatment lambda1 = {tr.lam!r}", to_err)
    _info(f"treatment k1 = {tr.k!r}", to_err)
    _info(f"verified t_chi = {t_chi!r} days", to_err)
    return EXIT_OK


def run_sweep_cmd(args) -> int:
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        cfg = SweepConfig.from_json(text)
    else:
        cfg = SweepConfig()
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    rows = run_sweep(cfg, workers=args.workers)
    summary = summarize_sweep(rows)
    _emit(sweep_csv_text(rows), args.out)
    if args.summary_out is not None:
        _write_atomic(args.summary_out, summary_csv_text(summary))
    to_err = args.out is None
    n_lo, n_hi = cfg.n_grid[0], cfg.n_grid[-1]
    for check in trend_checks(summary):
        _info(
            f"{check.scenario_id:>16} {check.column:<11} n={n_lo}: {check.first:.4g}  "
            f"n={n_hi}: {check.last:.4g}  slope {check.slope:.4g}  "
            f"{'decreasing' if check.last < check.first else 'NOT decreasing'}",
            to_err,
        )
    failed = sum(1 for r in rows if not r.converged)
    if failed:
        print(f"warning: {failed} of {len(rows)} replications did not converge", file=sys.stderr)
        return EXIT_SUSPECT
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_pair(p, defaults: bool = False):
    d = {}
    if defaults:
        d = dict(l0=REFERENCE_CONTROL.lam, k0=REFERENCE_CONTROL.k)
    p.add_argument("--l0", type=float, required=not defaults, default=d.get("l0"), help="control rate (1/day)")
    p.add_argument("--k0", type=float, required=not defaults, default=d.get("k0"), help="control shape")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="weibull-cross", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("cross", help="crossing time of two Weibull survival curves")
    _add_pair(p)
    p.add_argument("--l1", type=float, required=True, help="treatment rate (1/day)")
    p.add_argument("--k1", type=float, required=True, help="treatment shape")
    p.add_argument("--window", type=float, nargs=2, metavar=("START", "END"))
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=run_cross)

    p = sub.add_parser("sensitivity", help="exact vs scaling-law crossing errors over a perturbation grid")
    _add_pair(p)
    p.add_argument("--l1", type=float, required=True)
    p.add_argument("--k1", type=float, required=True)
    p.add_argument("--target", choices=TARGETS, default="lambda1")
    p.add_argument("--phi-min", type=float, default=-0.1)
    p.add_argument("--phi-max", type=float, default=0.1)
    p.add_argument("--phi-step", type=float, default=0.01)
    p.add_argument("--sweep", choices=("gamma", "z"))
    p.add_argument("--sweep-min", type=float)
    p.add_argument("--sweep-max", type=float)
    p.add_argument("--sweep-step", type=float)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=run_sensitivity)

    p = sub.add_parser("fit", help="posterior summary for one arm of a dataset CSV")
    p.add_argument("--data", required=True, help="CSV with header arm,time,event")
    p.add_argument("--arm", type=int, choices=(0, 1), default=0)
    p.add_argument("--config", help="JSON with optional 'sampler' and 'priors' objects")
    p.add_argument("--prior-k-shape", type=float)
    p.add_argument("--prior-k-rate", type=float)
    p.add_argument("--prior-lambda-shape", type=float)
    p.add_argument("--prior-lambda-rate", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--initial-step", type=float)
    p.add_argument("--target-accept", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.add_argument("--chain-out", help="also write draws as chain,iter,lambda,k")
    p.set_defaults(func=run_fit)

    p = sub.add_parser("simulate", help="two-arm dataset from a pinned-crossing scenario")
    p.add_argument("--varied", choices=("failure", "shape"), required=True)
    p.add_argument("--rel-diff", type=float, required=True)
    p.add_argument("--t-chi", type=float, default=REFERENCE_T_CHI)
    _add_pair(p, defaults=True)
    p.add_argument("--n", type=int, required=True, help="subjects per arm")
    p.add_argument("--censor", type=float, default=DEFAULT_CENSOR_TIME)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=run_simulate)

    p = sub.add_parser("sweep", help="sample-size sweep of parameter and crossing errors")
    p.add_argument("--config", help="sweep configuration JSON")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--summary-out")
    p.set_defaults(func=run_sweep_cmd)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError, DatasetFormatError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SUSPECT


if __name__ == "__main__":
    sys.exit(main())
