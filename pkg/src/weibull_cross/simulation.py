"""Two-arm trial scenarios with a pinned crossing, and the sample-size sweep.

A scenario fixes the control arm and the crossing day, multiplies either the
treatment rate or shape by ``1 + rel_diff``, and solves the remaining
treatment parameter so the curves still cross on that day. The sweep
simulates trials over a grid of per-arm sizes, re-estimates the arms, and
records how parameter errors turn into crossing-time errors.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .crossing import CurvePair, crossing_point, treatment_for_rate, treatment_for_shape
from .inference import ConfigError, PriorConfig, SamplerConfig, mh_sample, summarize
from .weibull_core import DEFAULT_CENSOR_TIME, Dataset, WeibullParams, apply_censoring, format_float, sample_times

REFERENCE_CONTROL = WeibullParams(3.43e-4, 1.08)
REFERENCE_T_CHI = 365.0


@dataclass(frozen=True)
class ScenarioSpec:
    varied: str
    rel_diff: float
    t_chi_target: float = REFERENCE_T_CHI
    control: WeibullParams = REFERENCE_CONTROL

    def __post_init__(self):
        if self.varied not in ("failure", "shape"):
            raise ConfigError(f"varied must be 'failure' or 'shape', got {self.varied!r}")
        if self.rel_diff == 0:
            raise ConfigError("rel_diff = 0 leaves the arms with no unique crossing")
        if not 1 + self.rel_diff > 0:
            raise ConfigError("rel_diff must exceed -1")
        if not (math.isfinite(self.t_chi_target) and self.t_chi_target > 0):
            raise ConfigError("t_chi_target must be positive")

    @property
    def scenario_id(self) -> str:
        return f"{self.varied}_{self.rel_diff:+g}"

    def to_dict(self) -> dict:
        return {
            "varied": self.varied,
            "rel_diff": self.rel_diff,
            "t_chi_target": self.t_chi_target,
            "control": self.control.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioSpec":
        control = WeibullParams.from_dict(d["control"]) if "control" in d else REFERENCE_CONTROL
        return cls(d["varied"], float(d["rel_diff"]), float(d.get("t_chi_target", REFERENCE_T_CHI)), control)


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    pair: CurvePair


def build_scenario(spec: ScenarioSpec) -> Scenario:
    """Solve the treatment arm so both curves cross at ``spec.t_chi_target``.

    Raises:
        ConfigError: the solved parameter is non-positive, singular, or
            equal to the control's.
    """
    c, t = spec.control, spec.t_chi_target
    try:
        if spec.varied == "failure":
            treatment = treatment_for_rate(c, (1 + spec.rel_diff) * c.lam, t)
        else:
            treatment = treatment_for_shape(c, (1 + spec.rel_diff) * c.k, t)
    except ValueError as err:
        raise ConfigError(f"cannot build scenario {spec.scenario_id}: {err}") from None
    pair = CurvePair(c, treatment)
    res = crossing_point(pair)
    if not (res.unique and abs(res.t_chi / t - 1) <= 1e-9):
        raise ConfigError(f"scenario {spec.scenario_id} does not cross at {t}")
    return Scenario(spec, pair)


def default_scenarios(sign: float = 1.0) -> tuple[ScenarioSpec, ...]:
    """Failure and shape differences of 25% and 50%, crossing at day 365."""
    return tuple(ScenarioSpec(v, sign * d) for v in ("failure", "shape") for d in (0.25, 0.50))


def _child_seeds(seed, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def simulate_trial(
    scenario: Scenario, n_per_arm: int, censor_time: float = DEFAULT_CENSOR_TIME, seed=0
) -> tuple[Dataset, Dataset]:
    """Draw ``n_per_arm`` subjects per arm and censor both at ``censor_time``."""
    if n_per_arm < 1:
        raise ValueError("n_per_arm must be at least 1")
    if not (math.isfinite(censor_time) and censor_time > 0):
        raise ValueError("censor_time must be positive")
    s_control, s_treatment = _child_seeds(seed, 2)
    control = apply_censoring(sample_times(scenario.pair.control, n_per_arm, s_control), censor_time)
    treatment = apply_censoring(sample_times(scenario.pair.treatment, n_per_arm, s_treatment), censor_time)
    return control, treatment


# -- sweep ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    n_grid: tuple[int, ...] = tuple(range(200, 2000, 100))
    replications: int = 10
    censor_time: float = DEFAULT_CENSOR_TIME
    scenarios: tuple[ScenarioSpec, ...] = field(default_factory=default_scenarios)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    base_seed: int = 0
    point_estimate: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if not self.n_grid:
            raise ConfigError("n_grid must be non-empty")
        if any(int(n) != n or n < 1 for n in self.n_grid):
            raise ConfigError("n_grid entries must be positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be strictly ascending")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError("replications must be an integer >= 1")
        if not (math.isfinite(self.censor_time) and self.censor_time > 0):
            raise ConfigError("censor_time must be positive")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if int(self.base_seed) != self.base_seed or self.base_seed < 0:
            raise ConfigError("base_seed must be a non-negative integer")
        if self.point_estimate not in ("mean", "median"):
            raise ConfigError("point_estimate must be 'mean' or 'median'")
        for spec in self.scenarios:
            build_scenario(spec)

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "censor_time": self.censor_time,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "sampler": self.sampler.to_dict(),
            "priors": self.priors.to_dict(),
            "base_seed": self.base_seed,
            "point_estimate": self.point_estimate,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SweepConfig":
        known = {"n_grid", "replications", "censor_time", "scenarios", "sampler", "priors", "base_seed", "point_estimate"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        try:
            if "n_grid" in d:
                kw["n_grid"] = tuple(d["n_grid"])
            if "replications" in d:
                kw["replications"] = d["replications"]
            if "censor_time" in d:
                kw["censor_time"] = float(d["censor_time"])
            if "scenarios" in d:
                kw["scenarios"] = tuple(ScenarioSpec.from_dict(s) for s in d["scenarios"])
            if "sampler" in d:
                kw["sampler"] = SamplerConfig.from_dict(d["sampler"])
            if "priors" in d:
                kw["priors"] = PriorConfig.from_dict(d["priors"])
            if "base_seed" in d:
                kw["base_seed"] = d["base_seed"]
            if "point_estimate" in d:
                kw["point_estimate"] = d["point_estimate"]
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"invalid sweep config: {err}") from None
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}") from None
        if not isinstance(d, dict):
            raise ConfigError("sweep config must be a JSON object")
        return cls.from_dict(d)


SWEEP_HEADER = (
    "scenario_id",
    "varied",
    "rel_diff",
    "n",
    "rep",
    "lambda1_hat",
    "k1_hat",
    "err_lambda",
    "err_k",
    "err_tchi_lambda",
    "err_tchi_k",
    "err_tchi_joint",
    "converged",
)
ERROR_COLUMNS = ("err_lambda", "err_k", "err_tchi_lambda", "err_tchi_k", "err_tchi_joint")


@dataclass(frozen=True)
class SweepRow:
    scenario_index: int
    scenario_id: str
    varied: str
    rel_diff: float
    n: int
    rep: int
    lambda1_hat: float
    k1_hat: float
    err_lambda: float
    err_k: float
    err_tchi_lambda: float
    err_tchi_k: float
    err_tchi_joint: float
    converged: bool

    def sort_key(self):
        return (self.scenario_index, self.n, self.rep)


def row_seed(base_seed: int, scenario_index: int, n: int, rep: int) -> int:
    """Deterministic per-row seed; independent of execution order."""
    return int(np.random.SeedSequence([base_seed, scenario_index, n, rep]).generate_state(1)[0])


def _abs_crossing_error(pair: CurvePair, t_true: float) -> float:
    res = crossing_point(pair)
    if not res.unique:
        return math.nan
    return abs(res.t_chi / t_true - 1.0)


def run_row(cfg: SweepConfig, scenario_index: int, n: int, rep: int) -> SweepRow:
    """One replication: simulate, fit both arms, score the treatment estimates."""
    spec = cfg.scenarios[scenario_index]
    scenario = build_scenario(spec)
    truth_c, truth_t = scenario.pair.control, scenario.pair.treatment
    trial_seed, fit_c_seed, fit_t_seed = _child_seeds(row_seed(cfg.base_seed, scenario_index, n, rep), 3)
    head = dict(
        scenario_index=scenario_index,
        scenario_id=spec.scenario_id,
        varied=spec.varied,
        rel_diff=spec.rel_diff,
        n=n,
        rep=rep,
    )
    try:
        control, treatment = simulate_trial(scenario, n, cfg.censor_time, trial_seed)
        chain_t = mh_sample(treatment, cfg.priors, replace(cfg.sampler, seed=fit_t_seed))
        chain_c = mh_sample(control, cfg.priors, replace(cfg.sampler, seed=fit_c_seed))
        est_t = summarize(chain_t).point_estimate(cfg.point_estimate)
        est_c = summarize(chain_c).point_estimate(cfg.point_estimate)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        nan = math.nan
        return SweepRow(**head, lambda1_hat=nan, k1_hat=nan, err_lambda=nan, err_k=nan,
                        err_tchi_lambda=nan, err_tchi_k=nan, err_tchi_joint=nan, converged=False)

    t_true = spec.t_chi_target
    errors = dict(
        err_lambda=abs(est_t.lam - truth_t.lam) / truth_t.lam,
        err_k=abs(est_t.k - truth_t.k) / truth_t.k,
        err_tchi_lambda=_abs_crossing_error(CurvePair(truth_c, WeibullParams(est_t.lam, truth_t.k)), t_true),
        err_tchi_k=_abs_crossing_error(CurvePair(truth_c, WeibullParams(truth_t.lam, est_t.k)), t_true),
        err_tchi_joint=_abs_crossing_error(CurvePair(est_c, est_t), t_true),
    )
    ok = chain_t.converged and chain_c.converged and all(math.isfinite(v) for v in errors.values())
    return SweepRow(**head, lambda1_hat=est_t.lam, k1_hat=est_t.k, **errors, converged=ok)


def _run_task(args) -> SweepRow:
    return run_row(*args)


def run_sweep(cfg: SweepConfig, workers: int = 1, progress=None) -> list[SweepRow]:
    """All (scenario, n, rep) rows, sorted, identical for any ``workers``."""
    tasks = [
        (cfg, i, n, rep)
        for i in range(len(cfg.scenarios))
        for n in cfg.n_grid
        for rep in range(cfg.replications)
    ]
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(_run_task, tasks, chunksize=1):
                rows.append(row)
                if progress:
                    progress(len(rows), len(tasks))
    else:
        for task in tasks:
            rows.append(_run_task(task))
            if progress:
                progress(len(rows), len(tasks))
    return sorted(rows, key=SweepRow.sort_key)


# -- aggregation ---------------------------------------------------------------

SUMMARY_HEADER = (
    "scenario_id",
    "varied",
    "rel_diff",
    "n",
    "reps_used",
    "reps_dropped",
    "lambda1_hat",
    "k1_hat",
) + ERROR_COLUMNS


@dataclass(frozen=True)
class SummaryRow:
    scenario_index: int
    scenario_id: str
    varied: str
    rel_diff: float
    n: int
    reps_used: int
    reps_dropped: int
    lambda1_hat: float
    k1_hat: float
    err_lambda: float
    err_k: float
    err_tchi_lambda: float
    err_tchi_k: float
    err_tchi_joint: float


def summarize_sweep(rows: Sequence[SweepRow]) -> list[SummaryRow]:
    """Replication means per (scenario, n) over converged rows only."""
    if not rows:
        raise ValueError("no sweep rows to summarize")
    groups: dict[tuple[int, int], list[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.scenario_index, row.n), []).append(row)
    out = []
    for (idx, n), group in sorted(groups.items()):
        used = [r for r in group if r.converged]
        first = group[0]

        def mean(name):
            if not used:
                return math.nan
            return math.fsum(getattr(r, name) for r in used) / len(used)

        out.append(
            SummaryRow(
                scenario_index=idx,
                scenario_id=first.scenario_id,
                varied=first.varied,
                rel_diff=first.rel_diff,
                n=n,
                reps_used=len(used),
                reps_dropped=len(group) - len(used),
                lambda1_hat=mean("lambda1_hat"),
                k1_hat=mean("k1_hat"),
                **{c: mean(c) for c in ERROR_COLUMNS},
            )
        )
    return out


def loglog_slope(ns: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``ln error`` against ``ln n``."""
    return float(np.polyfit(np.log(ns), np.log(errors), 1)[0])


@dataclass(frozen=True)
class TrendCheck:
    scenario_id: str
    column: str
    first: float
    last: float
    slope: float
    monotone: bool


def trend_checks(summary: Sequence[SummaryRow], columns=("err_lambda", "err_k")) -> list[TrendCheck]:
    """Per-scenario error at the smallest vs largest n, log-log slope, monotonicity."""
    by_scenario: dict[int, list[SummaryRow]] = {}
    for row in summary:
        by_scenario.setdefault(row.scenario_index, []).append(row)
    out = []
    for idx in sorted(by_scenario):
        group = sorted(by_scenario[idx], key=lambda r: r.n)
        for col in columns:
            vals = [getattr(r, col) for r in group]
            ns = [r.n for r in group]
            slope = loglog_slope(ns, vals) if len(vals) > 1 and all(v > 0 for v in vals) else math.nan
            monotone = all(b < a for a, b in zip(vals, vals[1:]))
            out.append(TrendCheck(group[0].scenario_id, col, vals[0], vals[-1], slope, monotone))
    return out


def _csv_text(header, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for rec in records:
        w.writerow(rec)
    return buf.getvalue()


def _cell(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return format_float(x)
    return str(x)


def sweep_csv_text(rows: Sequence[SweepRow]) -> str:
    return _csv_text(SWEEP_HEADER, ([_cell(getattr(r, c)) for c in SWEEP_HEADER] for r in rows))


def summary_csv_text(rows: Sequence[SummaryRow]) -> str:
    return _csv_text(SUMMARY_HEADER, ([_cell(getattr(r, c)) for c in SUMMARY_HEADER] for r in rows))


def parse_sweep_csv(text: str) -> list[dict]:
    """Read a sweep CSV back as dictionaries with typed values."""
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for rec in reader:
        d = {}
        for key, val in rec.items():
            if key in ("scenario_id", "varied"):
                d[key] = val
            elif key in ("n", "rep"):
                d[key] = int(val)
            elif key == "converged":
                d[key] = val == "1"
            else:
                d[key] = float(val) if val else math.nan
        out.append(d)
    return out
