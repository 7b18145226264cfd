"""Bayesian and maximum-likelihood estimation of Weibull parameters.

The unnormalized log posterior of ``(lam, k)`` under independent gamma
priors ``k ~ Gamma(a, b)`` and ``lam ~ Gamma(g, h)`` (shape, rate) for
right-censored data with ``E`` events is::

    (E + a - 1) ln k + (k E + g - 1) ln lam + (k - 1) sum_events ln t
        - (lam^k sum_all t^k + b k + h lam)

The sampler works on ``(ln lam, ln k)`` and adds the log-Jacobian
``ln lam + ln k`` to the target.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .crossing import CrossingKind, CrossingResult, CurvePair, crossing_point
from .weibull_core import Dataset, WeibullParams, format_float


class ConfigError(ValueError):
    pass


class IdentifiabilityError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last: WeibullParams | None = None):
        super().__init__(message)
        self.last = last


RHAT_LIMIT = 1.1


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior with the given shape and rate.

    A rate of 0 is accepted and yields an improper power-law prior; shape 1
    with rate 0 is flat.
    """

    shape: float = 1.0
    rate: float = 0.001

    def __post_init__(self):
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ConfigError(f"prior shape must be positive, got {self.shape!r}")
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise ConfigError(f"prior rate must be non-negative, got {self.rate!r}")

    def log_density(self, x: float) -> float:
        """Unnormalized: ``(shape - 1) ln x - rate x``."""
        return (self.shape - 1.0) * math.log(x) - self.rate * x


@dataclass(frozen=True)
class PriorConfig:
    k_prior: GammaPrior = field(default_factory=GammaPrior)
    lambda_prior: GammaPrior = field(default_factory=GammaPrior)

    @classmethod
    def flat(cls) -> "PriorConfig":
        return cls(GammaPrior(1.0, 0.0), GammaPrior(1.0, 0.0))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriorConfig":
        return cls(GammaPrior(**d.get("k_prior", {})), GammaPrior(**d.get("lambda_prior", {})))


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = 2000
    samples: int = 10000
    chains: int = 4
    initial_step: float = 0.1
    target_accept: float = 0.30
    seed: int = 0

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples <= 0:
            raise ConfigError(f"samples must be a positive integer, got {self.samples!r}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ConfigError(f"burn_in must be a non-negative integer, got {self.burn_in!r}")
        if int(self.chains) != self.chains or self.chains < 2:
            raise ConfigError(f"chains must be an integer >= 2, got {self.chains!r}")
        if not (math.isfinite(self.initial_step) and self.initial_step > 0):
            raise ConfigError("initial_step must be positive")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SamplerConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class PosteriorChain:
    """Post-burn-in draws, shape ``(chains, samples, 2)`` as ``(lam, k)``."""

    per_chain: np.ndarray
    accept_rate: float = math.nan
    rhat_lambda: float = math.nan
    rhat_k: float = math.nan
    seed: int | None = None

    def __post_init__(self):
        arr = np.array(self.per_chain, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError("draws must have shape (chains, samples, 2)")
        if arr.size and not np.all(arr > 0):
            raise ValueError("all draws must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "per_chain", arr)

    @classmethod
    def from_draws(cls, draws: Sequence[Sequence[float]], **kw) -> "PosteriorChain":
        """Single-chain wrapper around an ``(n, 2)`` array of ``(lam, k)``."""
        return cls(np.asarray(draws, dtype=float).reshape(1, -1, 2), **kw)

    @property
    def draws(self) -> np.ndarray:
        return self.per_chain.reshape(-1, 2)

    def __len__(self) -> int:
        return self.per_chain.shape[0] * self.per_chain.shape[1]

    @property
    def converged(self) -> bool:
        return all(math.isnan(r) or r <= RHAT_LIMIT for r in (self.rhat_lambda, self.rhat_k))


@dataclass(frozen=True)
class FitResult:
    mean_lambda: float
    mean_k: float
    sd_lambda: float
    sd_k: float
    ci_lambda: tuple[float, float]
    ci_k: tuple[float, float]
    median_lambda: float
    median_k: float

    def point_estimate(self, kind: str = "mean") -> WeibullParams:
        if kind == "mean":
            return WeibullParams(self.mean_lambda, self.mean_k)
        if kind == "median":
            return WeibullParams(self.median_lambda, self.median_k)
        raise ValueError(f"point estimate must be 'mean' or 'median', got {kind!r}")


# -- log posterior ------------------------------------------------------------


@dataclass(frozen=True)
class _Suff:
    e: int
    sum_log_event: float
    log_t: np.ndarray  # ln t over records with t > 0; t = 0 adds nothing to the power sum
    total_time: float


def _sufficient(data: Dataset) -> _Suff:
    ev = data.times[data.events]
    if np.any(ev == 0):
        raise ValueError("event at time 0: log density undefined")
    pos = data.times[data.times > 0]
    return _Suff(
        e=data.e,
        sum_log_event=math.fsum(np.log(ev).tolist()),
        log_t=np.log(pos),
        total_time=math.fsum(data.times.tolist()),
    )


def log_posterior(lam: float, k: float, data: Dataset, priors: PriorConfig = PriorConfig()) -> float:
    """Unnormalized log posterior density of ``(lam, k)``.

    Sums are exactly rounded, so the value is invariant under any
    reordering of the records.
    """
    if not (lam > 0 and k > 0):
        raise ValueError("lambda and k must be positive")
    s = _sufficient(data)
    a, b = priors.k_prior.shape, priors.k_prior.rate
    g, h = priors.lambda_prior.shape, priors.lambda_prior.rate
    with np.errstate(over="ignore"):
        power_sum = math.fsum(np.exp(k * (math.log(lam) + s.log_t)).tolist())
    return (
        (s.e + a - 1.0) * math.log(k)
        + (k * s.e + g - 1.0) * math.log(lam)
        + (k - 1.0) * s.sum_log_event
        - (power_sum + b * k + h * lam)
    )


def log_likelihood(lam: float, k: float, data: Dataset) -> float:
    """Censored Weibull log likelihood (the flat-prior log posterior)."""
    return log_posterior(lam, k, data, PriorConfig.flat())


def _log_target(u: np.ndarray, v: np.ndarray, s: _Suff, priors: PriorConfig) -> np.ndarray:
    """Log posterior on ``(ln lam, ln k)`` including the Jacobian, per chain."""
    k = np.exp(v)
    lam = np.exp(u)
    a, b = priors.k_prior.shape, priors.k_prior.rate
    g, h = priors.lambda_prior.shape, priors.lambda_prior.rate
    with np.errstate(over="ignore", invalid="ignore"):
        power_sum = np.exp(k[:, None] * (u[:, None] + s.log_t[None, :])).sum(axis=1)
        out = (s.e + a) * v + (k * s.e + g) * u + (k - 1.0) * s.sum_log_event - (power_sum + b * k + h * lam)
    return np.where(np.isnan(out), -np.inf, out)


# -- maximum likelihood ------------------------------------------------------


def _loglik_derivs(u: float, v: float, s: _Suff):
    """Log likelihood, gradient and Hessian in ``(ln lam, ln k)``."""
    k = math.exp(v)
    log_lt = u + s.log_t  # ln(lam t)
    w = np.exp(k * log_lt)  # (lam t)^k
    sw = w.sum()
    swl = (w * log_lt).sum()
    swll = (w * log_lt * log_lt).sum()
    e = s.e
    ll = e * v + k * e * u + (k - 1.0) * s.sum_log_event - sw
    gu = k * e - k * sw
    gv = e + k * (e * u + s.sum_log_event - swl)
    huu = -k * k * sw
    huv = k * e - k * sw - k * k * swl
    hvv = k * (e * u + s.sum_log_event - swl) - k * k * swll
    return ll, np.array([gu, gv]), np.array([[huu, huv], [huv, hvv]])


def log_likelihood_grad(lam: float, k: float, data: Dataset) -> np.ndarray:
    """Gradient of the log likelihood with respect to ``(ln lam, ln k)``."""
    return _loglik_derivs(math.log(lam), math.log(k), _sufficient(data))[1]


def mle_fit(data: Dataset, max_iter: int = 200, tol: float = 1e-8) -> WeibullParams:
    """Maximum-likelihood ``(lam, k)`` by damped Newton ascent on log-parameters.

    Raises:
        IdentifiabilityError: fewer than two events.
        ConvergenceError: gradient norm still above ``tol`` after ``max_iter``.
    """
    s = _sufficient(data)
    if s.e < 2:
        raise IdentifiabilityError(f"need at least 2 events to fit both parameters, got {s.e}")
    u, v = math.log(s.e / s.total_time), 0.0
    ll, g, hess = _loglik_derivs(u, v, s)
    for _ in range(max_iter):
        if np.linalg.norm(g) < tol:
            return WeibullParams(math.exp(u), math.exp(v))
        step = None
        try:
            if np.all(np.linalg.eigvalsh(hess) < 0):
                step = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            step = None
        if step is None or step @ g <= 0:
            step = g / max(1.0, np.abs(g).max())
        # cap the move so exp(k ln(lam t)) cannot overflow on a wild step
        step *= min(1.0, 1.0 / max(np.abs(step).max(), 1e-300))
        t = 1.0
        while True:
            nu, nv = u + t * step[0], v + t * step[1]
            nll, ng, nh = _loglik_derivs(nu, nv, s)
            if nll >= ll - 1e-12 * abs(ll) or t < 1e-12:
                break
            t *= 0.5
        u, v, ll, g, hess = nu, nv, nll, ng, nh
    if np.linalg.norm(g) < tol:
        return WeibullParams(math.exp(u), math.exp(v))
    raise ConvergenceError(
        f"gradient norm {np.linalg.norm(g):.3g} after {max_iter} iterations",
        last=WeibullParams(math.exp(u), math.exp(v)),
    )


def mle_covariance(data: Dataset, p: WeibullParams) -> np.ndarray:
    """Inverse observed information for ``(lam, k)`` at ``p`` (delta method from log scale)."""
    _, _, hess = _loglik_derivs(math.log(p.lam), math.log(p.k), _sufficient(data))
    cov_log = np.linalg.inv(-hess)
    jac = np.diag([p.lam, p.k])
    return jac @ cov_log @ jac


# -- sampler -----------------------------------------------------------------


def split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction for an array ``(chains, samples)``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1] // 2
    if n < 2:
        return math.nan
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def _start_point(data: Dataset, s: _Suff, fixed_k: float | None) -> np.ndarray:
    if fixed_k is None and s.e >= 2:
        try:
            p = mle_fit(data)
            return np.array([math.log(p.lam), math.log(p.k)])
        except ConvergenceError:
            pass
    # exponential-model rate as a fallback
    log_rate = math.log(max(s.e, 1) / max(s.total_time, 1e-300))
    return np.array([log_rate] if fixed_k is not None else [log_rate, 0.0])


_ADAPT_BATCH = 50


def mh_sample(
    data: Dataset,
    priors: PriorConfig = PriorConfig(),
    cfg: SamplerConfig = SamplerConfig(),
    fixed_k: float | None = None,
) -> PosteriorChain:
    """Adaptive random-walk Metropolis on ``(ln lam, ln k)``.

    Each chain has its own RNG stream spawned from ``cfg.seed`` and its own
    adaptation state. During burn-in the proposal scale is tuned toward
    ``cfg.target_accept`` in batches; halfway through burn-in the proposal
    shape switches to the chain's empirical covariance. Everything is frozen
    once sampling starts. Chains advance in lockstep so the likelihood is
    evaluated for all of them in one vectorized call; results are identical
    to running them one at a time.

    With ``fixed_k`` set only ``lam`` is sampled and ``k`` is held at that value.
    """
    if data.n < 1:
        raise ValueError("dataset is empty")
    s = _sufficient(data)
    n_chains, total = cfg.chains, cfg.burn_in + cfg.samples
    dim = 1 if fixed_k is not None else 2
    rngs = [np.random.default_rng(ss) for ss in np.random.SeedSequence(cfg.seed).spawn(n_chains)]

    start = _start_point(data, s, fixed_k)
    theta = np.stack([start + 0.2 * rng.standard_normal(dim) for rng in rngs])
    noise = np.stack([rng.standard_normal((total, dim)) for rng in rngs], axis=1)
    log_u = np.stack([np.log(rng.random(total)) for rng in rngs], axis=1)

    fixed_v = None if fixed_k is None else np.full(n_chains, math.log(fixed_k))

    def target(th):
        return _log_target(th[:, 0], th[:, 1] if fixed_v is None else fixed_v, s, priors)

    log_scale = np.full(n_chains, math.log(cfg.initial_step))
    chol = np.broadcast_to(np.eye(dim), (n_chains, dim, dim)).copy()
    history = np.empty((total, n_chains, dim))
    accepted = np.zeros((total, n_chains), dtype=bool)
    lp = target(theta)
    switch_at = cfg.burn_in // 2 if cfg.burn_in >= 8 * _ADAPT_BATCH else None

    for it in range(total):
        prop = theta + np.exp(log_scale)[:, None] * np.einsum("cij,cj->ci", chol, noise[it])
        lp_prop = target(prop)
        acc = log_u[it] < lp_prop - lp
        theta = np.where(acc[:, None], prop, theta)
        lp = np.where(acc, lp_prop, lp)
        history[it] = theta
        accepted[it] = acc

        if it >= cfg.burn_in:
            continue
        done = it + 1
        if done == switch_at:
            window = history[switch_at // 2 : switch_at]
            for c in range(n_chains):
                cov = np.atleast_2d(np.cov(window[:, c, :], rowvar=False))
                cov = cov + 1e-10 * np.eye(dim) * max(np.trace(cov), 1e-12)
                try:
                    chol[c] = np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    continue
                log_scale[c] = math.log(2.38 / math.sqrt(dim))
        elif done % _ADAPT_BATCH == 0:
            rate = accepted[done - _ADAPT_BATCH : done].mean(axis=0)
            gain = 1.0 / math.sqrt(done // _ADAPT_BATCH)
            log_scale += gain * (rate - cfg.target_accept)

    kept = history[cfg.burn_in :]
    lam = np.exp(kept[:, :, 0]).T
    k = np.exp(kept[:, :, 1]).T if fixed_k is None else np.full_like(lam, fixed_k)
    per_chain = np.stack([lam, k], axis=-1)
    return PosteriorChain(
        per_chain,
        accept_rate=float(accepted[cfg.burn_in :].mean()),
        rhat_lambda=split_rhat(lam),
        rhat_k=split_rhat(k) if fixed_k is None else math.nan,
        seed=cfg.seed,
    )


# -- summaries ----------------------------------------------------------------


def summarize(chain: PosteriorChain) -> FitResult:
    d = chain.draws
    if d.shape[0] == 0:
        raise ValueError("chain is empty")
    ddof = 1 if d.shape[0] > 1 else 0
    # centring on the first draw makes a constant chain exact
    shifted = d - d[0]
    mean = d[0] + shifted.mean(axis=0)
    sd = shifted.std(axis=0, ddof=ddof)
    lo, med, hi = np.quantile(d, [0.025, 0.5, 0.975], axis=0)
    return FitResult(
        mean_lambda=float(mean[0]),
        mean_k=float(mean[1]),
        sd_lambda=float(sd[0]),
        sd_k=float(sd[1]),
        ci_lambda=(float(lo[0]), float(hi[0])),
        ci_k=(float(lo[1]), float(hi[1])),
        median_lambda=float(med[0]),
        median_k=float(med[1]),
    )


@dataclass(frozen=True, eq=False)
class CrossingPosterior:
    results: tuple[CrossingResult, ...]
    t_chi: np.ndarray  # unique crossings only
    interval: tuple[float, float] | None
    fraction_nonunique: float

    def count(self, kind: CrossingKind) -> int:
        return sum(1 for r in self.results if r.kind is kind)


def crossing_posterior(control: PosteriorChain, treatment: PosteriorChain) -> CrossingPosterior:
    """Push paired posterior draws through the crossing formula.

    Draws are paired by index after truncating to the shorter chain.
    Non-crossing pairs are counted, not raised.
    """
    a, b = control.draws, treatment.draws
    m = min(len(a), len(b))
    if m == 0:
        raise ValueError("both chains must be non-empty")
    results = tuple(
        crossing_point(CurvePair(WeibullParams(a[i, 0], a[i, 1]), WeibullParams(b[i, 0], b[i, 1])))
        for i in range(m)
    )
    t = np.array([r.t_chi for r in results if r.unique], dtype=float)
    interval = None
    if t.size:
        lo, hi = np.quantile(t, [0.025, 0.975])
        interval = (float(lo), float(hi))
    return CrossingPosterior(results, t, interval, 1.0 - t.size / m)


# -- export ---------------------------------------------------------------------


def chain_csv_text(chain: PosteriorChain) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("chain", "iter", "lambda", "k"))
    for c, draws in enumerate(chain.per_chain):
        for i, (lam, k) in enumerate(draws.tolist()):
            w.writerow((c, i, format_float(lam), format_float(k)))
    return buf.getvalue()


def _json_float(x: float):
    return None if math.isnan(x) else x


def fit_json_dict(fit: FitResult, chain: PosteriorChain, **settings) -> dict:
    out = {
        "mean_lambda": fit.mean_lambda,
        "mean_k": fit.mean_k,
        "sd_lambda": fit.sd_lambda,
        "sd_k": fit.sd_k,
        "ci_lambda": list(fit.ci_lambda),
        "ci_k": list(fit.ci_k),
        "rhat_lambda": _json_float(chain.rhat_lambda),
        "rhat_k": _json_float(chain.rhat_k),
        "accept_rate": chain.accept_rate,
        "converged": chain.converged,
        "seed": chain.seed,
    }
    if settings:
        out["settings"] = settings
    return out


def fit_json_text(fit: FitResult, chain: PosteriorChain, **settings) -> str:
    return json.dumps(fit_json_dict(fit, chain, **settings), indent=2, sort_keys=True) + "\n"
