"""Weibull survival curves, two-point parameterization, and censored sampling.

Survival is ``S(t) = exp(-(lam * t) ** k)`` with ``lam`` in 1/day and ``k``
dimensionless. Failure is the complement ``1 - S(t)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_CENSOR_TIME = 730.0


class DegenerateInputError(ValueError):
    """Inputs that do not determine a unique answer."""


class InconsistentInputError(ValueError):
    """Inputs that no Weibull curve can satisfy."""


class DatasetFormatError(ValueError):
    """Malformed dataset CSV. ``line`` is the 1-based line number, if known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _check_positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class WeibullParams:
    """One arm's failure rate ``lam`` (1/day) and shape ``k``."""

    lam: float
    k: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_positive_finite("lambda", self.lam))
        object.__setattr__(self, "k", _check_positive_finite("k", self.k))

    def scaled(self, target: str, factor: float) -> "WeibullParams":
        """Return a copy with ``target`` ('lam' or 'k') multiplied by ``factor``."""
        if target == "lam":
            return WeibullParams(self.lam * factor, self.k)
        if target == "k":
            return WeibullParams(self.lam, self.k * factor)
        raise ValueError(f"unknown parameter {target!r}")

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "k": self.k}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeibullParams":
        return cls(d["lambda"], d["k"])


@dataclass(frozen=True)
class SubjectRecord:
    time: float
    event: bool

    def __post_init__(self):
        t = float(self.time)
        if not math.isfinite(t) or t < 0.0:
            raise ValueError(f"time must be finite and non-negative, got {self.time!r}")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "event", bool(self.event))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Follow-up times and event flags for one arm.

    Stored column-wise as read-only numpy arrays; ``records`` rebuilds the
    per-subject view on demand.
    """

    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        events = np.array(self.events, dtype=bool).reshape(-1)
        if times.shape != events.shape:
            raise ValueError("times and events must have the same length")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValueError("times must be finite and non-negative")
        times.flags.writeable = False
        events.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)

    @classmethod
    def from_records(cls, records: Iterable[SubjectRecord]) -> "Dataset":
        records = list(records)
        return cls(
            np.array([r.time for r in records], dtype=float),
            np.array([r.event for r in records], dtype=bool),
        )

    @property
    def records(self) -> tuple[SubjectRecord, ...]:
        return tuple(SubjectRecord(t, e) for t, e in zip(self.times.tolist(), self.events.tolist()))

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def e(self) -> int:
        return int(np.count_nonzero(self.events))

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.events, other.events)

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, e={self.e})"


@dataclass(frozen=True)
class FailurePoint:
    """Cumulative failure probability ``f`` reached by day ``t``."""

    t: float
    f: float

    def __post_init__(self):
        _check_positive_finite("t", self.t)
        if not 0.0 < self.f < 1.0:
            raise ValueError(f"failure probability must lie in (0, 1), got {self.f!r}")


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"time must be finite and non-negative, got {t!r}")
    return arr


def cumulative_hazard(p: WeibullParams, t):
    """``(lam * t) ** k``; accepts scalars or arrays."""
    arr = _check_time(t)
    with np.errstate(over="ignore"):
        out = np.power(p.lam * arr, p.k)
    return float(out) if out.ndim == 0 else out


def survival_prob(p: WeibullParams, t):
    """Probability of remaining event-free through day ``t``."""
    out = np.exp(-np.asarray(cumulative_hazard(p, t)))
    return float(out) if out.ndim == 0 else out


def failure_prob(p: WeibullParams, t):
    """Cumulative event probability by day ``t``.

    Computed as ``-expm1(-H)`` so small failure probabilities keep full
    relative precision.
    """
    out = -np.expm1(-np.asarray(cumulative_hazard(p, t)))
    return float(out) if out.ndim == 0 else out


def fit_two_points(a: FailurePoint, b: FailurePoint) -> WeibullParams:
    """Weibull curve passing through two cumulative failure points.

    On log-log axes the cumulative hazard ``-ln(1 - f)`` is a straight line
    in ``ln t`` with slope ``k``; the intercept fixes ``lam``.

    Raises:
        DegenerateInputError: equal times or equal failure probabilities.
        InconsistentInputError: failure does not increase with time.
    """
    if not isinstance(a, FailurePoint):
        a = FailurePoint(*a)
    if not isinstance(b, FailurePoint):
        b = FailurePoint(*b)
    if a.t == b.t:
        raise DegenerateInputError("the two failure points share a time")
    if a.f == b.f:
        raise DegenerateInputError("equal failure probabilities imply k = 0")
    if (b.t - a.t) * (b.f - a.f) < 0:
        raise InconsistentInputError("failure probability must increase with time")
    h_a = -math.log1p(-a.f)
    h_b = -math.log1p(-b.f)
    k = math.log(h_b / h_a) / math.log(b.t / a.t)
    lam = h_a ** (1.0 / k) / a.t
    return WeibullParams(lam, k)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_times(p: WeibullParams, n: int, seed) -> np.ndarray:
    """Draw ``n`` event times by inverting the survival function."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = _as_generator(seed)
    # 1 - U[0, 1) lies in (0, 1], so the log is finite
    u = 1.0 - rng.random(n)
    return np.power(-np.log(u), 1.0 / p.k) / p.lam


def apply_censoring(times: Sequence[float], c: float = DEFAULT_CENSOR_TIME) -> Dataset:
    """Administratively censor raw event times at study end ``c``."""
    c = float(c)
    if not math.isfinite(c) or c <= 0:
        raise ValueError(f"censor time must be positive, got {c!r}")
    t = np.asarray(times, dtype=float).reshape(-1)
    return Dataset(np.minimum(t, c), t <= c)


# -- CSV serialization: header ``arm,time,event`` -----------------------------

DATASET_HEADER = ("arm", "time", "event")


def format_float(x: float) -> str:
    """Shortest round-trip decimal; NaN renders as an empty field."""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def dataset_csv_text(arms: Mapping[int, Dataset]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for arm in sorted(arms):
        if arm not in (0, 1):
            raise ValueError(f"arm must be 0 or 1, got {arm!r}")
        ds = arms[arm]
        for t, e in zip(ds.times.tolist(), ds.events.tolist()):
            w.writerow((arm, format_float(t), int(e)))
    return buf.getvalue()


def write_dataset_csv(path, arms: Mapping[int, Dataset]) -> None:
    Path(path).write_text(dataset_csv_text(arms))


def parse_dataset_csv(text: str) -> dict[int, Dataset]:
    """Parse ``arm,time,event`` rows into one Dataset per arm present."""
    rows = csv.reader(io.StringIO(text))
    try:
        header = next(rows)
    except StopIteration:
        raise DatasetFormatError("empty file", line=1) from None
    if tuple(h.strip() for h in header) != DATASET_HEADER:
        raise DatasetFormatError(f"expected header {','.join(DATASET_HEADER)}", line=1)
    columns: dict[int, tuple[list, list]] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != 3:
            raise DatasetFormatError(f"expected 3 fields, got {len(row)}", line=lineno)
        arm_s, time_s, event_s = (f.strip() for f in row)
        if arm_s not in ("0", "1"):
            raise DatasetFormatError(f"arm must be 0 or 1, got {arm_s!r}", line=lineno)
        if event_s not in ("0", "1"):
            raise DatasetFormatError(f"event must be 0 or 1, got {event_s!r}", line=lineno)
        try:
            t = float(time_s)
        except ValueError:
            raise DatasetFormatError(f"time is not a number: {time_s!r}", line=lineno) from None
        if not math.isfinite(t) or t < 0:
            raise DatasetFormatError(f"time must be finite and non-negative: {time_s!r}", line=lineno)
        times, events = columns.setdefault(int(arm_s), ([], []))
        times.append(t)
        events.append(event_s == "1")
    return {arm: Dataset(np.array(t), np.array(e, dtype=bool)) for arm, (t, e) in columns.items()}


def read_dataset_csv(path) -> dict[int, Dataset]:
    return parse_dataset_csv(Path(path).read_text())
