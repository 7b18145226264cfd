"""Where two Weibull survival curves cross, and how parameter errors move it.

Two curves ``exp(-(lam0 t)^k0)`` and ``exp(-(lam1 t)^k1)`` meet where their
cumulative hazards agree, which has the closed-form solution
``t = exp(-(k1 ln lam1 - k0 ln lam0) / (k1 - k0))``.

The sensitivity laws below express the crossing-time ratio ``t'/t`` after
a relative perturbation ``phi`` of one parameter. ``law_lambda`` and
``law_k_z`` are exact; ``law_k_gamma`` agrees with the exact ratio only to
first order in ``phi``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .weibull_core import FailurePoint, WeibullParams, fit_two_points, format_float


class CrossingKind(str, Enum):
    UNIQUE = "unique"
    NONE_EQUAL_SHAPES = "none_equal_shapes"
    IDENTICAL_CURVES = "identical_curves"


TARGETS = ("lambda0", "lambda1", "k0", "k1")


@dataclass(frozen=True)
class CurvePair:
    control: WeibullParams
    treatment: WeibullParams

    def swapped(self) -> "CurvePair":
        return CurvePair(self.treatment, self.control)


@dataclass(frozen=True)
class CrossingResult:
    kind: CrossingKind
    t_chi: float | None = None

    @property
    def unique(self) -> bool:
        return self.kind is CrossingKind.UNIQUE

    def within(self, window: tuple[float, float]) -> bool:
        """True when a unique crossing falls inside the closed ``window`` of days."""
        start, end = window
        return self.unique and start <= self.t_chi <= end

    def describe(self) -> str:
        if self.kind is CrossingKind.UNIQUE:
            return f"unique crossing at t_chi = {self.t_chi!r} days"
        if self.kind is CrossingKind.NONE_EQUAL_SHAPES:
            return "no crossing (equal shapes)"
        return "no crossing (identical curves)"


@dataclass(frozen=True)
class Perturbation:
    """Multiply ``target`` by ``1 + phi``."""

    target: str
    phi: float

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        if not self.phi > -1.0:
            raise ValueError(f"phi must exceed -1, got {self.phi!r}")


@dataclass(frozen=True)
class SensitivityContext:
    gamma: float
    z: float
    r: float | None


def crossing_point(pair: CurvePair) -> CrossingResult:
    c, t = pair.control, pair.treatment
    if c.k == t.k:
        if c.lam == t.lam:
            return CrossingResult(CrossingKind.IDENTICAL_CURVES)
        return CrossingResult(CrossingKind.NONE_EQUAL_SHAPES)
    # written symmetrically in the two arms so swapping them is bit-exact
    num = t.k * math.log(t.lam) - c.k * math.log(c.lam)
    den = t.k - c.k
    try:
        t_chi = math.exp(-num / den)
    except OverflowError:
        # nearly equal shapes push the crossing past the float range
        t_chi = math.inf
    return CrossingResult(CrossingKind.UNIQUE, t_chi)


def relative_error(t_perturbed: float, t_true: float) -> float:
    if not t_true > 0:
        raise ValueError(f"t_true must be positive, got {t_true!r}")
    return t_perturbed / t_true - 1.0


def perturb_pair(pair: CurvePair, pert: Perturbation) -> CurvePair:
    factor = 1.0 + pert.phi
    arm, param = ("control" if pert.target.endswith("0") else "treatment"), pert.target[:-1]
    param = "lam" if param == "lambda" else "k"
    if arm == "control":
        return CurvePair(pair.control.scaled(param, factor), pair.treatment)
    return CurvePair(pair.control, pair.treatment.scaled(param, factor))


def perturbed_crossing(pair: CurvePair, pert: Perturbation) -> CrossingResult:
    """Exact crossing after perturbing one parameter."""
    return crossing_point(perturb_pair(pair, pert))


def sensitivity_context(pair: CurvePair) -> SensitivityContext:
    """Shape ratio, failure ratio and the log-ratio ``r`` of a crossing pair."""
    gamma = pair.treatment.k / pair.control.k
    z = pair.treatment.lam / pair.control.lam
    res = crossing_point(pair)
    r = None
    if z != 1.0 and res.unique:
        r = math.log(pair.control.lam * res.t_chi) / math.log(z)
    return SensitivityContext(gamma, z, r)


def _unique_t_chi(pair: CurvePair) -> float:
    res = crossing_point(pair)
    if not res.unique:
        raise ValueError(f"pair has no unique crossing: {res.kind.value}")
    return res.t_chi


def law_lambda(phi: float, k0: float, k1: float) -> float:
    """Crossing-time ratio after scaling the treatment rate by ``1 + phi``.

    ``(1 / (1 + phi)) ** (1 / (1 - k0 / k1))``. The exponent is a power law
    in the relative shape difference, so curves with similar shapes amplify
    rate errors.
    """
    if k0 == k1:
        raise ValueError("k0 == k1: exponent undefined")
    if not phi > -1.0:
        raise ValueError("phi must exceed -1")
    return (1.0 / (1.0 + phi)) ** (1.0 / (1.0 - k0 / k1))


def law_k_gamma(phi: float, pair: CurvePair) -> float:
    """Shape-ratio form of the treatment-shape law (first-order accurate).

    ``(lam0 t) ** (1 / ((1 - gamma) * (1/phi + 1/(1 + 1/gamma))))``
    """
    gamma = pair.treatment.k / pair.control.k
    if gamma == 1.0:
        raise ValueError("gamma == 1: curves with equal shapes do not cross")
    if phi == 0.0:
        raise ValueError("phi == 0: expression undefined (the limit is 1)")
    t_chi = _unique_t_chi(pair)
    exponent = 1.0 / ((1.0 - gamma) * (1.0 / phi + 1.0 / (1.0 + 1.0 / gamma)))
    return (pair.control.lam * t_chi) ** exponent


def law_k_z(phi: float, pair: CurvePair) -> float:
    """Failure-ratio form of the treatment-shape law.

    ``z ** (1 / ((1 / (1 + r)) * (1 / (phi r) - 1)))`` with ``z = lam1/lam0``
    and ``r = ln(lam0 t) / ln z``. Evaluated as the equivalent
    ``z ** ((1 + r) phi r / (1 - phi r))``, which is finite at ``phi = 0``.
    """
    z = pair.treatment.lam / pair.control.lam
    if z == 1.0:
        raise ValueError("z == 1: r undefined")
    t_chi = _unique_t_chi(pair)
    r = math.log(pair.control.lam * t_chi) / math.log(z)
    pr = phi * r
    if pr == 1.0:
        raise ValueError("phi * r == 1: singular exponent")
    return z ** ((1.0 + r) * pr / (1.0 - pr))


def exact_ratio(pair: CurvePair, pert: Perturbation) -> float | None:
    """``t'/t`` for a perturbation, or None when either side does not cross."""
    base = crossing_point(pair)
    moved = perturbed_crossing(pair, pert)
    if not (base.unique and moved.unique):
        return None
    return moved.t_chi / base.t_chi


# -- pairs with a pinned crossing --------------------------------------------


def treatment_for_shape(control: WeibullParams, k1: float, t_chi: float) -> WeibullParams:
    """Treatment arm with shape ``k1`` that crosses ``control`` at ``t_chi``."""
    if k1 == control.k:
        raise ValueError("treatment shape equals control shape: no crossing")
    lam1 = math.exp((control.k / k1) * math.log(control.lam * t_chi)) / t_chi
    return WeibullParams(lam1, k1)


def treatment_for_rate(control: WeibullParams, lam1: float, t_chi: float) -> WeibullParams:
    """Treatment arm with rate ``lam1`` that crosses ``control`` at ``t_chi``."""
    denom = math.log(lam1 * t_chi)
    if denom == 0.0:
        raise ValueError("lam1 * t_chi == 1: treatment shape undefined")
    k1 = control.k * math.log(control.lam * t_chi) / denom
    if k1 <= 0 or not math.isfinite(k1):
        raise ValueError(f"solved treatment shape is not positive: {k1!r}")
    if k1 == control.k:
        raise ValueError("solved treatment shape equals control shape")
    return WeibullParams(lam1, k1)


def example_pair() -> CurvePair:
    """Control failing 10%/20% and treatment 10%/18% at days 365/730.

    Both arms reach 10% failure on day 365, so they cross there.
    """
    control = fit_two_points(FailurePoint(365.0, 0.10), FailurePoint(730.0, 0.20))
    treatment = fit_two_points(FailurePoint(365.0, 0.10), FailurePoint(730.0, 0.18))
    return CurvePair(control, treatment)


# -- sensitivity tables ------------------------------------------------------

GRID_HEADER = (
    "abscissa",
    "abscissa_kind",
    "phi",
    "target",
    "exact_ratio",
    "law_ratio",
    "exact_rel_err",
    "law_rel_err",
)


@dataclass(frozen=True)
class Sweep:
    """Vary the shape ratio (``gamma``) or failure ratio (``z``) of the pair.

    The control arm and the crossing time stay fixed; the treatment's other
    parameter is re-solved to keep the crossing in place.
    """

    kind: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("gamma", "z"):
            raise ValueError(f"sweep kind must be 'gamma' or 'z', got {self.kind!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValueError("sweep values must be non-empty")


@dataclass(frozen=True)
class GridRow:
    abscissa: float
    abscissa_kind: str
    phi: float
    target: str
    exact_ratio: float | None
    law_ratio: float | None

    @property
    def exact_rel_err(self) -> float | None:
        return None if self.exact_ratio is None else self.exact_ratio - 1.0

    @property
    def law_rel_err(self) -> float | None:
        return None if self.law_ratio is None else self.law_ratio - 1.0


def _law_ratio(pair: CurvePair, target: str, phi: float, kind: str) -> float | None:
    if target == "lambda1":
        if pair.control.k == pair.treatment.k:
            return None
        return law_lambda(phi, pair.control.k, pair.treatment.k)
    if target == "k1":
        if phi == 0.0:
            return 1.0
        if kind == "gamma":
            return law_k_gamma(phi, pair)
        return law_k_z(phi, pair)
    # no closed-form law is attached to the control parameters
    return None


def sensitivity_grid(
    pair: CurvePair,
    target: str,
    phi_grid: Sequence[float],
    sweep: Sweep | None = None,
) -> list[GridRow]:
    """Exact and law-predicted crossing ratios over a perturbation grid.

    Without a sweep the abscissa is ``phi``. With a sweep the abscissa is the
    swept ratio and every ``phi`` is evaluated at every sweep value. Points
    where a crossing or law is undefined come back with ``None`` columns.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    phis = [float(p) for p in phi_grid]
    if not phis:
        raise ValueError("phi grid must be non-empty")
    # (abscissa, abscissa kind, pair at that abscissa or None, phi)
    points: list[tuple[float, str, CurvePair | None, float]]
    if sweep is None:
        points = [(p, "phi", pair, p) for p in phis]
    else:
        t_chi = _unique_t_chi(pair)
        points = []
        for v in sweep.values:
            try:
                if sweep.kind == "gamma":
                    moved = CurvePair(pair.control, treatment_for_shape(pair.control, v * pair.control.k, t_chi))
                else:
                    moved = CurvePair(pair.control, treatment_for_rate(pair.control, v * pair.control.lam, t_chi))
            except ValueError:
                moved = None
            points.extend((v, sweep.kind, moved, p) for p in phis)

    rows = []
    for abscissa, kind, current, phi in points:
        exact = law = None
        if current is not None and phi > -1.0:
            exact = exact_ratio(current, Perturbation(target, phi))
            try:
                law = _law_ratio(current, target, phi, kind)
            except ValueError:
                law = None
        rows.append(GridRow(abscissa, kind, phi, target, exact, law))
    return rows


def grid_csv_text(rows: Sequence[GridRow]) -> str:
    def fmt(x):
        return "" if x is None else format_float(x)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_HEADER)
    for row in rows:
        w.writerow(
            (
                fmt(row.abscissa),
                row.abscissa_kind,
                fmt(row.phi),
                row.target,
                fmt(row.exact_ratio),
                fmt(row.law_ratio),
                fmt(row.exact_rel_err),
                fmt(row.law_rel_err),
            )
        )
    return buf.getvalue()
