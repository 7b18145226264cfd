import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from weibull_cross.weibull_core import (
    Dataset,
    DatasetFormatError,
    DegenerateInputError,
    FailurePoint,
    InconsistentInputError,
    SubjectRecord,
    WeibullParams,
    apply_censoring,
    dataset_csv_text,
    failure_prob,
    fit_two_points,
    parse_dataset_csv,
    sample_times,
    survival_prob,
)

CONTROL = WeibullParams(3.43e-4, 1.08)

rates = st.floats(1e-5, 1e-1)
shapes = st.floats(0.2, 5.0)


@pytest.mark.parametrize("lam, k", [(0, 1), (-1e-3, 1), (1e-3, 0), (math.nan, 1), (1e-3, math.inf)])
def test_params_reject_invalid(lam, k):
    with pytest.raises(ValueError):
        WeibullParams(lam, k)


def test_survival_at_zero_and_at_inverse_rate():
    p = WeibullParams(0.0123, 2.7)
    assert survival_prob(p, 0.0) == 1.0
    assert survival_prob(p, 1 / p.lam) == pytest.approx(math.exp(-1), rel=1e-14)


def test_control_failure_rates():
    assert survival_prob(CONTROL, 365) == pytest.approx(0.8995, abs=5e-4)
    # rounded parameters (k = 1.08 rather than 1.0826) shift this by ~8e-4
    assert failure_prob(CONTROL, 730) == pytest.approx(0.20, abs=1e-3)
    assert failure_prob(WeibullParams(2.33e-4, 0.913), 730) == pytest.approx(0.18, abs=5e-4)
    assert failure_prob(CONTROL, 0) == 0.0


@pytest.mark.parametrize("t", [-1.0, math.nan, math.inf])
def test_survival_rejects_bad_time(t):
    with pytest.raises(ValueError):
        survival_prob(CONTROL, t)


@given(rates, shapes, st.floats(0, 1e4), st.floats(1e-3, 1e4))
def test_survival_strictly_decreasing(lam, k, t1, dt):
    p = WeibullParams(lam, k)
    t2 = t1 + dt
    h1, h2 = (lam * t1) ** k, (lam * t2) ** k
    # beyond exp underflow both sides are 0; below 1 ulp of H both round to 1
    if h2 > 700 or h2 - h1 < 1e-15:
        return
    assert survival_prob(p, t2) < survival_prob(p, t1)


@given(rates, shapes, st.floats(0, 1e4), st.sampled_from([0.25, 2.0, 7.0, 1024.0]))
def test_unit_scale_equivariance(lam, k, t, c):
    # powers of two keep the rescaling exact in floating point
    p, q = WeibullParams(lam, k), WeibullParams(lam / c, k)
    assert survival_prob(q, c * t) == pytest.approx(survival_prob(p, t), rel=1e-14)


def test_fit_two_points_control_values():
    p = fit_two_points(FailurePoint(365, 0.10), FailurePoint(730, 0.20))
    assert p.k == pytest.approx(1.08, abs=0.005)
    assert p.lam == pytest.approx(3.43e-4, abs=0.005e-4)


def test_fit_two_points_treatment_values():
    p = fit_two_points(FailurePoint(365, 0.10), FailurePoint(730, 0.18))
    assert p.k == pytest.approx(0.913, abs=5e-4)
    assert p.lam == pytest.approx(2.33e-4, abs=0.005e-4)


def test_fit_two_points_exponential_case():
    # 0.81 = 0.9**2: cumulative hazard doubles with time
    p = fit_two_points(FailurePoint(365, 0.10), FailurePoint(730, 0.19))
    assert p.k == pytest.approx(1.0, abs=1e-12)
    assert p.lam == pytest.approx(-math.log(0.9) / 365, rel=1e-12)


def test_fit_two_points_reproduces_inputs():
    a, b = FailurePoint(120.0, 0.03), FailurePoint(900.0, 0.41)
    p = fit_two_points(a, b)
    assert abs(failure_prob(p, a.t) - a.f) < 1e-10
    assert abs(failure_prob(p, b.t) - b.f) < 1e-10


def test_fit_two_points_errors():
    with pytest.raises(DegenerateInputError):
        fit_two_points(FailurePoint(365, 0.1), FailurePoint(365, 0.2))
    with pytest.raises(DegenerateInputError):
        fit_two_points(FailurePoint(365, 0.1), FailurePoint(730, 0.1))
    with pytest.raises(InconsistentInputError):
        fit_two_points(FailurePoint(365, 0.2), FailurePoint(730, 0.1))


@settings(max_examples=300)
@given(rates, shapes, st.floats(1.0, 2000.0), st.floats(1.05, 5.0))
def test_fit_two_points_round_trip(lam, k, t1, ratio):
    p = WeibullParams(lam, k)
    t2 = t1 * ratio
    f1, f2 = failure_prob(p, t1), failure_prob(p, t2)
    # keep both failure probabilities well inside (0, 1) so they carry the parameters
    if not (1e-6 < f1 and f2 < 1 - 1e-6):
        return
    q = fit_two_points(FailurePoint(t1, f1), FailurePoint(t2, f2))
    assert q.lam == pytest.approx(lam, rel=1e-9)
    assert q.k == pytest.approx(k, rel=1e-9)


def test_sample_times_basic_contracts():
    assert sample_times(CONTROL, 0, 1).size == 0
    a = sample_times(CONTROL, 50, 7)
    b = sample_times(CONTROL, 50, 7)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_times(CONTROL, 50, 8))
    with pytest.raises(ValueError):
        sample_times(CONTROL, -1, 0)


def test_sample_times_one_year_failure_fraction():
    t = sample_times(CONTROL, 100_000, 2024)
    assert np.mean(t <= 365) == pytest.approx(0.10, abs=0.005)


def test_sample_times_ks_against_closed_form():
    n = 100_000
    t = sample_times(CONTROL, n, 99)
    d = stats.kstest(t, lambda x: failure_prob(CONTROL, np.asarray(x))).statistic
    assert d < 1.628 / math.sqrt(n)


def test_apply_censoring_definition():
    ds = apply_censoring([100.0, 800.0], 730.0)
    assert ds.records == (SubjectRecord(100.0, True), SubjectRecord(730.0, False))
    assert (ds.n, ds.e) == (2, 1)
    empty = apply_censoring([], 730.0)
    assert (empty.n, empty.e) == (0, 0)
    with pytest.raises(ValueError):
        apply_censoring([1.0], 0.0)


def test_apply_censoring_event_fraction():
    ds = apply_censoring(sample_times(CONTROL, 100_000, 5), 730.0)
    assert ds.e / ds.n == pytest.approx(0.20, abs=0.006)
    assert ds.times.max() <= 730.0


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.array([1.0, -2.0]), np.array([True, False]))
    ds = Dataset.from_records([SubjectRecord(3.0, True), SubjectRecord(4.0, False)])
    assert ds == Dataset(np.array([3.0, 4.0]), np.array([True, False]))
    with pytest.raises(ValueError):
        ds.times[0] = 1.0


def test_csv_round_trip():
    c = apply_censoring(sample_times(CONTROL, 20, 1), 730)
    t = apply_censoring(sample_times(WeibullParams(2e-4, 0.9), 15, 2), 730)
    text = dataset_csv_text({0: c, 1: t})
    assert text.startswith("arm,time,event\n")
    back = parse_dataset_csv(text)
    assert back[0] == c and back[1] == t


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("a,b,c\n", 1),
        ("arm,time,event\n0,1.0,1\n2,1.0,1\n", 3),
        ("arm,time,event\n0,abc,1\n", 2),
        ("arm,time,event\n0,-1,1\n", 2),
        ("arm,time,event\n0,1.0,yes\n", 2),
        ("arm,time,event\n0,1.0\n", 2),
    ],
)
def test_csv_errors_carry_line_numbers(text, line):
    with pytest.raises(DatasetFormatError) as err:
        parse_dataset_csv(text)
    assert err.value.line == line
