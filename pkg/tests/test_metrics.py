import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from steercomp import metrics
from steercomp.errors import LengthMismatch, SeriesTooShort, ZeroVariance
from steercomp.tracking import ReferencePath, double_lane_change_path

# signal values at micro-degree resolution; subnormals would only test float underflow
values = st.floats(-1e3, 1e3).map(lambda v: round(v, 6))
series = st.integers(3, 60).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=values), arrays(np.float64, n, elements=values)))


def test_rmse_examples():
    assert metrics.rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert metrics.rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert math.sqrt(12.5) == pytest.approx(3.5355, abs=1e-4)
    with pytest.raises(LengthMismatch):
        metrics.rmse([1, 2], [1, 2, 3])


@given(series)
def test_rmse_symmetric_non_negative(pair):
    a, b = pair
    r = metrics.rmse(a, b)
    assert r == metrics.rmse(b, a)
    assert r >= 0
    assert (r == 0) == np.array_equal(a, b)


def _pure_delay(samples, n=300, seed=0):
    rng = np.random.default_rng(seed)
    cmd = np.cumsum(rng.normal(size=n))
    measured = np.concatenate([np.zeros(samples), cmd[: n - samples]])
    return cmd, measured


def test_identify_delay_pure_delay():
    cmd, measured = _pure_delay(4)
    delay, curve = metrics.identify_delay(cmd, measured, 0.05)
    assert delay == 0.20
    assert dict(curve)[0.2] == 0.0
    assert [dt for dt, _ in curve] == [round(0.02 * i, 12) for i in range(21)]


def test_identify_delay_identity():
    cmd, _ = _pure_delay(0)
    assert metrics.identify_delay(cmd, cmd, 0.05)[0] == 0.0


@pytest.mark.parametrize("samples", [0, 2, 4, 6, 8])
def test_identify_delay_exact_on_grid(samples):
    # even lags at T = 0.05 are multiples of 0.1 s and so lie on the 0.02 s grid
    cmd, measured = _pure_delay(samples, seed=samples)
    delay, curve = metrics.identify_delay(cmd, measured, 0.05)
    assert delay == pytest.approx(0.05 * samples, abs=1e-12)
    assert dict(curve)[delay] == 0.0


@pytest.mark.parametrize("T,samples", [(0.02, 7), (0.04, 3), (0.1, 2), (0.02, 20)])
def test_identify_delay_exact_for_other_periods(T, samples):
    cmd, measured = _pure_delay(samples, seed=samples)
    delay, curve = metrics.identify_delay(cmd, measured, T)
    assert delay == pytest.approx(T * samples, abs=1e-12)
    assert min(r for _, r in curve) == 0.0


def test_identify_delay_ties_prefer_smaller_shift():
    cmd = np.ones(100)
    assert metrics.identify_delay(cmd, cmd, 0.05)[0] == 0.0


def test_identify_delay_too_short():
    with pytest.raises(SeriesTooShort):
        metrics.identify_delay(np.ones(18), np.ones(18), 0.05)


def test_shift_right_fractional():
    out = metrics.shift_right([0.0, 10.0, 20.0, 30.0], 1.5)
    assert np.isnan(out[:2]).all()
    assert out[2:].tolist() == [5.0, 15.0]


def test_cc_examples():
    h = np.array([1.0, -2.0, 3.0, -2.0])
    assert metrics.correlation_coefficient(h, h) == pytest.approx(1.0)
    assert metrics.correlation_coefficient(h, -h) == pytest.approx(-1.0)
    with pytest.raises(ZeroVariance):
        metrics.correlation_coefficient(h, np.full(4, 2.0))


def test_ce_examples():
    h = np.array([1.0, 4.0, 2.0, 7.0, 6.0])
    assert metrics.coefficient_of_efficiency(h, h) == 1.0
    assert metrics.coefficient_of_efficiency(h, np.full(5, h.mean())) == pytest.approx(0.0, abs=1e-15)
    worse = h.mean() - 2 * (h - h.mean())
    # direct summation oracle: 1 - 9 * sum(d^2) / sum(d^2)
    assert metrics.coefficient_of_efficiency(h, worse) == pytest.approx(-8.0)
    with pytest.raises(ZeroVariance):
        metrics.coefficient_of_efficiency(np.ones(5), h)


@given(series, st.floats(0.01, 100), st.floats(-100, 100))
def test_cc_affine_invariant(pair, scale, shift):
    a, b = pair
    assume(np.ptp(a) > 1e-3 and np.ptp(b) > 1e-3)
    cc = metrics.correlation_coefficient(a, b)
    assert -1.0 <= cc <= 1.0
    assert metrics.correlation_coefficient(a, scale * b + shift) == pytest.approx(cc, abs=1e-9)
    assert metrics.correlation_coefficient(scale * a + shift, b) == pytest.approx(cc, abs=1e-9)


@given(series)
def test_ce_one_iff_identical(pair):
    a, b = pair
    assume(np.ptp(a) > 0)
    ce = metrics.coefficient_of_efficiency(a, b)
    assert ce <= 1.0
    assert metrics.coefficient_of_efficiency(a, a) == 1.0
    if not np.array_equal(a, b):
        assert ce < 1.0


def test_lateral_error_examples():
    s = np.arange(0, 50.25, 0.25)
    line = ReferencePath(s, s, np.zeros_like(s))
    on = metrics.lateral_error(s[::7], np.zeros_like(s[::7]), line)
    assert on.max == 0.0
    assert metrics.lateral_error([10.0], [0.5], line).max == pytest.approx(0.5)
    assert metrics.lateral_error([10.0], [-0.5], line).series[0] == pytest.approx(-0.5)


def test_lateral_error_beyond_end_matches_brute_force():
    path = double_lane_change_path()
    px, py = 230.0, 1.2
    res = metrics.lateral_error([px], [py], path)
    assert res.extrapolated[0]
    # brute force: densify the extended final segment
    hx, hy = path.x[-1] - path.x[-2], path.y[-1] - path.y[-2]
    t = np.linspace(0, 400, 400001)
    d = np.min(np.hypot(path.x[-2] + t * hx - px, path.y[-2] + t * hy - py))
    assert abs(res.series[0]) == pytest.approx(d, abs=1e-6)


def test_lateral_error_empty():
    with pytest.raises(SeriesTooShort):
        metrics.lateral_error([], [], double_lane_change_path())


def test_oscillation_examples():
    assert metrics.oscillation_index([3.0] * 10) == 0.0
    assert metrics.oscillation_index([0, 1, 0, 1]) == 1.0
    assert metrics.oscillation_index(0.7 * np.arange(20)) == pytest.approx(0.7)


@given(arrays(np.float64, st.integers(2, 50), elements=values), values)
def test_oscillation_shift_invariant(x, c):
    assert metrics.oscillation_index(x + c) == pytest.approx(metrics.oscillation_index(x), abs=1e-9)


def test_report_serialization():
    rep = metrics.MetricsReport(rmse=1.5, max_lateral_error=0.1, oscillation=2.0)
    body = rep.to_json()
    assert "NaN" not in body and '"rmse": 1.5' in body
    header, row = rep.to_csv_row().splitlines()
    assert header.split(",")[0] == "rmse"
    assert float(row.split(",")[0]) == 1.5


def test_compare_runs():
    a = metrics.MetricsReport(max_lateral_error=0.2, oscillation=4.0)
    b = metrics.MetricsReport(max_lateral_error=0.1, oscillation=3.0)
    cmp = metrics.compare_runs(a, b)
    assert cmp == {"max_lateral_error_improvement_pct": 50.0, "oscillation_reduction_pct": 25.0}
