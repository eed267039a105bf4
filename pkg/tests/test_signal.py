import numpy as np
import pytest

from flowshadow.errors import ConfigurationError, MissingDataError, UndefinedDirectionError
from flowshadow.signal import (
    Calibration,
    ProcessedReading,
    SensorSample,
    WhiskerGains,
    apply_calibration,
    direction_theta,
    magnitude_b,
    moving_average,
    normalize_to_array_max,
    process_window,
)


def stream(bx, by=None, wid=1, dt=0.01):
    by = by if by is not None else [0.0] * len(bx)
    return [SensorSample(k * dt, wid, float(x), float(y), 0.0) for k, (x, y) in enumerate(zip(bx, by))]


def brute_causal_mean(x, window):
    return [float(np.mean(x[max(0, i - window + 1):i + 1])) for i in range(len(x))]


def test_identity_calibration_leaves_sample_unchanged():
    s = SensorSample(0.5, 3, -1.25, 4.0, 7.0)
    assert apply_calibration(s, Calibration.identity()) == s


def test_half_axis_gains():
    cal = Calibration({1: WhiskerGains(2.0, 2.0, 4.0, 4.0)})
    out = apply_calibration(SensorSample(0.0, 1, 2.0, -8.0, 3.0), cal)
    assert (out.bx, out.by, out.bz) == (1.0, -2.0, 3.0)


def test_zero_component_stays_zero_on_either_branch():
    cal = Calibration({1: WhiskerGains(2.0, 5.0, 3.0, 7.0)})
    out = apply_calibration(SensorSample(0.0, 1, 0.0, 0.0), cal)
    assert out.bx == 0.0 and out.by == 0.0


def test_missing_whisker_calibration():
    cal = Calibration.from_reference_readings({1: {"+x": 1.0, "-x": 1.0, "+y": 1.0, "-y": 1.0}})
    with pytest.raises(ConfigurationError):
        apply_calibration(SensorSample(0.0, 2, 1.0, 1.0), cal)


def test_gains_must_be_positive():
    with pytest.raises(ConfigurationError):
        WhiskerGains(1.0, 0.0, 1.0, 1.0)


def test_constant_stream_is_fixed_point():
    out = moving_average(stream([2.5] * 12, [-1.0] * 12))
    assert [s.bx for s in out] == [2.5] * 12
    assert [s.by for s in out] == [-1.0] * 12


def test_step_into_window_of_five():
    out = moving_average(stream([0, 0, 0, 0, 5]), 5)
    assert out[-1].bx == pytest.approx(1.0)


def test_window_one_is_identity():
    s = stream([3, -1, 4, 1, -5, 9])
    assert moving_average(s, 1) == s


def test_warm_up_matches_brute_force():
    x = [0.3, -1.2, 4.0, 2.2, 0.0, 7.5, -3.3, 1.1]
    out = moving_average(stream(x), 3)
    np.testing.assert_allclose([s.bx for s in out], brute_causal_mean(x, 3), rtol=0, atol=1e-12)
    assert [s.t for s in out] == [s.t for s in stream(x)]


def test_moving_average_edges():
    assert moving_average([], 5) == []
    with pytest.raises(ConfigurationError):
        moving_average(stream([1.0]), 0)


@pytest.mark.parametrize("bx,by,expected", [
    (1, 0, 0.0), (0, 1, 90.0), (-1, 0, 180.0), (1, 1, 45.0), (1, -1, 315.0), (0, -2, 270.0),
])
def test_direction_theta(bx, by, expected):
    assert direction_theta(bx, by) == pytest.approx(expected)


def test_direction_theta_range_near_seam():
    assert 0.0 <= direction_theta(1.0, -1e-300) < 360.0


def test_direction_of_zero_is_undefined():
    with pytest.raises(UndefinedDirectionError):
        direction_theta(0.0, 0.0)


@pytest.mark.parametrize("bx,by,expected", [(0, 0, 0.0), (3, 4, 5.0), (-3, 4, 5.0)])
def test_magnitude(bx, by, expected):
    assert magnitude_b(bx, by) == expected


def test_process_window_zero_signal_is_gated():
    (r,) = process_window(stream([0.0] * 5))
    assert r.theta_n is None and r.b_norm == 0.0


def test_process_window_relative_magnitudes():
    samples = stream([1.0] * 10, wid=1) + stream([0.2] * 10, wid=2)
    r1, r2 = process_window(samples)
    assert (r1.b_rel, r2.b_rel) == pytest.approx((1.0, 0.2))
    assert (r1.theta_n, r2.theta_n) == (0.0, 0.0)


def test_process_window_single_diagonal():
    (r,) = process_window(stream([1.0] * 5, [1.0] * 5))
    assert r.theta_n == pytest.approx(45.0)
    assert r.b_rel == 1.0


def test_process_window_reports_missing_whiskers():
    with pytest.raises(MissingDataError) as err:
        process_window(stream([1.0] * 5, wid=1), whisker_ids=[1, 2, 4])
    assert err.value.whisker_ids == [2, 4]


def test_process_window_applies_calibration_before_filtering():
    cal = Calibration({1: WhiskerGains(2.0, 1.0, 1.0, 1.0), 2: WhiskerGains()})
    samples = stream([4.0] * 5, wid=1) + stream([1.0] * 5, wid=2)
    r1, r2 = process_window(samples, cal)
    assert r1.b_norm == pytest.approx(2.0)
    assert r2.b_rel == pytest.approx(0.5)


def test_calibration_from_reference_readings():
    cal = Calibration.from_reference_readings({1: {"+x": 2.0, "-x": 4.0, "+y": 1.0, "-y": 0.5}})
    out = apply_calibration(SensorSample(0.0, 1, -4.0, -1.0), cal)
    assert (out.bx, out.by) == (-1.0, -2.0)


def test_normalize_to_array_max_all_zero():
    out = normalize_to_array_max([ProcessedReading(1, None, 0.0), ProcessedReading(2, None, 0.0)])
    assert [r.b_rel for r in out] == [0.0, 0.0]
