"""Solve-probability table: shipped data, measurement, extrapolation."""
import numpy as np
import pytest

from greenbtc.calibration import (
    Calibration,
    LevelEstimate,
    _measure_level,
    calibrate,
    default_calibration,
)
from greenbtc.eccpow import DIFFICULTY_TABLE


def make_level(level, n, p_hat, extrapolated=False) -> LevelEstimate:
    return LevelEstimate(
        level=level, n=n, wc=3, wr=6, max_iter=20,
        p_hat=p_hat, std_err=0.0, samples=100, extrapolated=extrapolated,
    )


def test_shipped_table_shape():
    cal = default_calibration()
    assert len(cal.levels) == len(DIFFICULTY_TABLE)
    for est, params in zip(cal.levels, DIFFICULTY_TABLE):
        assert est.level == params.level
        assert est.n == params.n
        assert est.wc == params.wc and est.wr == params.wr
    ps = [cal.p_hat(i) for i in range(len(cal.levels))]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    measured = [e for e in cal.levels if not e.extrapolated]
    extrapolated = [e for e in cal.levels if e.extrapolated]
    assert len(measured) >= 4 and len(extrapolated) >= 1
    # the extrapolated tail starts after every measured level
    assert max(e.level for e in measured) < min(e.level for e in extrapolated)
    assert 0.2 < cal.p_hat(0) < 0.3
    assert 0.02 < cal.p_hat(1) < 0.05


def test_work_strictly_increasing_with_tie_breaking():
    cal = default_calibration()
    works = [cal.work(i) for i in range(len(cal.levels))]
    assert all(a < b for a, b in zip(works, works[1:]))
    tied = Calibration(levels=(make_level(0, 16, 0.5), make_level(1, 24, 0.5)))
    assert tied.work(0) == 2 and tied.work(1) == 3


def test_json_round_trip():
    cal = default_calibration()
    again = Calibration.from_json(cal.to_json())
    assert again == cal


def test_validation_rejects_bad_tables():
    with pytest.raises(ValueError):
        Calibration(levels=(make_level(1, 16, 0.5),))
    with pytest.raises(ValueError):
        Calibration(levels=(make_level(0, 16, 0.0),))


def test_measure_level_deterministic():
    a = _measure_level(DIFFICULTY_TABLE[0], 300, seed=9)
    b = _measure_level(DIFFICULTY_TABLE[0], 300, seed=9)
    assert a == b
    c = _measure_level(DIFFICULTY_TABLE[0], 300, seed=10)
    assert a != c


def test_calibrate_measured_levels_match_shipped():
    cal = calibrate(DIFFICULTY_TABLE[:2], samples=1200, seed=77)
    shipped = default_calibration()
    assert not cal.levels[0].extrapolated
    assert not cal.levels[1].extrapolated
    for level in (0, 1):
        se = np.sqrt(shipped.p_hat(level) * (1 - shipped.p_hat(level)) / 1200)
        assert abs(cal.p_hat(level) - shipped.p_hat(level)) < 4 * se


def test_calibrate_extrapolates_unresolved_levels():
    cal = calibrate(DIFFICULTY_TABLE[:4], samples=800, seed=78)
    assert not cal.levels[0].extrapolated and not cal.levels[1].extrapolated
    assert cal.levels[2].extrapolated and cal.levels[3].extrapolated
    ps = [cal.p_hat(i) for i in range(4)]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    assert cal.levels[2].std_err == 0.0


def test_calibrate_requires_two_resolved_levels():
    with pytest.raises(ValueError, match="resolvable"):
        calibrate(DIFFICULTY_TABLE[3:6], samples=40, seed=79)


def test_calibrate_jobs_do_not_change_result():
    serial = calibrate(DIFFICULTY_TABLE[:2], samples=1500, seed=80, jobs=1)
    parallel = calibrate(DIFFICULTY_TABLE[:2], samples=1500, seed=80, jobs=2)
    assert serial == parallel
