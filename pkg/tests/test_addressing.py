import numpy as np
import pytest

from omarray.addressing import (CrosstalkReport, DegenerateAbscissaError, DriveSeries,
                                FrequencyCollisionError, crosstalk_slopes, run_drive_series)
from omarray.analysis import OccupationEstimate
from omarray.coupling import CavityConfig
from omarray.scenarios import drive_pair
from omarray.spectra import DetectionConfig

KHZ = 2 * np.pi * 1e3
AMPS = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
# 0.6^2 / (5^2 + 0.6^2)
RATIO_5KHZ = 0.0141955835962145


@pytest.fixture(scope="module")
def setup():
    return drive_pair(), CavityConfig(), DetectionConfig()


@pytest.fixture(scope="module")
def noiseless(setup):
    pair, cav, det = setup
    return run_drive_series(pair, "alpha", AMPS, cav, det, seed=0, noiseless=True)


def series_from(values, amps=(0.0, 1.0, 2.0, 3.0)):
    rows = [[OccupationEstimate(v, 0.1, "phase_peak") for v in row] for row in values]
    return DriveSeries("a", ("a", "b"), np.array(amps), rows)


def test_noiseless_ratio_matches_lorentzian(noiseless):
    rep = crosstalk_slopes(noiseless)
    assert rep.slope_ratio == pytest.approx(RATIO_5KHZ, rel=1e-6)
    assert rep.target_slope == pytest.approx(1.0, rel=1e-6)
    assert rep.intercepts[0] == pytest.approx(1.3, rel=1e-6)
    assert rep.intercepts[1] == pytest.approx(1.3, rel=1e-6)
    assert noiseless.cooperativities == pytest.approx((1.0, 1.0), rel=1e-6)


def test_noiseless_series_is_affine(noiseless):
    v = noiseless.values()
    x = noiseless.amplitudes
    for k in range(2):
        coef = np.polyfit(x, v[:, k], 1)
        resid = v[:, k] - np.polyval(coef, x)
        assert np.max(np.abs(resid)) < 1e-6 * np.max(np.abs(v[:, k]))


def test_ratio_is_scale_invariant(setup, noiseless):
    pair, cav, det = setup
    scaled = run_drive_series(pair, "alpha", [0.37 * a for a in AMPS], cav, det, seed=0, noiseless=True)
    assert crosstalk_slopes(scaled).slope_ratio == pytest.approx(crosstalk_slopes(noiseless).slope_ratio,
                                                                  rel=1e-10)


def test_swapping_target_transposes(setup, noiseless):
    pair, cav, det = setup
    swapped = run_drive_series(pair, "beta", AMPS, cav, det, seed=0, noiseless=True)
    np.testing.assert_allclose(swapped.values(), noiseless.values()[:, ::-1], rtol=1e-9)
    assert run_drive_series(pair, 1, [0.0], cav, det, seed=0, noiseless=True).target == "beta"


def test_undriven_base_occupation(setup):
    pair, cav, det = setup
    s = run_drive_series(pair, "alpha", [0.0], cav, det, seed=3)
    for e in s.occupations[0]:
        assert abs(e.value - 1.3) < 3 * e.uncertainty + 0.05


def test_noisy_target_slope_is_one(setup):
    pair, cav, det = setup
    slopes = []
    for seed in range(10):
        rep = crosstalk_slopes(run_drive_series(pair, "alpha", AMPS, cav, det, seed=seed))
        # the calibrated C rescales the whole series, so its error adds
        err = np.hypot(rep.slope_errors[0], rep.calibration_errors[0])
        assert abs(rep.target_slope - 1.0) < 3 * err
        assert rep.ratio_upper_bound >= rep.slope_ratio >= 0
        slopes.append(rep.target_slope)
    assert np.mean(slopes) == pytest.approx(1.0, abs=0.05)


def test_series_is_seed_deterministic(setup):
    pair, cav, det = setup
    a = run_drive_series(pair, "alpha", AMPS[:3], cav, det, seed=8)
    b = run_drive_series(pair, "alpha", AMPS[:3], cav, det, seed=8)
    assert a.values().tobytes() == b.values().tobytes()


def test_collision_and_input_errors(setup):
    pair, cav, det = setup
    close = drive_pair(splitting=2 * np.pi * 1.0e3)
    with pytest.raises(FrequencyCollisionError):
        run_drive_series(close, "alpha", AMPS, cav, det, seed=0)
    with pytest.raises(ValueError):
        run_drive_series(pair[:1], "alpha", AMPS, cav, det, seed=0)
    with pytest.raises(ValueError):
        run_drive_series(pair, "gamma", AMPS, cav, det, seed=0)
    with pytest.raises(ValueError):
        run_drive_series(pair, "alpha", [], cav, det, seed=0)


def test_constant_neighbor_gives_zero_ratio():
    rep = crosstalk_slopes(series_from([[1.0, 1.3], [2.0, 1.3], [3.0, 1.3], [4.0, 1.3]]))
    assert rep.neighbor_slope == 0.0 and rep.slope_ratio == 0.0
    assert rep.target_slope == pytest.approx(1.0)
    assert rep.isolation == pytest.approx(1.0 - rep.ratio_upper_bound)


def test_upper_bound_uses_normal_quantile():
    vals = [[1.0, 1.30], [2.0, 1.33], [3.0, 1.31], [4.0, 1.36]]
    rep = crosstalk_slopes(series_from(vals), confidence=0.97)
    x = np.arange(4.0)
    y = np.array([v[1] for v in vals])
    slope, icpt = np.polyfit(x, y, 1)
    se = np.sqrt(np.sum((y - icpt - slope * x) ** 2) / 2 / np.sum((x - x.mean()) ** 2))
    assert rep.neighbor_slope == pytest.approx(slope, rel=1e-12)
    assert rep.ratio_upper_bound == pytest.approx(slope + 1.880793608151251 * se, rel=1e-9)


def test_report_and_series_validation():
    with pytest.raises(ValueError):
        crosstalk_slopes(series_from([[1.0, 1.0], [2.0, 1.0]], amps=(0.0, 1.0)))
    with pytest.raises(DegenerateAbscissaError):
        crosstalk_slopes(series_from([[1.0, 1.0]] * 4))
    with pytest.raises(ValueError):
        crosstalk_slopes(series_from([[1.0, 1.0], [2.0, 1.0], [3.0, 1.0], [4.0, 1.0]]), confidence=1.0)
    with pytest.raises(ValueError):
        series_from([[1.0, 1.0]] * 4, amps=(0.0, 2.0, 1.0, 3.0))
    with pytest.raises(ValueError):
        series_from([[1.0, 1.0]] * 3)
    with pytest.raises(ValueError):
        CrosstalkReport(1.0, 0.0, 0.0, 0.0, 1.5, (0.0, 0.0))
