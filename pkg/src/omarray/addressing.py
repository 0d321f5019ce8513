"""Selective addressing: drive one oscillator of a pair, track both
occupations against drive strength and bound the crosstalk."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .analysis import (OccupationEstimate, calibrate, cooperativity_from_peak,
                       fit_sidebands, is_clean, occupation_from_phase_peak)
from .coupling import CavityConfig
from .rng import derive_seed
from .spectra import (DetectionConfig, apply_drive, frequency_grid, phase_spectrum, sample_noisy,
                      shot_noise_floor, to_detected_psd)

DEFAULT_CONFIDENCE = 0.97


class FrequencyCollisionError(ValueError):
    pass


class DegenerateAbscissaError(ValueError):
    pass


class MissingResonanceError(RuntimeError):
    pass


@dataclass
class DriveSeries:
    """Occupation estimates ``occupations[k][i]`` of oscillator ``labels[i]`` at ``amplitudes[k]``."""
    target: str
    labels: tuple
    amplitudes: np.ndarray
    occupations: list
    cooperativities: tuple = ()
    config: dict = field(default_factory=dict)
    cooperativity_errors: tuple = ()

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if self.amplitudes.ndim != 1 or np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be a 1-D non-negative sequence")
        if np.any(np.diff(self.amplitudes) <= 0):
            raise ValueError("amplitudes must be strictly increasing")
        if len(self.occupations) != self.amplitudes.size or any(
                len(row) != len(self.labels) for row in self.occupations):
            raise ValueError("occupations must be one row per amplitude, one entry per oscillator")
        if self.target not in self.labels:
            raise ValueError(f"target {self.target!r} not among {self.labels}")

    def values(self) -> np.ndarray:
        return np.array([[e.value for e in row] for row in self.occupations])

    def errors(self) -> np.ndarray:
        return np.array([[e.uncertainty for e in row] for row in self.occupations])


@dataclass(frozen=True)
class CrosstalkReport:
    target_slope: float
    neighbor_slope: float
    slope_ratio: float
    ratio_upper_bound: float
    confidence: float
    intercepts: tuple
    slope_errors: tuple = ()
    calibration_errors: tuple = ()

    def __post_init__(self):
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    @property
    def isolation(self) -> float:
        """Guaranteed fraction of each added quantum that stays in the target."""
        return 1.0 - self.ratio_upper_bound


def _labels(pair):
    labels = tuple(o.label or str(i) for i, o in enumerate(pair))
    if len(set(labels)) != len(labels):
        raise ValueError("oscillator labels must be distinct")
    return labels


def _peak_fits(spectrum, pair, cavity, exclusions, window):
    """Fit one phase peak per oscillator, seeding any that were not detected."""
    guess = float(np.median([o.linewidth for o in pair]))
    fits = fit_sidebands(spectrum, exclusions, linewidth_guess=guess, window=window,
                         kappa=cavity.half_linewidth,
                         seeds=[(o.frequency, o.linewidth) for o in pair])
    out = []
    for o in pair:
        near = [f for f in fits if abs(f.center - o.frequency) < o.linewidth]
        clean = [f for f in near if is_clean(f)] or near
        if not clean:
            raise MissingResonanceError(f"no peak fitted near {o.frequency / 2 / np.pi:.0f} Hz")
        out.append(min(clean, key=lambda f: abs(f.center - o.frequency)))
    return out


def _measure(oscillators, cavity, det, grid, seed, task, noiseless, exclusions, window):
    mean = to_detected_psd(phase_spectrum(oscillators, cavity, grid), det, "phase")
    off = shot_noise_floor(grid, det, "phase")
    if not noiseless:
        mean = sample_noisy(mean, det, derive_seed(seed, "drive", task, "on"))
        off = sample_noisy(off, det, derive_seed(seed, "drive", task, "off"))
    spec = calibrate(mean, off, det, clamp=False)
    return _peak_fits(spec, oscillators, cavity, exclusions, window)


def run_drive_series(pair, target, amplitudes, cavity: CavityConfig, det: DetectionConfig,
                     seed: int, *, grid=None, exclusions=(), noiseless: bool = False,
                     window: float = 5.0) -> DriveSeries:
    """Drive ``target`` at its resonance with each amplitude and measure both oscillators.

    Cooperativities come from an undriven calibration measurement, taking
    each oscillator's thermal occupation as known.  Every measurement draws
    from seeds derived from ``(seed, task)``.  ``target`` is a label or an
    index into ``pair``.
    """
    pair = list(pair)
    if len(pair) != 2:
        raise ValueError("a drive series tracks exactly two oscillators")
    labels = _labels(pair)
    if isinstance(target, (int, np.integer)):
        target = labels[int(target)]
    if target not in labels:
        raise ValueError(f"unknown target {target!r}")
    a, b = pair
    if abs(a.frequency - b.frequency) <= max(a.linewidth, b.linewidth):
        raise FrequencyCollisionError("oscillator frequencies closer than their linewidth")
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.ndim != 1 or amplitudes.size == 0:
        raise ValueError("amplitudes must be a non-empty 1-D sequence")
    if grid is None:
        grid = frequency_grid(signed=False)
    drive_freq = pair[labels.index(target)].frequency

    calib = _measure(pair, cavity, det, grid, seed, "calibration", noiseless, exclusions, window)
    coops, coop_errs = [], []
    for o, f in zip(pair, calib):
        filt = float(cavity.cavity_filter(f.center))
        peak = max(f.peak_height, 0.0) / filt
        c = cooperativity_from_peak(peak, o.thermal_occupation)
        coops.append(c)
        # first order: d(peak)/dC = 4 (2 nu_th + 2 C + 1)
        coop_errs.append(f.uncertainties["height"] / filt / (4.0 * (2.0 * o.thermal_occupation + 2.0 * c + 1.0)))

    rows = []
    for k, amp in enumerate(amplitudes):
        driven = apply_drive(pair, drive_freq, amp)
        fits = _measure(driven, cavity, det, grid, seed, f"amplitude{k}", noiseless, exclusions, window)
        row = []
        for c, f in zip(coops, fits):
            if c > 0:
                row.append(occupation_from_phase_peak(f, c, cavity))
            else:
                row.append(OccupationEstimate(np.nan, np.nan, "phase_peak"))
        rows.append(row)
    config = {"seed": int(seed), "frequencies": [float(o.frequency) for o in pair],
              "linewidths": [float(o.linewidth) for o in pair],
              "averages": None if noiseless else int(det.averages),
              "noiseless": bool(noiseless), "exclusions": [list(map(float, e)) for e in exclusions]}
    return DriveSeries(target=target, labels=labels, amplitudes=amplitudes, occupations=rows,
                       cooperativities=tuple(coops), config=config,
                       cooperativity_errors=tuple(float(e) for e in coop_errs))


def _ols(x, y):
    """Slope, intercept and slope standard error of ``y = a + s x``."""
    xm = x.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = np.sum((x - xm) * (y - y.mean())) / sxx
    intercept = y.mean() - slope * xm
    dof = x.size - 2
    resid = y - intercept - slope * x
    se = np.sqrt(np.sum(resid**2) / dof / sxx) if dof > 0 else np.inf
    return float(slope), float(intercept), float(se)


def crosstalk_slopes(series: DriveSeries, confidence: float = DEFAULT_CONFIDENCE) -> CrosstalkReport:
    """Slopes of both occupations against drive amplitude and the crosstalk bound.

    The drive amplitude is the on-resonance number of added phonons, so the
    target slope is the measured phonons added per unit amplitude and the
    ratio is phonons reaching the neighbour per phonon added to the target.
    The upper bound adds the one-sided normal quantile times the
    neighbour-slope standard error.  ``calibration_errors`` are the extra
    slope uncertainties from the cooperativity calibration, which rescales
    each oscillator's whole occupation series; they are reported but not
    folded into the bound.
    """
    if series.amplitudes.size < 3:
        raise ValueError("need at least three amplitudes")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    values = series.values()
    ti = series.labels.index(series.target)
    ni = 1 - ti
    x = series.amplitudes
    t_slope, t_icpt, t_se = _ols(x, values[:, ti])
    n_slope, n_icpt, n_se = _ols(x, values[:, ni])
    if np.ptp(values[:, ti]) == 0 or not t_slope > 0:
        raise DegenerateAbscissaError("target occupation does not increase with drive amplitude")
    z = stats.norm.ppf(confidence)
    ratio = max(n_slope / t_slope, 0.0)
    upper = max((n_slope + z * n_se) / t_slope, ratio)
    intercepts = [0.0, 0.0]
    intercepts[ti], intercepts[ni] = t_icpt, n_icpt
    errors = [0.0, 0.0]
    errors[ti], errors[ni] = t_se, n_se
    slopes = [0.0, 0.0]
    slopes[ti], slopes[ni] = t_slope, n_slope
    cal = ()
    if len(series.cooperativity_errors) == 2 and len(series.cooperativities) == 2:
        # occupation + 1/2 scales as 1/C, so does its slope
        cal = tuple(float(abs(s) * e / c) if c > 0 else float("nan")
                    for s, c, e in zip(slopes, series.cooperativities, series.cooperativity_errors))
    return CrosstalkReport(target_slope=t_slope, neighbor_slope=n_slope, slope_ratio=float(ratio),
                           ratio_upper_bound=float(upper), confidence=float(confidence),
                           intercepts=tuple(intercepts), slope_errors=tuple(errors),
                           calibration_errors=cal)
