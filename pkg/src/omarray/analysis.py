"""Inverse pipeline: detected PSD -> photon spectrum -> sideband fits ->
phonon occupations and cooperativities."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .coupling import CavityConfig
from .fitting import fit_linked_lorentzians, fit_lorentzians
from .spectra import (
    HETERODYNE_PSD,
    PHASE_PSD,
    UNDETECTED_KIND,
    DetectionConfig,
    Spectrum,
)

DEFAULT_LINEWIDTH = 2 * np.pi * 1.2e3
UPPER_QUARTILE_Z = 0.6745


class GridMismatchError(ValueError):
    pass


class NonphysicalOrderingError(ValueError):
    """Anti-Stokes area not below Stokes area: the pair is noise dominated."""


@dataclass
class SidebandFit:
    center: float
    linewidth: float
    peak_height: float
    area: float
    band: tuple[float, float]
    goodness: float
    uncertainties: dict
    area_uncertainty: float
    converged: bool = True
    flags: list = field(default_factory=list)


@dataclass
class OccupationEstimate:
    value: float
    uncertainty: float
    method: str


def calibrate(on: Spectrum, off: Spectrum, det: DetectionConfig, clamp: bool = True) -> Spectrum:
    """Photon (or phase) spectrum from atoms-in minus atoms-released PSDs.

    ``clamp`` sets negative bins to zero and records the clamped fraction in
    metadata.  The estimators call this with ``clamp=False``: clamping lifts
    the noise floor by a signal-dependent amount that biases sideband areas.
    """
    if on.kind != off.kind or on.kind not in (HETERODYNE_PSD, PHASE_PSD):
        raise ValueError(f"calibrate needs two detected PSDs of one kind, got {on.kind}/{off.kind}")
    if on.frequencies.shape != off.frequencies.shape or not np.array_equal(on.frequencies, off.frequencies):
        raise GridMismatchError("on/off spectra are on different grids")
    if det.efficiency == 0:
        raise ValueError("detection efficiency is zero")
    if on.kind == HETERODYNE_PSD:
        n = 2.0 * (on.values - off.values) / (det.efficiency * det.shot_noise)
    else:
        n = 2.0 * (on.values - off.values) / (det.efficiency / 2.0 * det.shot_noise)
    out = on.with_values(n, kind=UNDETECTED_KIND[on.kind])
    out.metadata.pop("spikes", None)
    neg = n < 0
    out.metadata["clamp_fraction"] = float(neg.mean()) if clamp else 0.0
    out.metadata["clamped"] = bool(clamp)
    if clamp:
        out.values = np.where(neg, 0.0, n)
    return out


def _excluded_mask(freqs, exclusions):
    mask = np.zeros(freqs.shape, dtype=bool)
    for lo, hi in exclusions:
        mask |= (freqs >= min(lo, hi)) & (freqs <= max(lo, hi))
    return mask


def _fill_excluded(values, excluded):
    """Copy with each excluded run replaced by its mirrored neighbours.

    A constant fill would shrink the local noise estimate next to the run.
    """
    y = values.copy()
    if not excluded.any():
        return y
    if excluded.all():
        return np.zeros_like(y)
    n = y.size
    edges = np.flatnonzero(np.diff(np.concatenate(([0], excluded.astype(int), [0]))))
    for i0, i1 in zip(edges[::2], edges[1::2]):
        for k, i in enumerate(range(i0, i1)):
            left, right = i0 - 1 - k, i1 + (i1 - 1 - i)
            use_left = (i - i0 < i1 - i) if (left >= 0 and right < n) else left >= 0
            j = left if use_left else right
            y[i] = values[j] if 0 <= j < n and not excluded[j] else np.median(values[~excluded])
    return y


def _detect(s: Spectrum, excluded, linewidth_guess, threshold, noise_window):
    step = s.step
    y = _fill_excluded(s.values, excluded)
    smooth_bins = max(1, int(round(linewidth_guess / 2.0 / step)))
    ys = ndimage.uniform_filter1d(y, smooth_bins, mode="reflect")
    win = max(3, int(round(noise_window / step)) | 1)
    base = ndimage.median_filter(ys, size=win, mode="reflect")
    # bins are independent, so the boxcar scales the raw std by 1/sqrt(width);
    # raw quantiles see ~win independent samples instead of ~win/smooth_bins
    # upper semi-interquartile range: equals the MAD sigma for symmetric
    # noise and survives clamping of the lower half at zero
    q50 = ndimage.median_filter(y, size=win, mode="reflect")
    q75 = ndimage.percentile_filter(y, 75, size=win, mode="reflect")
    sigma = (q75 - q50) / UPPER_QUARTILE_Z / np.sqrt(smooth_bins)
    floor = 1e-12 * max(np.max(np.abs(y)), 1e-300)
    sigma = np.maximum(sigma, floor)
    excess = ys - base
    excess[excluded] = 0.0
    level = threshold * sigma
    peaks, _ = signal.find_peaks(excess, height=level,
                                 distance=max(1, int(round(linewidth_guess / step))))
    if peaks.size:
        # shoulders of a strong line are not separate peaks
        prom = signal.peak_prominences(excess, peaks)[0]
        peaks = peaks[prom >= level[peaks]]
    widths = signal.peak_widths(excess, peaks, rel_height=0.5)[0] * step if peaks.size else np.array([])
    return peaks, base, excess, widths


def fit_sidebands(s: Spectrum, exclusions=(), *, linewidth_guess: float = DEFAULT_LINEWIDTH,
                  threshold: float = 4.0, window: float = 5.0,
                  noise_window: float = 2 * np.pi * 20e3,
                  kappa: float | None = None, seeds=(),
                  min_significance: float = 3.0) -> list[SidebandFit]:
    """Detect and fit significant Lorentzian sidebands in ``s``.

    Peaks are found on a boxcar-smoothed copy of the spectrum and must rise
    ``threshold`` local noise standard deviations (robust, over a sliding
    ``noise_window``) above the local median.  Each peak is fitted over
    ``+- window`` widths of its initial FWHM estimate; peaks whose windows
    overlap are fitted jointly on a shared constant.  ``exclusions`` are
    ``(lo, hi)`` intervals in rad/s whose bins are ignored entirely.

    ``seeds`` are extra ``(center, fwhm)`` guesses fitted whether or not a
    peak was detected there (flagged ``"seeded"``); a seed closer than its
    FWHM to a detected peak is dropped in favour of the detection.

    ``area`` is the full-line integral ``pi * fwhm * height / 2``, divided
    of the intrinsic line when ``kappa`` is given (the fit model carries
    the cavity filter), and ``peak_height`` is the observed height at the
    center, filter included.  Fits are flagged, never dropped:
    ``low_significance`` when height < ``min_significance`` standard
    errors, ``width_out_of_range`` outside 1/4..4 x ``linewidth_guess``.
    """
    x = s.frequencies
    step = s.step
    excluded = _excluded_mask(x, exclusions)
    peaks, base, excess, widths = _detect(s, excluded, linewidth_guess, threshold, noise_window)
    widths = np.clip(widths, 2 * step, 10 * linewidth_guess)
    cands = [(float(x[p]), float(w), float(excess[p]), False) for p, w in zip(peaks, widths)]
    for c, w in seeds:
        if any(abs(c - d[0]) < w for d in cands):
            continue
        if _excluded_mask(np.array([c]), exclusions)[0] or not x[0] <= c <= x[-1]:
            continue
        k = int(np.clip(np.searchsorted(x, c), 0, x.size - 1))
        cands.append((float(c), float(w), float(max(excess[k], 0.0)), True))
    if not cands:
        return []
    cands.sort(key=lambda d: d[0])

    halfwin = [window * d[1] for d in cands]
    groups = [[0]]
    for i in range(1, len(cands)):
        if cands[i][0] - halfwin[i] <= max(cands[j][0] + halfwin[j] for j in groups[-1]):
            groups[-1].append(i)
        else:
            groups.append([i])

    fits = []
    for grp in groups:
        lo = min(cands[i][0] - halfwin[i] for i in grp)
        hi = max(cands[i][0] + halfwin[i] for i in grp)
        sel = (x >= lo) & (x <= hi) & ~excluded
        xs, ys = x[sel], s.values[sel]
        p0 = [float(np.median(base[sel])) if sel.any() else 0.0]
        for i in grp:
            c, w, h, _ = cands[i]
            p0 += [h if h > 0 else float(np.std(ys)) if ys.size else 1.0, c, w]
        if xs.size <= len(p0):
            continue
        env = None if kappa is None else kappa**2 / (kappa**2 + xs**2)
        res = fit_lorentzians(xs, ys, p0, envelope=env)
        dof = max(xs.size - len(p0), 1)
        err = np.sqrt(np.clip(np.diag(res.covariance), 0, None))
        for k, i in enumerate(grp):
            fits.append(_make_fit(res, err, dof, 1 + 3 * k, cands[i], halfwin[i], kappa,
                                  linewidth_guess, min_significance))
    fits.sort(key=lambda f: f.center)
    return fits


def _make_fit(res, err, dof, j, cand, halfwin, kappa, linewidth_guess, min_significance):
    # with a filter envelope the fitted height is intrinsic; report the
    # observed peak (intrinsic x filter at the center) for uniform semantics
    h_int, c, w = res.params[j:j + 3]
    filt = 1.0 if kappa is None else kappa**2 / (kappa**2 + c**2)
    h = h_int * filt
    err = err.copy()
    err[j] *= filt
    cov = res.covariance[np.ix_([j, j + 2], [j, j + 2])]
    with np.errstate(over="ignore", invalid="ignore"):
        grad = np.array([np.pi * w / 2.0, np.pi * h_int / 2.0])
        area = np.pi * w * h_int / 2.0
        area_var = grad @ cov @ grad
    band = (cand[0] - halfwin, cand[0] + halfwin)
    flags = []
    if cand[3]:
        flags.append("seeded")
    if not res.converged:
        flags.append("nonconverged")
    if h <= 0:
        flags.append("nonpositive_height")
    if not band[0] <= c <= band[1]:
        flags.append("center_outside_band")
    if not np.all(np.isfinite(err)) or not np.isfinite(area_var):
        flags.append("singular_covariance")
    elif h < min_significance * err[j]:
        flags.append("low_significance")
    if not 0.25 * linewidth_guess <= w <= 4.0 * linewidth_guess:
        flags.append("width_out_of_range")
    return SidebandFit(
        center=float(c), linewidth=float(w), peak_height=float(h),
        area=float(area), band=(float(band[0]), float(band[1])), goodness=float(res.rss / dof),
        uncertainties={"offset": float(err[0]), "height": float(err[j]),
                       "center": float(err[j + 1]), "linewidth": float(err[j + 2])},
        area_uncertainty=float(np.sqrt(area_var)) if np.isfinite(area_var) and area_var > 0 else 0.0,
        converged=res.converged, flags=flags,
    )


REJECT_FLAGS = {"nonconverged", "nonpositive_height", "center_outside_band",
                "singular_covariance", "low_significance", "width_out_of_range"}


def is_clean(fit: SidebandFit) -> bool:
    """True when a fit carries none of the rejecting quality flags."""
    return not REJECT_FLAGS.intersection(fit.flags)


def pair_sidebands(fits, tolerance: float | None = None):
    """Match Stokes (negative) and anti-Stokes (positive) fits by ``|center|``.

    Two lines pair when their ``|center|`` differ by less than ``tolerance``
    (default: the Stokes line's fitted FWHM).  Returns ``(stokes, antistokes)``
    tuples sorted by frequency; unmatched lines are dropped.
    """
    stokes = [f for f in fits if f.center < 0]
    anti = [f for f in fits if f.center > 0]
    pairs, used = [], set()
    for st in sorted(stokes, key=lambda f: -f.center):
        tol = tolerance if tolerance is not None else st.linewidth
        best, best_d = None, np.inf
        for k, a in enumerate(anti):
            d = abs(a.center + st.center)
            if k not in used and d < tol and d < best_d:
                best, best_d = k, d
        if best is not None:
            used.add(best)
            pairs.append((st, anti[best]))
    return pairs


def occupation_from_asymmetry(stokes: SidebandFit, antistokes: SidebandFit,
                              covariance=None) -> OccupationEstimate:
    """Mean occupation ``nb / (nr - nb)`` from Stokes/anti-Stokes areas.

    The uncertainty is first order in the area errors; pass the 2x2
    ``covariance`` of ``(stokes.area, antistokes.area)`` when the two fits
    share parameters, otherwise they are treated as independent.
    """
    r, b = stokes.area, antistokes.area
    if b >= r:
        raise NonphysicalOrderingError(f"anti-Stokes area {b:g} >= Stokes area {r:g}")
    d = r - b
    if covariance is None:
        covariance = np.diag([stokes.area_uncertainty**2, antistokes.area_uncertainty**2])
    grad = np.array([-b, r]) / d**2
    var = float(grad @ np.asarray(covariance) @ grad)
    return OccupationEstimate(value=float(b / d), uncertainty=float(np.sqrt(max(var, 0.0))),
                              method="asymmetry")


def cooperativity_from_peak(peak_height: float, thermal_occupation: float) -> float:
    """Positive root C of ``4 C (2 nu_th + C + 1) = peak_height``.

    ``peak_height`` must already be divided by the cavity filter.
    """
    if peak_height < 0 or thermal_occupation < 0:
        raise ValueError("peak_height and thermal_occupation must be non-negative")
    a = 2.0 * thermal_occupation + 1.0
    # cancellation-free form of (-a + sqrt(a^2 + p)) / 2
    return float(peak_height / (2.0 * (a + np.sqrt(a * a + peak_height))))


def occupation_from_phase_peak(fit: SidebandFit, C: float, cavity: CavityConfig) -> OccupationEstimate:
    """Total occupation from a phase-spectrum peak of known cooperativity."""
    if not C > 0:
        raise ValueError("cooperativity must be positive")
    filt = float(cavity.cavity_filter(fit.center))
    nu = (fit.peak_height / filt / (4.0 * C) - 1.0) / 2.0
    err = fit.uncertainties["height"] / filt / (8.0 * C)
    return OccupationEstimate(value=float(nu), uncertainty=float(err), method="phase_peak")


@dataclass
class SidebandPairEstimate:
    stokes: SidebandFit
    antistokes: SidebandFit
    occupation: OccupationEstimate | None
    area_covariance: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def frequency(self) -> float:
        return 0.5 * (self.antistokes.center - self.stokes.center)


def fit_sideband_pair(s: Spectrum, stokes: SidebandFit, others=(), exclusions=(), *,
                      window: float = 5.0, kappa: float | None = None):
    """Joint fit of one oscillator's Stokes and anti-Stokes lines.

    Both lines share ``|center|`` and FWHM; heights and the two local
    offsets are free.  ``others`` are fits of unrelated lines; any inside
    either window is fitted alongside as a nuisance Lorentzian.
    Returns ``(stokes_fit, antistokes_fit, area_covariance)``.
    """
    x, y = s.frequencies, s.values
    c0, w0 = -stokes.center, stokes.linewidth
    half = window * w0
    excluded = _excluded_mask(x, exclusions)
    # global params: [off_s, off_a, h_r, h_b, c, w, nuisance...]
    p0 = [0.0, 0.0, max(stokes.peak_height, 1e-12), max(0.5 * stokes.peak_height, 1e-12), c0, w0]
    blocks = []
    for side, off_i, h_i in ((-1, 0, 2), (1, 1, 3)):
        sel = (np.abs(x - side * c0) <= half) & ~excluded
        # mirror the Stokes window so both lines sit at +c
        xb, yb = side * x[sel], y[sel]
        idx = [off_i, h_i, 4, 5]
        for o in others:
            oc = side * o.center
            if abs(oc - c0) < max(w0, o.linewidth) or abs(oc - c0) > half:
                continue
            idx += [len(p0), len(p0) + 1, len(p0) + 2]
            p0 += [o.peak_height, oc, o.linewidth]
        p0[off_i] = float(np.median(yb)) if yb.size else 0.0
        if side == 1:
            k = np.argmin(np.abs(xb - c0)) if xb.size else None
            if k is not None:
                p0[3] = float(max(yb[k] - p0[off_i], 0.05 * p0[2]))
        env = None if kappa is None else kappa**2 / (kappa**2 + xb**2)
        blocks.append((xb, yb, idx, env))
    scale = s.step
    res = fit_linked_lorentzians(blocks, p0, x0=c0, scale=scale)
    npts = sum(b[0].size for b in blocks)
    dof = max(npts - len(p0), 1)
    err = np.sqrt(np.clip(np.diag(res.covariance), 0, None))
    # fitted heights are intrinsic when a filter envelope is used
    h_r, h_b, c, w = res.params[2:6]
    filt = 1.0 if kappa is None else kappa**2 / (kappa**2 + c**2)
    err[2:4] *= filt
    # d(area_r, area_b)/d(h_r, h_b, w)
    jac = np.pi / 2.0 * np.array([[w, 0.0, h_r], [0.0, w, h_b]])
    cov3 = res.covariance[np.ix_([2, 3, 5], [2, 3, 5])]
    area_cov = jac @ cov3 @ jac.T
    fits = []
    for sign, h, hi, oi in ((-1, h_r, 2, 0), (1, h_b, 3, 1)):
        flags = []
        if not res.converged:
            flags.append("nonconverged")
        if h <= 0:
            flags.append("nonpositive_height")
        if abs(c - c0) > half:
            flags.append("center_outside_band")
        k = 0 if sign < 0 else 1
        fits.append(SidebandFit(
            center=float(sign * c), linewidth=float(w), peak_height=float(h * filt),
            area=float(np.pi * w * h / 2.0),
            band=(float(sign * c0 - half), float(sign * c0 + half)),
            goodness=float(res.rss / dof),
            uncertainties={"offset": float(err[oi]), "height": float(err[hi]),
                           "center": float(err[4]), "linewidth": float(err[5])},
            area_uncertainty=float(np.sqrt(max(area_cov[k, k], 0.0))),
            converged=res.converged, flags=flags + ["paired"],
        ))
    return fits[0], fits[1], area_cov


def estimate_occupations(on: Spectrum, off: Spectrum, det: DetectionConfig, cavity: CavityConfig,
                         exclusions=(), *, window: float = 5.0, **fit_kw) -> list[SidebandPairEstimate]:
    """Asymmetry thermometry on a pair of heterodyne PSDs.

    Clean Stokes lines found by :func:`fit_sidebands` identify the
    oscillators; each is then refitted jointly with its anti-Stokes partner
    (:func:`fit_sideband_pair`), so weak anti-Stokes lines are measured
    rather than detected.  Conditioning on detection would bias low
    occupations upward.
    """
    n = calibrate(on, off, det, clamp=False)
    fits = fit_sidebands(n, exclusions, kappa=cavity.half_linewidth, window=window, **fit_kw)
    stokes = [f for f in fits if f.center < 0 and is_clean(f)]
    others = [f for f in fits if is_clean(f)]
    out = []
    for st in sorted(stokes, key=lambda f: -f.center):
        rest = [o for o in others if o is not st]
        st2, an2, cov = fit_sideband_pair(n, st, rest, exclusions, window=window,
                                          kappa=cavity.half_linewidth)
        flags = sorted(set(st2.flags) | set(an2.flags))
        try:
            occ = occupation_from_asymmetry(st2, an2, covariance=cov)
        except NonphysicalOrderingError:
            occ = None
            flags.append("nonphysical_ordering")
        out.append(SidebandPairEstimate(st2, an2, occ, cov, flags))
    return out
