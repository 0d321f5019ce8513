"""Mechanical resonance imaging: scan the loading position across the
lattice, record a position x frequency response map, pull out the ridge of
discrete resonances and turn it back into site positions."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .analysis import DEFAULT_LINEWIDTH, calibrate, fit_sidebands, is_clean
from .coupling import CavityConfig, dispersive_shift
from .rng import derive_seed
from .scenarios import oscillators_from_cloud
from .spectra import (PHASE_DENSITY, DetectionConfig, Spectrum, add_technical_noise,
                      frequency_grid, phase_spectrum, sample_noisy, shot_noise_floor,
                      to_detected_psd)
from .superlattice import AtomCloud, LatticeConfig, find_sites, mean_site_spacing

OCCUPANCY_CUTOFF = 0.05


class EmptyRidgeError(ValueError):
    pass


@dataclass
class ResonanceMap:
    """Calibrated phase-density map, one row per loading position.

    ``power[i, j]`` is the clamped phase-quadrature density at loading
    position ``positions[i]`` and frequency ``frequencies[j]``; ``shifts[i]``
    is the mean dispersive cavity shift for that row.
    """
    positions: np.ndarray
    frequencies: np.ndarray
    power: np.ndarray
    shifts: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        self.shifts = np.asarray(self.shifts, dtype=float)
        if self.power.shape != (self.positions.size, self.frequencies.size):
            raise ValueError("power matrix does not match the position/frequency axes")
        if self.shifts.shape != self.positions.shape:
            raise ValueError("one dispersive shift per loading position required")
        if np.any(self.power < 0):
            raise ValueError("map power must be non-negative")

    def row(self, i: int) -> Spectrum:
        return Spectrum(self.frequencies, self.power[i], PHASE_DENSITY,
                        averages=self.metadata.get("averages"))


@dataclass(frozen=True)
class SiteEstimate:
    position: float
    frequency: float
    position_uncertainty: float


class RidgePoint(NamedTuple):
    position: float
    frequency: float
    strength: float
    linewidth: float


def row_oscillators(cfg: LatticeConfig, cavity: CavityConfig, cloud_template: AtomCloud,
                    z_a: float, seed: int, row: int, *, sites, linewidth: float,
                    thermal_occupation: float, cutoff: float = OCCUPANCY_CUTOFF):
    """Oscillators loaded for row ``row`` of a scan (the ground truth of that row)."""
    cloud = replace(cloud_template, center=float(z_a))
    return oscillators_from_cloud(cfg, cavity, cloud, derive_seed(seed, "mri", row, "load"),
                                  linewidth=linewidth, thermal_occupation=thermal_occupation,
                                  cutoff=cutoff, sites=sites)


def scan_sites(cfg: LatticeConfig, cloud_template: AtomCloud, positions):
    """Sites that any row of a scan over ``positions`` can load."""
    reach = 3.0 * max(cloud_template.sigma_tot, cfg.wavelength_a) + 2.0 * cloud_template.position_jitter
    return find_sites(cfg, float(np.min(positions)) - reach, float(np.max(positions)) + reach)


def scan_map(cfg: LatticeConfig, cavity: CavityConfig, det: DetectionConfig,
             cloud_template: AtomCloud, positions, seed: int, *,
             linewidth: float = DEFAULT_LINEWIDTH, thermal_occupation: float = 1.0,
             grid=None, cutoff: float = OCCUPANCY_CUTOFF, spikes=(),
             noiseless: bool = False) -> ResonanceMap:
    """Load the cloud at each position, synthesize and detect its phase spectrum.

    Every row draws from its own seeds derived from ``(seed, row)``, so rows
    are independent of evaluation order.  Sites loaded with less than
    ``cutoff`` of the atoms are dropped.  ``spikes`` inject technical noise
    ``(center, height, fwhm)`` into every row.  ``noiseless`` stores the
    expected calibrated spectrum instead of a sampled one.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 1 or positions.size == 0 or not np.all(np.isfinite(positions)):
        raise ValueError("positions must be a non-empty 1-D array of finite values")
    grid = frequency_grid(signed=False) if grid is None else np.asarray(grid, dtype=float)
    sites = scan_sites(cfg, cloud_template, positions)
    off_mean = shot_noise_floor(grid, det, "phase")

    power = np.empty((positions.size, grid.size))
    shifts = np.empty(positions.size)
    clamped = np.empty(positions.size)
    for i, z_a in enumerate(positions):
        oscs = row_oscillators(cfg, cavity, cloud_template, z_a, seed, i, sites=sites,
                               linewidth=linewidth, thermal_occupation=thermal_occupation,
                               cutoff=cutoff)
        shifts[i] = dispersive_shift(oscs, cavity)
        mean = phase_spectrum(oscs, cavity, grid)
        if spikes:
            mean = add_technical_noise(mean, spikes)
        on_mean = to_detected_psd(mean, det, "phase")
        if noiseless:
            on, off = on_mean, off_mean
        else:
            on = sample_noisy(on_mean, det, derive_seed(seed, "mri", i, "on"))
            off = sample_noisy(off_mean, det, derive_seed(seed, "mri", i, "off"))
        row = calibrate(on, off, det, clamp=True)
        power[i] = row.values
        clamped[i] = row.metadata["clamp_fraction"]
    meta = {"seed": int(seed), "averages": None if noiseless else int(det.averages),
            "linewidth": float(linewidth), "noiseless": bool(noiseless),
            "clamp_fraction": float(clamped.mean())}
    return ResonanceMap(positions, grid, power, shifts, meta)


def extract_ridge(rmap: ResonanceMap, exclusions=(), *, linewidth_guess: float | None = None,
                  threshold: float = 4.0, min_significance: float = 3.0) -> list[RidgePoint]:
    """Significant resonances of every row as ``(position, frequency, strength, fwhm)``.

    Each row goes through :func:`fit_sidebands`; only fits without rejecting
    flags are kept.  ``strength`` is the fitted peak density.
    """
    if rmap.positions.size == 0:
        raise ValueError("empty resonance map")
    if linewidth_guess is None:
        linewidth_guess = rmap.metadata.get("linewidth", DEFAULT_LINEWIDTH)
    out = []
    for i, z_a in enumerate(rmap.positions):
        fits = fit_sidebands(rmap.row(i), exclusions, linewidth_guess=linewidth_guess,
                             threshold=threshold, min_significance=min_significance)
        out += [RidgePoint(float(z_a), f.center, f.peak_height, f.linewidth)
                for f in fits if is_clean(f)]
    return out


def _components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def site_spacing_floor(cfg: LatticeConfig, lo: float, hi: float) -> float:
    """Mean distance between neighbouring sites in ``[lo, hi]``."""
    sites = find_sites(cfg, lo, hi)
    if len(sites) < 2:
        return 0.25 * (cfg.wavelength_a + cfg.wavelength_b)
    return mean_site_spacing(sites)


def reconstruct_sites(ridge, cfg: LatticeConfig, cloud: AtomCloud, *, gap: float | None = None,
                      link_distance: float | None = None, min_points: int = 2) -> list[SiteEstimate]:
    """Group ridge points into sites and locate each one.

    Two points belong to the same site when their frequencies differ by
    less than ``gap`` (default: median fitted FWHM) and their loading
    positions by at most ``link_distance`` (default: twice the position
    uncertainty); groups are the connected components of that relation.
    The position is the strength-weighted mean loading position, the
    frequency the strength-weighted mean frequency.
    """
    ridge = [RidgePoint(*p) if len(p) == 4 else RidgePoint(*p, np.nan) for p in ridge]
    if not ridge:
        raise EmptyRidgeError("no ridge points to reconstruct")
    z = np.array([p.position for p in ridge])
    f = np.array([p.frequency for p in ridge])
    w = np.array([max(p.strength, 0.0) for p in ridge])
    widths = np.array([p.linewidth for p in ridge])
    if gap is None:
        gap = float(np.nanmedian(widths)) if np.any(np.isfinite(widths)) else DEFAULT_LINEWIDTH
    spacing = site_spacing_floor(cfg, z.min() - cfg.wavelength_a, z.max() + cfg.wavelength_a)
    sigma = max(spacing, cloud.sigma_tot)
    if link_distance is None:
        link_distance = 2.0 * sigma

    order = np.argsort(f)
    edges = []
    for a_pos, a in enumerate(order):
        for b in order[a_pos + 1:]:
            if f[b] - f[a] >= gap:
                break
            if abs(z[b] - z[a]) <= link_distance:
                edges.append((a, b))
    out = []
    for grp in _components(len(ridge), edges):
        if len(grp) < min_points:
            continue
        wg = w[grp] if w[grp].sum() > 0 else np.ones(len(grp))
        out.append(SiteEstimate(position=float(np.average(z[grp], weights=wg)),
                                frequency=float(np.average(f[grp], weights=wg)),
                                position_uncertainty=float(sigma)))
    out.sort(key=lambda s: s.position)
    return out


def match_sites(estimates, truth, max_distance: float):
    """Pair each estimate with the nearest-in-frequency true site within ``max_distance``.

    Returns ``(estimate, site)`` pairs; estimates with no candidate are skipped.
    """
    tz = np.array([s.position for s in truth])
    tf = np.array([s.frequency for s in truth])
    pairs = []
    for e in estimates:
        near = np.flatnonzero(np.abs(tz - e.position) <= max_distance)
        if near.size:
            k = near[np.argmin(np.abs(tf[near] - e.frequency))]
            pairs.append((e, truth[k]))
    return pairs
