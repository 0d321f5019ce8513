"""Forward models for the cavity output: photon and phase spectra, the
heterodyne detection chain, averaged-periodogram noise and coherent drives.

Photon spectra live on a signed detuning axis (Stokes sidebands at negative
detuning); phase spectra on a non-negative axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants as const

from ._kernels import kernels
from .coupling import CavityConfig, Oscillator

PHOTON_DENSITY = "photon_density"
PHASE_DENSITY = "phase_density"
HETERODYNE_PSD = "heterodyne_psd"
PHASE_PSD = "phase_psd"
KINDS = (PHOTON_DENSITY, PHASE_DENSITY, HETERODYNE_PSD, PHASE_PSD)

DETECTED_KIND = {PHOTON_DENSITY: HETERODYNE_PSD, PHASE_DENSITY: PHASE_PSD}
UNDETECTED_KIND = {v: k for k, v in DETECTED_KIND.items()}
QUADRATURE_OF = {PHOTON_DENSITY: "full", PHASE_DENSITY: "phase"}

DEFAULT_SPAN = 2 * np.pi * 250e3
DEFAULT_STEP = 2 * np.pi * 50.0


class KindMismatchError(ValueError):
    pass


@dataclass
class Spectrum:
    frequencies: np.ndarray
    values: np.ndarray
    kind: str
    averages: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.frequencies.ndim != 1 or self.frequencies.shape != self.values.shape:
            raise ValueError("frequencies and values must be 1-D and equal length")
        if self.frequencies.size > 1:
            d = np.diff(self.frequencies)
            if np.any(d <= 0):
                raise ValueError("frequency grid must be strictly increasing")
            if np.ptp(d) > 1e-6 * d[0]:
                raise ValueError("frequency grid must be uniform")

    @property
    def step(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])

    def with_values(self, values, **changes) -> "Spectrum":
        return replace(self, values=np.asarray(values, dtype=float),
                       metadata=dict(self.metadata), **changes)


@dataclass(frozen=True)
class DetectionConfig:
    efficiency: float = 0.13
    lo_power: float = 1e-3
    probe_photon_energy: float = const.h * const.c / 780e-9
    averages: int = 500

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if not (self.lo_power > 0 and self.probe_photon_energy > 0):
            raise ValueError("shot-noise level must be positive")
        if self.averages < 1:
            raise ValueError("averages must be >= 1")

    @property
    def shot_noise(self) -> float:
        return self.lo_power * self.probe_photon_energy

    @property
    def phase_shot_noise(self) -> float:
        return self.shot_noise / 2.0


def frequency_grid(span: float = DEFAULT_SPAN, step: float = DEFAULT_STEP,
                   signed: bool = True) -> np.ndarray:
    """Uniform grid ``[-span, span]`` (signed) or ``[0, span]`` in steps of ``step``."""
    n = int(round(span / step))
    idx = np.arange(-n if signed else 0, n + 1)
    return idx * step


def _sum_lorentzians(grid, centers, hwhm, heights):
    return kernels.lorentzian_sum(
        np.ascontiguousarray(grid, dtype=float),
        np.ascontiguousarray(centers, dtype=float),
        np.ascontiguousarray(hwhm, dtype=float),
        np.ascontiguousarray(heights, dtype=float),
    )


def photon_spectrum(oscillators, cavity: CavityConfig, grid) -> Spectrum:
    """Intracavity probe photon spectrum for a resonant probe.

    Each oscillator contributes an anti-Stokes line at ``+omega_i`` of
    height ``2 C nu`` and a Stokes line at ``-omega_i`` of height
    ``2 C (nu + 1)``, both of FWHM ``Gamma_i``, and the sum is shaped by the
    cavity filter.
    """
    grid = np.asarray(grid, dtype=float)
    centers, hwhm, heights = [], [], []
    for osc in oscillators:
        c, nu, g = osc.cooperativity, osc.occupation, osc.linewidth
        centers += [osc.frequency, -osc.frequency]
        hwhm += [g / 2.0, g / 2.0]
        heights += [2.0 * c * nu, 2.0 * c * (nu + 1.0)]
    values = cavity.cavity_filter(grid) * _sum_lorentzians(grid, centers, hwhm, heights)
    return Spectrum(grid, values, PHOTON_DENSITY)


def phase_spectrum(oscillators, cavity: CavityConfig, grid) -> Spectrum:
    """Phase-quadrature spectrum: one line per oscillator of height ``4 C (2 nu + 1)``."""
    grid = np.asarray(grid, dtype=float)
    centers = [o.frequency for o in oscillators]
    hwhm = [o.linewidth / 2.0 for o in oscillators]
    heights = [4.0 * o.cooperativity * (2.0 * o.occupation + 1.0) for o in oscillators]
    values = cavity.cavity_filter(grid) * _sum_lorentzians(grid, centers, hwhm, heights)
    return Spectrum(grid, values, PHASE_DENSITY)


def add_technical_noise(s: Spectrum, spikes) -> Spectrum:
    """Attach technical-noise spikes ``(center, height, fwhm)`` (rad/s, photon units).

    The spikes are stored in metadata and only enter at detection, as the
    technical-noise spectrum of the probe.
    """
    out = s.with_values(s.values)
    out.metadata["spikes"] = list(out.metadata.get("spikes", [])) + [
        tuple(float(v) for v in sp) for sp in spikes
    ]
    return out


def technical_noise(s: Spectrum) -> np.ndarray:
    spikes = s.metadata.get("spikes", [])
    if not spikes:
        return np.zeros_like(s.values)
    c, h, w = np.array(spikes, dtype=float).T
    return _sum_lorentzians(s.frequencies, c, w / 2.0, h)


def to_detected_psd(s: Spectrum, det: DetectionConfig, quadrature: str = "full") -> Spectrum:
    """Map a photon/phase spectrum to the heterodyne PSD seen at the detector."""
    expected = {"full": PHOTON_DENSITY, "phase": PHASE_DENSITY}.get(quadrature)
    if expected is None:
        raise ValueError(f"quadrature must be 'full' or 'phase', got {quadrature!r}")
    if s.kind != expected:
        raise KindMismatchError(f"{quadrature} quadrature needs a {expected} spectrum, got {s.kind}")
    n_total = s.values + technical_noise(s)
    eps = det.efficiency
    if quadrature == "full":
        values = det.shot_noise * (1.0 + eps * n_total / 2.0)
    else:
        values = det.phase_shot_noise * (1.0 + eps / 2.0 * n_total)
    return s.with_values(values, kind=DETECTED_KIND[s.kind])


def shot_noise_floor(grid, det: DetectionConfig, quadrature: str = "full") -> Spectrum:
    """Detected PSD with no atoms in the cavity (the subtraction reference)."""
    level = det.shot_noise if quadrature == "full" else det.phase_shot_noise
    kind = HETERODYNE_PSD if quadrature == "full" else PHASE_PSD
    grid = np.asarray(grid, dtype=float)
    return Spectrum(grid, np.full(grid.shape, level), kind)


def sample_noisy(mean: Spectrum, det: DetectionConfig, seed: int) -> Spectrum:
    """One averaged-periodogram realization of ``mean``.

    Each bin is an average of ``det.averages`` exponential periodogram bins,
    i.e. ``mean * Gamma(M, 1/M)``, independently per bin.
    """
    m = int(det.averages)
    rng = np.random.default_rng(seed)
    draws = rng.gamma(shape=m, scale=1.0 / m, size=mean.values.shape)
    out = mean.with_values(mean.values * draws, averages=m)
    out.metadata.update(seed=int(seed), averages=m)
    return out


def drive_response(osc: Oscillator, drive_freq: float) -> float:
    """Fraction of the on-resonance drive that lands in ``osc``."""
    half = osc.linewidth / 2.0
    return half**2 / ((drive_freq - osc.frequency) ** 2 + half**2)


def apply_drive(oscillators, drive_freq: float, drive_amplitude: float) -> list[Oscillator]:
    """Copies of ``oscillators`` with drive energy deposited.

    ``drive_amplitude`` is the number of phonons added to an oscillator
    resonant with the drive; detuned oscillators respond with a Lorentzian
    of their own FWHM.
    """
    if drive_amplitude < 0:
        raise ValueError("drive amplitude must be non-negative")
    return [
        replace(o, drive_occupation=o.drive_occupation + drive_amplitude * drive_response(o, drive_freq))
        for o in oscillators
    ]
