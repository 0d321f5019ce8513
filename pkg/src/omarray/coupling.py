"""Per-site optomechanical quantities: linear coupling, dispersive shift,
zero-point motion, cooperativity and measurement backaction."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import constants as const

from .superlattice import RB87_MASS, Site


@dataclass(frozen=True)
class CavityConfig:
    half_linewidth: float = 2 * np.pi * 1.82e6
    single_atom_coupling: float = 2 * np.pi * 13.1e6
    atom_detuning: float = -2 * np.pi * 40e9
    probe_wavelength: float = 780e-9
    mean_photon_number: float = 2.9
    probe_phase_offset: float = 0.0  # m, shifts the origin of the probe standing wave

    def __post_init__(self):
        if not self.half_linewidth > 0:
            raise ValueError("half_linewidth must be positive")
        if not self.single_atom_coupling > 0:
            raise ValueError("single_atom_coupling must be positive")
        if self.atom_detuning == 0:
            raise ValueError("atom_detuning must be non-zero")
        if not self.probe_wavelength > 0:
            raise ValueError("probe_wavelength must be positive")
        if self.mean_photon_number < 0:
            raise ValueError("mean_photon_number must be non-negative")

    @property
    def k_p(self) -> float:
        return 2.0 * np.pi / self.probe_wavelength

    @property
    def single_atom_shift(self) -> float:
        """g0^2 / Delta_ca, signed (rad/s)."""
        return self.single_atom_coupling**2 / self.atom_detuning

    def cavity_filter(self, omega):
        """Cavity response kappa^2/(kappa^2 + omega^2) seen by a sideband at ``omega``."""
        k2 = self.half_linewidth**2
        return k2 / (k2 + np.asarray(omega, dtype=float) ** 2)


@dataclass(frozen=True)
class Oscillator:
    """Collective center-of-mass mode of the atoms held in one site."""

    site: Site
    atom_count: int
    linewidth: float
    thermal_occupation: float = 0.0
    cooperativity: float = 0.0
    drive_occupation: float = 0.0
    linear_coupling: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.thermal_occupation < 0 or self.drive_occupation < 0:
            raise ValueError("occupations must be non-negative")
        if self.cooperativity < 0:
            raise ValueError("cooperativity must be non-negative")

    @property
    def frequency(self) -> float:
        return self.site.frequency

    @property
    def backaction_occupation(self) -> float:
        return self.cooperativity / 2.0

    @property
    def occupation(self) -> float:
        return self.thermal_occupation + self.backaction_occupation + self.drive_occupation


def _probe_phase(z, cavity):
    return cavity.k_p * (np.asarray(z, dtype=float) - cavity.probe_phase_offset)


def gradient_factor(z, cavity: CavityConfig):
    """Local probe-intensity gradient sin(2 k_p z)."""
    return np.sin(2.0 * _probe_phase(z, cavity))


def linear_coupling(site: Site, n_atoms: int, cavity: CavityConfig) -> float:
    """Cavity frequency shift per unit collective displacement (rad/s/m, signed)."""
    return float(n_atoms * cavity.k_p * cavity.single_atom_shift
                 * gradient_factor(site.position, cavity))


def dispersive_shift(oscillators, cavity: CavityConfig) -> float:
    """Mean cavity-resonance shift from all atoms, N g0^2/Delta sin^2(k_p z) summed."""
    total = 0.0
    for osc in oscillators:
        total += osc.atom_count * np.sin(_probe_phase(osc.site.position, cavity)) ** 2
    return float(cavity.single_atom_shift * total)


def zero_point_amplitude(n_atoms: int, omega: float, atom_mass: float = RB87_MASS) -> float:
    return float(np.sqrt(const.hbar / (2.0 * n_atoms * atom_mass * omega)))


def cooperativity(osc: Oscillator, cavity: CavityConfig,
                  atom_mass: float = RB87_MASS) -> tuple[float, float]:
    """Return ``(C, nu_ba)`` with ``C = 4 g^2/(kappa Gamma)`` and ``nu_ba = C/2``.

    ``g = |G| z_zpf sqrt(n_cav)`` uses the oscillator's stored linear
    coupling and the collective zero-point amplitude of ``N`` atoms.
    """
    if not osc.linewidth > 0:
        raise ValueError("oscillator linewidth must be positive")
    if osc.atom_count == 0 or osc.linear_coupling == 0 or cavity.mean_photon_number == 0:
        return 0.0, 0.0
    zpf = zero_point_amplitude(osc.atom_count, osc.frequency, atom_mass)
    g = abs(osc.linear_coupling) * zpf * np.sqrt(cavity.mean_photon_number)
    c = 4.0 * g**2 / (cavity.half_linewidth * osc.linewidth)
    return float(c), float(c / 2.0)


def make_oscillator(site: Site, n_atoms: int, cavity: CavityConfig, *,
                    linewidth: float, thermal_occupation: float = 0.0,
                    atom_mass: float = RB87_MASS, label: str = "") -> Oscillator:
    """Oscillator for ``n_atoms`` in ``site`` with coupling and C filled in."""
    osc = Oscillator(site=site, atom_count=int(n_atoms), linewidth=linewidth,
                     thermal_occupation=thermal_occupation,
                     linear_coupling=linear_coupling(site, n_atoms, cavity), label=label)
    c, _ = cooperativity(osc, cavity, atom_mass)
    return replace(osc, cooperativity=c)
