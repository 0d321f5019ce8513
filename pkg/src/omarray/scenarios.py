"""Ready-made oscillator arrays for the array, imaging and drive experiments."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .coupling import CavityConfig, Oscillator, gradient_factor, make_oscillator
from .superlattice import AtomCloud, LatticeConfig, find_sites, load_atoms

LABELS = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta")
# total occupations of the six visible oscillators, delta/epsilon dark
ARRAY_OCCUPATIONS = {"alpha": 1.8, "beta": 2.2, "gamma": 1.0, "zeta": 0.9, "eta": 1.3, "theta": 1.8}
ARRAY_UNCERTAINTIES = {"alpha": 0.2, "beta": 0.2, "gamma": 0.1, "zeta": 0.1, "eta": 0.2, "theta": 0.4}


def oscillators_from_cloud(cfg: LatticeConfig, cavity: CavityConfig, cloud: AtomCloud, seed: int, *,
                           linewidth: float, thermal_occupation: float,
                           cutoff: float = 0.05, sites=None) -> list[Oscillator]:
    """Load ``cloud`` into the lattice and build one oscillator per occupied site."""
    if sites is None:
        reach = 3.0 * max(cloud.sigma_tot, cfg.wavelength_a) + 2.0 * cloud.position_jitter
        sites = find_sites(cfg, cloud.center - reach, cloud.center + reach)
    loaded = load_atoms(cloud, sites, seed, cutoff=cutoff)
    return [
        make_oscillator(site, n, cavity, linewidth=linewidth,
                        thermal_occupation=thermal_occupation, atom_mass=cfg.atom_mass)
        for site, n in loaded if n > 0
    ]


def dark_pair_center(cfg: LatticeConfig, cavity: CavityConfig, near: float) -> tuple[float, list]:
    """Midpoint of the adjacent site pair closest to ``near`` straddling a probe-gradient node.

    Returns the midpoint and the eight sites centred on that pair.
    """
    sites = find_sites(cfg, near - 6e-6, near + 6e-6)
    z = np.array([s.position for s in sites])
    grad2 = gradient_factor(z, cavity) ** 2
    best, best_score = None, np.inf
    for i in range(3, len(sites) - 4):
        score = grad2[i] + grad2[i + 1] + 1e-3 * abs(0.5 * (z[i] + z[i + 1]) - near) / 1e-6
        if score < best_score:
            best, best_score = i, score
    mid = 0.5 * (z[best] + z[best + 1])
    return float(mid), sites[best - 3: best + 5]


def eight_site_array(cfg: LatticeConfig, cavity: CavityConfig, *, center: float = 11.7e-6,
               width_fwhm: float = 3.1e-6, total_atoms: int = 5000,
               linewidth: float = 2 * np.pi * 1.2e3, thermal_occupation: float = 1.0,
               occupations=None, seed: int = 0) -> list[Oscillator]:
    """Eight-site array around ``center`` with the two middle sites dark.

    The cloud is centred between the adjacent pair of sites nearest
    ``center`` that straddle a node of the probe-intensity gradient, so the
    fourth and fifth sites (delta, epsilon) barely couple.  Sites are
    labelled alpha..theta by position.  ``occupations`` maps labels to
    total occupations; the thermal part is set to ``total - C/2`` (floored
    at zero).  Labels not in the map keep ``thermal_occupation``.
    """
    mid, sites = dark_pair_center(cfg, cavity, center)
    cloud = AtomCloud(center=mid, width_fwhm=width_fwhm, position_jitter=0.0, total_atoms=total_atoms)
    loaded = dict((s.position, n) for s, n in load_atoms(cloud, sites, seed, cutoff=0.0))
    occupations = ARRAY_OCCUPATIONS if occupations is None else occupations
    out = []
    for label, site in zip(LABELS, sites):
        osc = make_oscillator(site, loaded[site.position], cavity, linewidth=linewidth,
                              thermal_occupation=thermal_occupation, atom_mass=cfg.atom_mass,
                              label=label)
        if label in occupations:
            nu_th = max(occupations[label] - osc.backaction_occupation, 0.0)
            osc = replace(osc, thermal_occupation=nu_th)
        out.append(osc)
    return out


def drive_pair(*, center_frequency: float = 2 * np.pi * 120e3, splitting: float = 2 * np.pi * 5e3,
               linewidth: float = 2 * np.pi * 1.2e3, cooperativity: float = 1.0,
               base_occupation: float = 1.3, atom_count: int = 750) -> list[Oscillator]:
    """Two oscillators ``splitting`` apart with equal C and total base occupation."""
    from .superlattice import Site

    nu_th = base_occupation - cooperativity / 2.0
    if nu_th < 0:
        raise ValueError("base occupation below the backaction floor C/2")
    out = []
    for label, sign in (("alpha", -1), ("beta", 1)):
        w = center_frequency + sign * splitting / 2.0
        site = Site(position=0.0, depth=0.0, curvature=0.0, frequency=w)
        out.append(Oscillator(site=site, atom_count=atom_count, linewidth=linewidth,
                              thermal_occupation=nu_th, cooperativity=cooperativity, label=label))
    return out
