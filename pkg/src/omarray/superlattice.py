"""Two-color optical superlattice: potential, trap minima and atom loading.

All quantities are SI (m, J, kg, rad/s).  Lengths in nm and frequencies in
kHz only appear at the file boundary (see :mod:`omarray.io`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants as const

from ._kernels import kernels

RB87_MASS_AMU = 86.909
RB87_MASS = RB87_MASS_AMU * const.atomic_mass
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))

# bracketing grid is this fraction of the shorter wavelength
GRID_FRACTION = 50
BISECTION_TOL = 1e-11  # m (0.01 nm)


class DegeneratePotentialError(ValueError):
    """Raised when the lattice has no structure to search (both depths zero)."""


class DegenerateWavelengthError(ValueError):
    """Raised when a beat period is requested for equal wavelengths."""


@dataclass(frozen=True)
class LatticeConfig:
    wavelength_a: float
    wavelength_b: float
    depth_a: float
    depth_b: float
    atom_mass: float = RB87_MASS

    def __post_init__(self):
        if not (self.wavelength_a > 0 and self.wavelength_b > 0):
            raise ValueError("wavelengths must be positive")
        if self.depth_a < 0 or self.depth_b < 0:
            raise ValueError("lattice depths must be non-negative")
        if not self.atom_mass > 0:
            raise ValueError("atom_mass must be positive")

    @property
    def k_a(self) -> float:
        return 2.0 * np.pi / self.wavelength_a

    @property
    def k_b(self) -> float:
        return 2.0 * np.pi / self.wavelength_b

    @classmethod
    def from_frequencies(cls, wavelength_a, wavelength_b, omega_a, omega_b,
                         atom_mass=RB87_MASS):
        """Build a config whose single-color traps oscillate at ``omega_a``/``omega_b``.

        Inverts ``omega = sqrt(2 k^2 U / m)`` for each color.
        """
        ka = 2.0 * np.pi / wavelength_a
        kb = 2.0 * np.pi / wavelength_b
        return cls(
            wavelength_a=wavelength_a,
            wavelength_b=wavelength_b,
            depth_a=atom_mass * omega_a**2 / (2.0 * ka**2),
            depth_b=atom_mass * omega_b**2 / (2.0 * kb**2),
            atom_mass=atom_mass,
        )

    @classmethod
    def default(cls) -> "LatticeConfig":
        """862/843 nm lattice with 127/128 kHz single-color trap frequencies."""
        return cls.from_frequencies(
            862e-9, 843e-9, 2 * np.pi * 127e3, 2 * np.pi * 128e3
        )

    def single_color_frequency(self, color: str = "a") -> float:
        k, u = (self.k_a, self.depth_a) if color == "a" else (self.k_b, self.depth_b)
        return float(np.sqrt(2.0 * k**2 * u / self.atom_mass))


@dataclass(frozen=True)
class Site:
    position: float
    depth: float
    curvature: float
    frequency: float


@dataclass(frozen=True)
class AtomCloud:
    center: float
    width_fwhm: float
    position_jitter: float = 0.0
    total_atoms: int = 1000

    def __post_init__(self):
        if self.width_fwhm < 0 or self.position_jitter < 0:
            raise ValueError("cloud width and jitter must be non-negative")
        if self.total_atoms < 0:
            raise ValueError("total_atoms must be non-negative")

    @property
    def sigma_tot(self) -> float:
        """Effective FWHM including shot-to-shot position jitter."""
        return float(np.hypot(self.width_fwhm, self.position_jitter))


def potential(z, cfg: LatticeConfig):
    """Lattice potential energy (J) at position(s) ``z`` (m)."""
    z = np.asarray(z, dtype=float)
    return cfg.depth_a * np.sin(cfg.k_a * z) ** 2 + cfg.depth_b * np.sin(cfg.k_b * z) ** 2


def potential_slope(z, cfg: LatticeConfig):
    z = np.ascontiguousarray(np.atleast_1d(z), dtype=float)
    return kernels.potential_slope(z, cfg.k_a, cfg.k_b, cfg.depth_a, cfg.depth_b)


def potential_curvature(z, cfg: LatticeConfig):
    z = np.asarray(z, dtype=float)
    ka, kb = cfg.k_a, cfg.k_b
    return (2.0 * cfg.depth_a * ka**2 * np.cos(2.0 * ka * z)
            + 2.0 * cfg.depth_b * kb**2 * np.cos(2.0 * kb * z))


def superlattice_period(cfg: LatticeConfig) -> float:
    """Beat period pi/|k_A - k_B| of the two standing waves."""
    dk = abs(cfg.k_a - cfg.k_b)
    if dk == 0.0:
        raise DegenerateWavelengthError("wavelength_a == wavelength_b has no beat period")
    return float(np.pi / dk)


def _stationary_points(cfg, lo, hi, step):
    n = int(np.ceil((hi - lo) / step)) + 1
    z = lo + step * np.arange(n)
    s = potential_slope(z, cfg)
    up = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    down = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
    minima = kernels.bisect_minima(z[up], z[up + 1], cfg.k_a, cfg.k_b,
                                   cfg.depth_a, cfg.depth_b, BISECTION_TOL)
    # negated depths turn maxima into minima of -U
    maxima = kernels.bisect_minima(z[down], z[down + 1], cfg.k_a, cfg.k_b,
                                   -cfg.depth_a, -cfg.depth_b, BISECTION_TOL)
    return np.asarray(minima), np.asarray(maxima)


def find_sites(cfg: LatticeConfig, z_min: float, z_max: float,
               min_barrier_quanta: float = 1.0) -> list[Site]:
    """All bound local minima of the lattice potential in ``[z_min, z_max]``.

    Minima are bracketed by sign changes of the analytic slope on a grid of
    one fiftieth of the shorter wavelength and refined by bisection.  A
    minimum is kept only if its barrier to the lower neighbouring maximum
    is at least ``min_barrier_quanta`` * hbar * omega.
    """
    if z_min >= z_max:
        raise ValueError("z_min must be < z_max")
    if cfg.depth_a == 0 and cfg.depth_b == 0:
        raise DegeneratePotentialError("both lattice depths are zero")

    step = min(cfg.wavelength_a, cfg.wavelength_b) / GRID_FRACTION
    pad = max(cfg.wavelength_a, cfg.wavelength_b)
    minima, maxima = _stationary_points(cfg, z_min - pad, z_max + pad, step)

    sites = []
    u_max = potential(maxima, cfg)
    for z0 in minima:
        if z0 < z_min - BISECTION_TOL or z0 > z_max + BISECTION_TOL:
            continue
        curv = float(potential_curvature(z0, cfg))
        if curv <= 0:
            continue
        omega = np.sqrt(curv / cfg.atom_mass)
        left = u_max[maxima < z0]
        right = u_max[maxima > z0]
        walls = ([left[-1]] if left.size else []) + ([right[0]] if right.size else [])
        if not walls:
            continue
        u0 = float(potential(z0, cfg))
        barrier = min(walls) - u0
        if barrier < min_barrier_quanta * const.hbar * omega:
            continue
        sites.append(Site(position=float(z0), depth=float(barrier),
                          curvature=curv, frequency=float(omega)))
    return sites


def _largest_remainder(weights, total):
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = int(total - counts.sum())
    if short > 0:
        # ties broken by position order for reproducibility
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def load_atoms(cloud: AtomCloud, sites: list[Site], seed: int,
               cutoff: float = 0.01) -> list[tuple[Site, int]]:
    """Partition ``cloud.total_atoms`` among ``sites``.

    Per shot the cloud is a Gaussian of FWHM ``width_fwhm`` whose center is
    displaced by a zero-mean Gaussian draw of FWHM ``position_jitter``.
    Site weights are the envelope sampled at each site, normalized over
    ``sites``; weights below ``cutoff`` are dropped, the rest renormalized
    and converted to integer counts by largest remainder, so the returned
    counts sum to exactly ``total_atoms``.
    """
    if not sites:
        raise ValueError("no sites to load")
    rng = np.random.default_rng(seed)
    shift = rng.normal(0.0, cloud.position_jitter / FWHM_PER_SIGMA) if cloud.position_jitter > 0 else 0.0
    center = cloud.center + shift
    z = np.array([s.position for s in sites])
    weights = _envelope_weights(z, center, cloud.width_fwhm)
    keep = weights >= cutoff
    if not keep.any():
        keep = weights == weights.max()
    w = np.where(keep, weights, 0.0)
    w /= w.sum()
    counts = _largest_remainder(w, int(cloud.total_atoms))
    return [(s, int(n)) for s, n, k in zip(sites, counts, keep) if k]


def _envelope_weights(z, center, fwhm):
    d = z - center
    sigma = fwhm / FWHM_PER_SIGMA
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        expo = -0.5 * (d / sigma) ** 2 if sigma > 0 else np.full_like(z, -np.inf)
    if not np.isfinite(expo).all():
        # zero or unresolvably narrow envelope: all atoms in the nearest site
        w = np.zeros_like(z)
        w[np.argmin(np.abs(d))] = 1.0
        return w
    # shift the exponent so the largest weight is exp(0): no underflow to all-zero
    w = np.exp(expo - expo.max())
    return w / w.sum()


def mean_site_spacing(sites: list[Site]) -> float:
    z = np.array([s.position for s in sites])
    return float(np.mean(np.diff(z)))
