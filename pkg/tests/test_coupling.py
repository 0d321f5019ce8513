import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omarray.coupling import (CavityConfig, Oscillator, cooperativity, dispersive_shift,
                              gradient_factor, linear_coupling, make_oscillator,
                              zero_point_amplitude)
from omarray.superlattice import RB87_MASS, Site

KHZ = 2 * np.pi * 1e3

# direct evaluations of N k_p g0^2/Delta, N g0^2/Delta, sqrt(hbar/(2 N m w)),
# |G| z_zpf sqrt(n_cav) and 4 g^2/(kappa Gamma) at N=600, 120 kHz, 1.2 kHz
G_600 = -1.30286370097765e14
SHIFT_600_MHZ = -2.57415
ZPF_600 = 8.98690135887729e-10
G_RATE_600 = 199392.104965738
C_600 = 1.84443577371588


def site_at(z, freq=2 * np.pi * 120e3):
    return Site(position=z, depth=1e-28, curvature=RB87_MASS * freq**2, frequency=freq)


def osc(z, n, cavity, linewidth=2 * np.pi * 1.2e3):
    return make_oscillator(site_at(z), n, cavity, linewidth=linewidth)


def test_cavity_validation():
    with pytest.raises(ValueError):
        CavityConfig(half_linewidth=0.0)
    with pytest.raises(ValueError):
        CavityConfig(single_atom_coupling=-1.0)
    with pytest.raises(ValueError):
        CavityConfig(atom_detuning=0.0)
    with pytest.raises(ValueError):
        CavityConfig(mean_photon_number=-1.0)


def test_linear_coupling_values(cavity):
    lam = cavity.probe_wavelength
    assert linear_coupling(site_at(lam / 8), 600, cavity) == pytest.approx(G_600, rel=1e-12)
    assert linear_coupling(site_at(lam / 8), 0, cavity) == 0.0
    assert abs(linear_coupling(site_at(lam / 2), 600, cavity)) < 1e-6 * abs(G_600)
    # sign follows the gradient
    assert linear_coupling(site_at(3 * lam / 8), 600, cavity) == pytest.approx(-G_600, rel=1e-12)


def test_dispersive_shift_values(cavity):
    lam = cavity.probe_wavelength
    assert dispersive_shift([], cavity) == 0.0
    shift = dispersive_shift([osc(lam / 4, 600, cavity)], cavity)
    assert shift / (2 * np.pi * 1e6) == pytest.approx(SHIFT_600_MHZ, rel=1e-5)


@given(st.lists(st.tuples(st.floats(0, 20e-6), st.integers(0, 2000)), max_size=8))
def test_dispersive_shift_sign_and_additivity(items):
    cavity = CavityConfig()
    oscs = [osc(z, n, cavity) for z, n in items]
    half = len(oscs) // 2
    total = dispersive_shift(oscs, cavity)
    assert total <= 0.0
    parts = dispersive_shift(oscs[:half], cavity) + dispersive_shift(oscs[half:], cavity)
    assert total == pytest.approx(parts, rel=1e-14, abs=1e-300)


def test_shift_is_exactly_additive_for_disjoint_lists(cavity):
    a = [osc(1e-6, 400, cavity), osc(2.3e-6, 500, cavity)]
    b = [osc(5e-6, 700, cavity)]
    # summation order is the list order, so this is exact
    assert dispersive_shift(a + b, cavity) == dispersive_shift(a, cavity) + dispersive_shift(b, cavity)


def test_zero_point_and_cooperativity(cavity):
    w = 2 * np.pi * 120e3
    assert zero_point_amplitude(600, w) == pytest.approx(ZPF_600, rel=1e-12)
    o = osc(cavity.probe_wavelength / 8, 600, cavity)
    c, nu_ba = cooperativity(o, cavity)
    assert c == pytest.approx(C_600, rel=1e-10)
    assert 0.5 < c < 5
    assert nu_ba == c / 2
    g = abs(o.linear_coupling) * ZPF_600 * np.sqrt(cavity.mean_photon_number)
    assert g == pytest.approx(G_RATE_600, rel=1e-10)
    assert o.cooperativity == c
    assert o.backaction_occupation == c / 2


def test_cooperativity_edge_cases(cavity):
    dark = CavityConfig(mean_photon_number=0.0)
    assert cooperativity(osc(1e-7, 600, dark), dark) == (0.0, 0.0)
    o = Oscillator(site=site_at(1e-7), atom_count=600, linewidth=0.0)
    with pytest.raises(ValueError):
        cooperativity(o, cavity)
    o = Oscillator(site=site_at(1e-7), atom_count=600, linewidth=1.0, cooperativity=1.0)
    assert o.backaction_occupation == 0.5


def test_cooperativity_scales_with_atoms_and_photons(cavity):
    z = 1.234e-6
    c1 = osc(z, 500, cavity).cooperativity
    c2 = osc(z, 1000, cavity).cooperativity
    assert c2 == pytest.approx(2 * c1, rel=1e-3)
    hot = CavityConfig(mean_photon_number=2 * cavity.mean_photon_number)
    assert osc(z, 500, hot).cooperativity == pytest.approx(2 * c1, rel=1e-12)


def test_coupling_argmax_offset_from_shift_argmax(cavity):
    lam = cavity.probe_wavelength
    z = np.linspace(0.0, lam, 4001)
    g = np.abs(gradient_factor(z, cavity))
    intensity = np.sin(cavity.k_p * z) ** 2
    dz = z[1] - z[0]
    zg = z[np.argmax(g)]
    zi = z[np.argmax(intensity)]
    # intensity repeats every lam/2; its extrema and the gradient maxima
    # alternate every lam/8
    offset = abs(zg - zi) % (lam / 4)
    assert min(offset, lam / 4 - offset) == pytest.approx(lam / 8, abs=dz)
    # |G| vanishes at intensity extrema
    extrema = np.arange(5) * lam / 4
    np.testing.assert_allclose(gradient_factor(extrema, cavity), 0.0, atol=1e-12)


def test_probe_phase_offset_moves_the_pattern():
    base = CavityConfig()
    moved = CavityConfig(probe_phase_offset=100e-9)
    assert gradient_factor(1.1e-6, moved) == pytest.approx(gradient_factor(1.0e-6, base), abs=1e-12)


def test_occupation_sum(cavity):
    o = Oscillator(site=site_at(0.0), atom_count=1, linewidth=1.0, thermal_occupation=1.0,
                   cooperativity=1.0, drive_occupation=0.25)
    assert o.occupation == 1.75
    with pytest.raises(ValueError):
        Oscillator(site=site_at(0.0), atom_count=1, linewidth=1.0, thermal_occupation=-1.0)
