"""Run configuration: a YAML file with unit-suffixed keys, merged over
defaults, validated, and converted to SI / angular-frequency values."""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import constants as const

from .coupling import CavityConfig
from .spectra import DetectionConfig
from .superlattice import AtomCloud, LatticeConfig

EXPERIMENTS = ("simulate", "analyze", "mri", "drive", "roundtrip")

TWO_PI = 2 * np.pi
# suffix -> factor to SI; frequencies become angular (rad/s)
UNITS = {
    "nm": 1e-9, "um": 1e-6,
    "Hz": TWO_PI, "kHz": TWO_PI * 1e3, "MHz": TWO_PI * 1e6, "GHz": TWO_PI * 1e9,
    "mW": 1e-3, "amu": const.atomic_mass,
}

_LATTICE = LatticeConfig.default()
DEFAULTS = {
    # depths as U/h, back-computed from 127/128 kHz single-color trap frequencies
    "lattice": {"wavelength_a_nm": 862.0, "wavelength_b_nm": 843.0,
                "depth_a_over_h_kHz": _LATTICE.depth_a / const.h / 1e3,
                "depth_b_over_h_kHz": _LATTICE.depth_b / const.h / 1e3,
                "atom_mass_amu": 86.909},
    "cavity": {"kappa_half_kHz": 1820.0, "g0_MHz": 13.1, "detuning_GHz": -40.0,
               "probe_wavelength_nm": 780.0, "mean_photon_number": 2.9,
               "probe_phase_offset_nm": 0.0},
    "detection": {"efficiency": 0.13, "lo_power_mW": 1.0, "averages": 500},
    "mechanics": {"linewidth_kHz": 1.2, "thermal_occupation": 1.0},
    "grid": {"span_kHz": 250.0, "step_Hz": 50.0},
    "analysis": {"threshold": 4.0, "window": 5.0, "min_significance": 3.0, "exclude_kHz": []},
    "technical_noise": {"spikes": []},
    "array": {"center_um": 11.7, "width_fwhm_um": 3.1, "total_atoms": 5000,
              "occupations": {"alpha": 1.8, "beta": 2.2, "gamma": 1.0,
                              "zeta": 0.9, "eta": 1.3, "theta": 1.8}},
    "cloud": {"width_fwhm_um": 0.3, "position_jitter_um": 0.294, "total_atoms": 1000},
    "imaging": {"start_um": 0.0, "stop_um": 19.4, "step_um": 0.2, "occupancy_cutoff": 0.05},
    "drive": {"center_kHz": 120.0, "splitting_kHz": 5.0, "cooperativity": 1.0,
              "base_occupation": 1.3, "atom_count": 750, "target": "alpha",
              "amplitudes": [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], "confidence": 0.97},
    "roundtrip": {"tolerance_sigma": 3.0},
}
SPIKE_KEYS = ("center_kHz", "height", "fwhm_kHz")
# keys whose values are not plain scalars
STRUCTURED = {("analysis", "exclude_kHz"), ("technical_noise", "spikes"), ("array", "occupations"),
              ("drive", "amplitudes"), ("drive", "target")}


class ConfigError(ValueError):
    pass


def _unit_of(key: str):
    m = re.fullmatch(r"(.+)_([A-Za-z]+)", key)
    if m and m.group(2) in UNITS:
        return m.group(1), m.group(2)
    return key, None


def _check_section(name, given, allowed):
    if not isinstance(given, dict):
        raise ConfigError(f"section [{name}] must be a mapping")
    bases = {_unit_of(k)[0]: k for k in allowed}
    for key in given:
        if key in allowed:
            continue
        base, unit = _unit_of(key)
        if base in bases and _unit_of(bases[base])[1] is not None:
            want = bases[base]
            if unit is None:
                raise ConfigError(f"{name}.{key}: missing unit, use {want}")
            raise ConfigError(f"{name}.{key}: wrong unit, use {want}")
        raise ConfigError(f"{name}.{key}: unknown key")


def _number(name, key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(f"{name}.{key}: expected a finite number, got {v!r}")
    return float(v)


def validate(raw: dict) -> dict:
    """Merge ``raw`` over the defaults and check keys, units and value types."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    merged = copy.deepcopy(DEFAULTS)
    for name, section in raw.items():
        if name not in DEFAULTS:
            raise ConfigError(f"unknown section [{name}]")
        _check_section(name, section, DEFAULTS[name])
        merged[name].update(copy.deepcopy(section))
    for name, section in merged.items():
        for key, v in section.items():
            if (name, key) not in STRUCTURED:
                section[key] = _number(name, key, v)
    for k in ("averages",):
        merged["detection"][k] = int(merged["detection"][k])
    for sec in ("array", "cloud", "drive"):
        key = "total_atoms" if sec != "drive" else "atom_count"
        merged[sec][key] = int(merged[sec][key])
    merged["analysis"]["exclude_kHz"] = [_interval(v) for v in merged["analysis"]["exclude_kHz"]]
    spikes = []
    for sp in merged["technical_noise"]["spikes"]:
        if not isinstance(sp, dict):
            raise ConfigError("technical_noise.spikes entries must be mappings")
        _check_section("technical_noise.spikes", sp, dict.fromkeys(SPIKE_KEYS))
        missing = set(SPIKE_KEYS) - set(sp)
        if missing:
            raise ConfigError(f"technical_noise.spikes entry lacks {sorted(missing)}")
        spikes.append({k: _number("spike", k, sp[k]) for k in SPIKE_KEYS})
    merged["technical_noise"]["spikes"] = spikes
    occ = merged["array"]["occupations"]
    if not isinstance(occ, dict):
        raise ConfigError("array.occupations must map labels to occupations")
    merged["array"]["occupations"] = {str(k): _number("array.occupations", k, v) for k, v in occ.items()}
    amps = merged["drive"]["amplitudes"]
    if not isinstance(amps, list):
        raise ConfigError("drive.amplitudes must be a list")
    merged["drive"]["amplitudes"] = [_number("drive", "amplitudes", a) for a in amps]
    merged["drive"]["target"] = str(merged["drive"]["target"])
    return merged


def _interval(v):
    if isinstance(v, str):
        v = parse_interval(v)
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"exclusion interval must be [lo, hi], got {v!r}")
    lo, hi = (_number("analysis", "exclude_kHz", x) for x in v)
    if not lo < hi:
        raise ConfigError(f"exclusion interval [{lo}, {hi}] is empty")
    return [lo, hi]


def parse_interval(text: str):
    """``"LO:HI"`` -> ``[lo, hi]`` (floats, same unit as given)."""
    try:
        lo, hi = text.split(":")
        return [float(lo), float(hi)]
    except ValueError as exc:
        raise ConfigError(f"bad interval {text!r}, expected LO:HI") from exc


def si(section: dict) -> dict:
    """Section values with unit suffixes stripped and converted to SI."""
    out = {}
    for key, v in section.items():
        base, unit = _unit_of(key)
        if unit is None:
            out[key] = v
        elif isinstance(v, list):
            out[base] = [[x * UNITS[unit] for x in iv] if isinstance(iv, list) else iv * UNITS[unit]
                         for iv in v]
        else:
            out[base] = v * UNITS[unit]
    return out


@dataclass
class RunConfig:
    lattice: LatticeConfig
    cavity: CavityConfig
    detection: DetectionConfig
    cloud: AtomCloud
    experiment: str
    seed: int
    output_dir: Path
    raw: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return si(self.raw[name])

    @property
    def exclusions(self):
        return [tuple(iv) for iv in self.section("analysis")["exclude"]]

    @property
    def spikes(self):
        return [tuple(si(sp)[k] for k in ("center", "height", "fwhm"))
                for sp in self.raw["technical_noise"]["spikes"]]

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build(raw: dict, experiment: str, seed: int, output_dir) -> RunConfig:
    """Validated :class:`RunConfig` from a (partial) raw configuration."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    raw = validate(raw)
    lat, cav, det, cl = (si(raw[k]) for k in ("lattice", "cavity", "detection", "cloud"))
    try:
        # U/h given as a frequency: the converted angular value times hbar is U
        lattice = LatticeConfig(lat["wavelength_a"], lat["wavelength_b"],
                                const.hbar * lat["depth_a_over_h"], const.hbar * lat["depth_b_over_h"],
                                atom_mass=lat["atom_mass"])
        cavity = CavityConfig(half_linewidth=cav["kappa_half"], single_atom_coupling=cav["g0"],
                              atom_detuning=cav["detuning"], probe_wavelength=cav["probe_wavelength"],
                              mean_photon_number=cav["mean_photon_number"],
                              probe_phase_offset=cav["probe_phase_offset"])
        detection = DetectionConfig(efficiency=det["efficiency"], lo_power=det["lo_power"],
                                    probe_photon_energy=const.h * const.c / cav["probe_wavelength"],
                                    averages=det["averages"])
        cloud = AtomCloud(center=0.0, width_fwhm=cl["width_fwhm"],
                          position_jitter=cl["position_jitter"], total_atoms=cl["total_atoms"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(lattice, cavity, detection, cloud, experiment, int(seed), Path(output_dir), raw)


def load(path) -> dict:
    """Raw configuration mapping from a YAML file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return {} if data is None else data
