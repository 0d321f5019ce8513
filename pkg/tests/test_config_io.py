import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import constants as const

from omarray import config, io
from omarray.config import ConfigError, build, config_hash, parse_interval, validate
from omarray.spectra import HETERODYNE_PSD, PHASE_DENSITY, Spectrum

KHZ = 2 * np.pi * 1e3


def test_defaults_build_reference_setup(tmp_path):
    cfg = build({}, "simulate", 0, tmp_path)
    assert cfg.lattice.single_color_frequency("a") == pytest.approx(127 * KHZ, rel=1e-9)
    assert cfg.lattice.single_color_frequency("b") == pytest.approx(128 * KHZ, rel=1e-9)
    assert cfg.cavity.half_linewidth == pytest.approx(1820 * KHZ)
    assert cfg.detection.averages == 500 and cfg.detection.efficiency == 0.13
    assert cfg.cloud.sigma_tot == pytest.approx(0.42e-6, rel=1e-3)
    assert cfg.detection.probe_photon_energy == pytest.approx(const.h * const.c / 780e-9)


def test_units_convert_to_si():
    out = config.si({"span_kHz": 2.0, "step_Hz": 50.0, "wavelength_nm": 780.0, "mass_amu": 1.0,
                     "averages": 7, "exclude_kHz": [[1.0, 2.0]]})
    assert out["span"] == pytest.approx(2 * KHZ)
    assert out["step"] == pytest.approx(2 * np.pi * 50)
    assert out["wavelength"] == pytest.approx(780e-9)
    assert out["mass"] == const.atomic_mass
    assert out["averages"] == 7
    assert out["exclude"] == [[KHZ, 2 * KHZ]]


@pytest.mark.parametrize("raw, word", [
    ({"lattice": {"wavelength_a": 862}}, "missing unit"),
    ({"cavity": {"g0_kHz": 13100}}, "wrong unit"),
    ({"cavity": {"finesse": 1e5}}, "unknown key"),
    ({"laser": {}}, "unknown section"),
    ({"lattice": [1, 2]}, "must be a mapping"),
    ({"detection": {"averages": True}}, "finite number"),
    ({"detection": {"efficiency": float("nan")}}, "finite number"),
    ({"analysis": {"exclude_kHz": [[5, 1]]}}, "empty"),
    ({"analysis": {"exclude_kHz": [[1, 2, 3]]}}, "interval"),
    ({"technical_noise": {"spikes": [{"center_kHz": 99, "height": 3}]}}, "lacks"),
    ({"technical_noise": {"spikes": [{"center_kHz": 99, "height": 3, "fwhm_Hz": 600}]}}, "wrong unit"),
    ({"drive": {"amplitudes": 3}}, "list"),
    ({"detection": {"efficiency": 1.5}}, "efficiency"),
])
def test_validation_errors(tmp_path, raw, word):
    with pytest.raises(ConfigError, match=word):
        build(raw, "simulate", 0, tmp_path)


def test_build_rejects_bad_experiment_and_seed(tmp_path):
    with pytest.raises(ConfigError):
        build({}, "plot", 0, tmp_path)
    for seed in (-1, 1.5, True):
        with pytest.raises(ConfigError):
            build({}, "mri", seed, tmp_path)


def test_partial_sections_merge_over_defaults():
    raw = validate({"detection": {"averages": 50}})
    assert raw["detection"]["averages"] == 50
    assert raw["detection"]["efficiency"] == 0.13
    assert validate(None) == validate({})


def test_exclusions_and_spikes(tmp_path):
    cfg = build({"analysis": {"exclude_kHz": ["96:102", [150, 151]]},
                 "technical_noise": {"spikes": [{"center_kHz": 99, "height": 30, "fwhm_kHz": 0.6}]}},
                "mri", 0, tmp_path)
    assert cfg.exclusions == [(96 * KHZ, 102 * KHZ), (150 * KHZ, 151 * KHZ)]
    ((c, h, w),) = cfg.spikes
    assert (c, h, w) == (pytest.approx(99 * KHZ), 30.0, pytest.approx(0.6 * KHZ))


def test_parse_interval():
    assert parse_interval("96:102") == [96.0, 102.0]
    assert parse_interval("-1.5:2e1") == [-1.5, 20.0]
    for bad in ("96", "a:b", "1:2:3"):
        with pytest.raises(ConfigError):
            parse_interval(bad)


def test_config_hash_is_stable_and_sensitive():
    a = validate({})
    assert config_hash(a) == config_hash(validate({}))
    assert config_hash(a) != config_hash(validate({"detection": {"averages": 501}}))


def test_load(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 4\ndetection:\n  averages: 20\n")
    assert config.load(p) == {"seed": 4, "detection": {"averages": 20}}
    p.write_text("")
    assert config.load(p) == {}
    p.write_text("a: [1,\n")
    with pytest.raises(ConfigError, match="YAML"):
        config.load(p)
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "missing.yaml")


def test_example_config_file_is_valid(tmp_path):
    path = os.path.join(os.path.dirname(__file__), "..", "configs", "default.yaml")
    raw = config.load(path)
    seed = raw.pop("seed")
    cfg = build(raw, "simulate", seed, tmp_path)
    assert cfg.raw == validate({})


def test_write_atomic_leaves_no_temp_files(tmp_path):
    p = io.write_atomic(tmp_path / "sub" / "f.txt", "hello")
    assert p.read_text() == "hello"
    io.write_atomic(p, b"again")
    assert p.read_bytes() == b"again"
    assert sorted(x.name for x in p.parent.iterdir()) == ["f.txt"]


def test_write_atomic_keeps_old_file_on_failure(tmp_path):
    p = io.write_atomic(tmp_path / "f.txt", "old")

    with pytest.raises(TypeError):
        io.write_atomic(p, 12345)
    assert p.read_text() == "old"
    assert sorted(x.name for x in tmp_path.iterdir()) == ["f.txt"]


@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False), min_size=1, max_size=30),
       st.sampled_from([HETERODYNE_PSD, PHASE_DENSITY]))
def test_spectrum_round_trip_is_exact(tmp_path_factory, values, kind):
    d = tmp_path_factory.mktemp("spec")
    freqs = np.arange(len(values)) * 2 * np.pi * 50.0
    s = Spectrum(freqs, np.array(values), kind, averages=500, metadata={"seed": 9})
    csv, side = io.write_spectrum(d / "s.csv", s, {"note": "x"})
    back = io.read_spectrum(csv)
    assert back.kind == kind and back.averages == 500
    np.testing.assert_array_equal(back.values, s.values)
    np.testing.assert_allclose(back.frequencies, s.frequencies, rtol=1e-15, atol=1e-9)
    meta = json.loads(side.read_text())
    assert meta["seed"] == 9 and meta["note"] == "x" and meta["units"]


def test_json_handles_numpy_and_non_finite(tmp_path):
    text = io.dumps({"a": np.float64(1.5), "b": np.arange(3), "c": np.nan, "d": (np.int64(2),),
                     "e": tmp_path})
    assert json.loads(text) == {"a": 1.5, "b": [0, 1, 2], "c": None, "d": [2], "e": str(tmp_path)}


def test_manifest(tmp_path):
    f = io.write_csv(tmp_path / "x.csv", ["a", "b"], [(1, 0.1), (2, 0.2)])
    assert f.read_text() == "a,b\n1,0.1\n2,0.2\n"
    m = io.write_manifest(tmp_path, experiment="mri", seed=5, config_hash="h", backend="numpy",
                          files=[f], status="ok", started="t0")
    data = io.read_json(m)
    assert data["files"] == {"x.csv": io.sha256_file(f)}
    assert data["seed"] == 5 and data["backend"] == "numpy"
    assert set(data["versions"]) >= {"numpy", "scipy", "numba", "pyyaml", "python"}
    assert data["timestamps"]["started"] == "t0"
