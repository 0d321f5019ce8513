"""Experiment orchestration: each subcommand turns a RunConfig into files.

Exit codes: 0 success, 1 round-trip check failed, 2 configuration error,
3 I/O error, 4 numerical/runtime error.  Failures leave a machine-readable ``error.json``.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy import constants as const

from . import io
from ._kernels import BACKEND
from .addressing import crosstalk_slopes, run_drive_series
from .analysis import cooperativity_from_peak, estimate_occupations
from .config import ConfigError, RunConfig
from .coupling import gradient_factor
from .imaging import EmptyRidgeError, extract_ridge, reconstruct_sites, scan_map
from .rng import derive_seed
from .scenarios import drive_pair, eight_site_array
from .spectra import (HETERODYNE_PSD, DetectionConfig, add_technical_noise, frequency_grid,
                      photon_spectrum, sample_noisy, shot_noise_floor, to_detected_psd)
from .superlattice import find_sites

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME = 0, 1, 2, 3, 4
KHZ = io.KHZ
UM = 1e-6


def _grid(cfg: RunConfig, signed: bool):
    g = cfg.section("grid")
    return frequency_grid(g["span"], g["step"], signed=signed)


def _fit_options(cfg: RunConfig) -> dict:
    a = cfg.section("analysis")
    return {"threshold": a["threshold"], "window": a["window"],
            "min_significance": a["min_significance"],
            "linewidth_guess": cfg.section("mechanics")["linewidth"]}


def _sidecar(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "experiment": cfg.experiment}


def _oscillator_record(o, cavity):
    return {"label": o.label, "position_um": o.site.position / UM, "frequency_kHz": o.frequency / KHZ,
            "fwhm_kHz": o.linewidth / KHZ, "atom_count": o.atom_count, "C": o.cooperativity,
            "nu_th": o.thermal_occupation, "nu_ba": o.backaction_occupation,
            "nu_drive": o.drive_occupation, "nu_bar": o.occupation,
            "gradient_factor": float(gradient_factor(o.site.position, cavity))}


def simulate(cfg: RunConfig, out: Path) -> list[Path]:
    """Noisy heterodyne spectra (atoms in / released) of the eight-site array."""
    arr_cfg = cfg.section("array")
    mech = cfg.section("mechanics")
    arr = eight_site_array(cfg.lattice, cfg.cavity, center=arr_cfg["center"],
                     width_fwhm=arr_cfg["width_fwhm"], total_atoms=arr_cfg["total_atoms"],
                     linewidth=mech["linewidth"], thermal_occupation=mech["thermal_occupation"],
                     occupations=arr_cfg["occupations"], seed=derive_seed(cfg.seed, "simulate", "load"))
    grid = _grid(cfg, signed=True)
    photons = photon_spectrum(arr, cfg.cavity, grid)
    if cfg.spikes:
        photons = add_technical_noise(photons, cfg.spikes)
    det = cfg.detection
    on = sample_noisy(to_detected_psd(photons, det, "full"), det, derive_seed(cfg.seed, "simulate", "on"))
    off = sample_noisy(shot_noise_floor(grid, det, "full"), det, derive_seed(cfg.seed, "simulate", "off"))
    files = [*io.write_spectrum(out / "spectrum_on.csv", on, _sidecar(cfg)),
             *io.write_spectrum(out / "spectrum_off.csv", off, _sidecar(cfg)),
             *io.write_spectrum(out / "photon_spectrum_expected.csv", photons, _sidecar(cfg))]
    truth = {"oscillators": [_oscillator_record(o, cfg.cavity) for o in arr],
             "visible": sorted(arr_cfg["occupations"]), "seed": cfg.seed}
    files.append(io.write_json(out / "truth.json", truth))
    return files


def analyze(cfg: RunConfig, out: Path, on_path, off_path) -> list[Path]:
    """Sideband-asymmetry thermometry on two spectrum CSVs; never reads ground truth."""
    on, off = io.read_spectrum(on_path), io.read_spectrum(off_path)
    for s, p in ((on, on_path), (off, off_path)):
        if s.kind != HETERODYNE_PSD:
            raise ConfigError(f"{p}: expected a {HETERODYNE_PSD} spectrum, got {s.kind}")
    m = on.averages or cfg.detection.averages
    det = DetectionConfig(efficiency=cfg.detection.efficiency, lo_power=cfg.detection.lo_power,
                          probe_photon_energy=cfg.detection.probe_photon_energy, averages=int(m))
    pairs = estimate_occupations(on, off, det, cfg.cavity, cfg.exclusions, **_fit_options(cfg))
    records = []
    for p in pairs:
        occ = p.occupation
        nu = occ.value if occ else None
        width = p.stokes.linewidth
        coop = (p.stokes.area / (np.pi * width * (nu + 1.0))
                if occ is not None and width > 0 and nu > -1 else None)
        records.append({"center_kHz": p.frequency / KHZ, "fwhm_kHz": width / KHZ,
                        "peak": p.stokes.peak_height, "peak_antistokes": p.antistokes.peak_height,
                        "area": p.stokes.area, "area_antistokes": p.antistokes.area,
                        "nu_bar": nu, "nu_err": occ.uncertainty if occ else None,
                        "C": coop, "method": "asymmetry", "flags": p.flags})
    # sources by name and hash, so the output does not depend on where inputs live
    sources = [{"file": Path(p).name, "sha256": io.sha256_file(p)} for p in (on_path, off_path)]
    files = [io.write_json(out / "fits.json", {"sources": sources, "fits": records})]
    files.append(io.write_csv(out / "occupations.csv", ["frequency_kHz", "nu_bar", "nu_err", "flags"],
                              [(r["center_kHz"], r["nu_bar"], r["nu_err"], "|".join(r["flags"]))
                               for r in records]))
    return files


def mri(cfg: RunConfig, out: Path) -> list[Path]:
    """Loading-position scan, ridge extraction and site reconstruction."""
    im = cfg.section("imaging")
    mech = cfg.section("mechanics")
    positions = np.arange(im["start"], im["stop"] + 0.5 * im["step"], im["step"])
    rmap = scan_map(cfg.lattice, cfg.cavity, cfg.detection, cfg.cloud, positions, cfg.seed,
                    linewidth=mech["linewidth"], thermal_occupation=mech["thermal_occupation"],
                    grid=_grid(cfg, signed=False), cutoff=im["occupancy_cutoff"], spikes=cfg.spikes)
    opts = _fit_options(cfg)
    opts.pop("window")
    ridge = extract_ridge(rmap, cfg.exclusions, **opts)
    try:
        sites = reconstruct_sites(ridge, cfg.lattice, cfg.cloud)
    except EmptyRidgeError:
        sites = []
    truth = find_sites(cfg.lattice, positions[0], positions[-1])

    fk = rmap.frequencies / KHZ
    zu = rmap.positions / UM
    files = [io.write_csv(out / "map.csv", ["position_um\\frequency_kHz", *map(repr, fk.tolist())],
                          ([z, *row] for z, row in zip(zu, rmap.power.tolist())))]
    files.append(io.write_json(out / "map.json", {
        "units": {"position": "um", "frequency": "kHz", "power": "calibrated phase density",
                  "shift": "kHz (cavity shift / 2 pi)"},
        "shape": list(rmap.power.shape), "seed": cfg.seed, "M": rmap.metadata["averages"],
        **_sidecar(cfg), **{k: v for k, v in rmap.metadata.items() if k not in ("seed", "averages")}}))
    lines = []
    for z, row in zip(zu.tolist(), rmap.power):
        lines += [f"{z!r} {f!r} {float(v)!r}" for f, v in zip(fk.tolist(), row.tolist())]
        lines.append("")
    files.append(io.write_atomic(out / "map.dat", "# position_um frequency_kHz power\n" + "\n".join(lines)))
    files.append(io.write_csv(out / "shifts.csv", ["position_um", "shift_kHz"],
                              zip(zu, rmap.shifts / KHZ)))
    files.append(io.write_csv(out / "ridge.csv", ["position_um", "frequency_kHz", "strength", "fwhm_kHz"],
                              ((p.position / UM, p.frequency / KHZ, p.strength, p.linewidth / KHZ)
                               for p in ridge)))
    files.append(io.write_json(out / "sites.json", [
        {"position_um": s.position / UM, "frequency_kHz": s.frequency / KHZ,
         "position_uncertainty_um": s.position_uncertainty / UM} for s in sites]))
    files.append(io.write_csv(out / "truth_sites.csv", ["position_nm", "depth_over_h_kHz", "frequency_kHz"],
                              ((t.position / 1e-9, t.depth / const.h / 1e3, t.frequency / KHZ)
                               for t in truth)))
    files.append(io.write_json(out / "truth_sites.json", [
        {"position_um": s.position / UM, "frequency_kHz": s.frequency / KHZ,
         "gradient_factor": float(gradient_factor(s.position, cfg.cavity))} for s in truth]))
    return files


def drive(cfg: RunConfig, out: Path) -> list[Path]:
    """Drive series on a two-oscillator pair and the crosstalk bound."""
    d = cfg.section("drive")
    mech = cfg.section("mechanics")
    pair = drive_pair(center_frequency=d["center"], splitting=d["splitting"],
                      linewidth=mech["linewidth"], cooperativity=d["cooperativity"],
                      base_occupation=d["base_occupation"], atom_count=d["atom_count"])
    series = run_drive_series(pair, d["target"], d["amplitudes"], cfg.cavity, cfg.detection,
                              cfg.seed, grid=_grid(cfg, signed=False), exclusions=cfg.exclusions)
    report = crosstalk_slopes(series, d["confidence"])
    files = [io.write_json(out / "series.json", {
        "target": series.target, "labels": series.labels, "amplitudes": series.amplitudes,
        "nu_bar": series.values(), "nu_err": series.errors(),
        "cooperativities": series.cooperativities,
        "cooperativity_errors": series.cooperativity_errors, "config": series.config,
        "truth": [_oscillator_record(o, cfg.cavity) for o in pair]})]
    rows = [(a, lab, e.value, e.uncertainty)
            for a, row in zip(series.amplitudes, series.occupations)
            for lab, e in zip(series.labels, row)]
    files.append(io.write_csv(out / "series.csv", ["amplitude", "oscillator", "nu_bar", "nu_err"], rows))
    files.append(io.write_json(out / "crosstalk.json", {
        "target_slope": report.target_slope, "neighbor_slope": report.neighbor_slope,
        "slope_ratio": report.slope_ratio, "ratio_upper_bound": report.ratio_upper_bound,
        "confidence": report.confidence, "intercepts": report.intercepts,
        "slope_errors": report.slope_errors, "calibration_errors": report.calibration_errors,
        "isolation": report.isolation}))
    return files


def compare_occupations(fits: list, truth: dict, tolerance_sigma: float) -> list[dict]:
    """One check per visible truth oscillator: matched fit within tolerance."""
    checks = []
    for o in truth["oscillators"]:
        if o["label"] not in truth["visible"]:
            continue
        cands = [f for f in fits if f["nu_bar"] is not None
                 and abs(f["center_kHz"] - o["frequency_kHz"]) < o["fwhm_kHz"]]
        if not cands:
            checks.append({"name": f"occupation_{o['label']}", "passed": False, "detail": "not found"})
            continue
        f = min(cands, key=lambda f: abs(f["center_kHz"] - o["frequency_kHz"]))
        err = f["nu_bar"] - o["nu_bar"]
        ok = abs(err) <= tolerance_sigma * f["nu_err"]
        checks.append({"name": f"occupation_{o['label']}", "passed": bool(ok),
                       "detail": {"truth": o["nu_bar"], "estimate": f["nu_bar"], "sigma": f["nu_err"],
                                  "tolerance_sigma": tolerance_sigma}})
    return checks


def roundtrip(cfg: RunConfig, out: Path) -> tuple[list[Path], bool]:
    """simulate -> files -> analyze -> compare, plus exact-inversion checks."""
    files = simulate(cfg, out / "simulate")
    files += analyze(cfg, out / "analyze", out / "simulate" / "spectrum_on.csv",
                     out / "simulate" / "spectrum_off.csv")
    truth = io.read_json(out / "simulate" / "truth.json")
    fits = io.read_json(out / "analyze" / "fits.json")["fits"]
    tol = cfg.section("roundtrip")["tolerance_sigma"]
    checks = compare_occupations(fits, truth, tol)
    visible = sum(1 for f in fits if f["nu_bar"] is not None)
    checks.append({"name": "resolved_pairs", "passed": visible == len(truth["visible"]),
                   "detail": {"found": visible, "expected": len(truth["visible"])}})

    cs, nus = np.meshgrid(np.linspace(0, 10, 100), np.linspace(0, 5, 100))
    peaks = 4 * cs * (2 * nus + cs + 1)
    back = np.vectorize(cooperativity_from_peak)(peaks, nus)
    inv_err = float(np.max(np.abs(back - cs)))
    checks.append({"name": "peak_inversion", "passed": inv_err <= 1e-12, "detail": {"max_error": inv_err}})

    d = cfg.section("drive")
    pair = drive_pair(center_frequency=d["center"], splitting=d["splitting"],
                      linewidth=cfg.section("mechanics")["linewidth"], cooperativity=d["cooperativity"],
                      base_occupation=d["base_occupation"], atom_count=d["atom_count"])
    series = run_drive_series(pair, d["target"], d["amplitudes"], cfg.cavity, cfg.detection,
                              cfg.seed, grid=_grid(cfg, signed=False), noiseless=True)
    ratio = crosstalk_slopes(series, d["confidence"]).slope_ratio
    half = pair[0].linewidth / 2
    oracle = half**2 / (d["splitting"] ** 2 + half**2)
    checks.append({"name": "noiseless_crosstalk", "passed": abs(ratio - oracle) <= 1e-6 * oracle,
                   "detail": {"ratio": ratio, "expected": oracle}})

    passed = all(c["passed"] for c in checks)
    files.append(io.write_json(out / "roundtrip.json", {"passed": passed, "checks": checks}))
    return files, passed


def _error(out: Path, code: int, kind: str, message: str) -> int:
    record = {"status": "error", "exit_code": code, "error": kind, "message": message}
    try:
        io.write_json(out / "error.json", record)
    except OSError:
        pass
    print(io.dumps(record), file=sys.stderr, end="")
    return code


def execute(cfg: RunConfig, *, on=None, off=None) -> int:
    """Run ``cfg.experiment``, write its outputs and manifest; return the exit code."""
    out = Path(cfg.output_dir)
    started = io.now()
    try:
        out.mkdir(parents=True, exist_ok=True)
        passed = True
        if cfg.experiment == "simulate":
            files = simulate(cfg, out)
        elif cfg.experiment == "analyze":
            if on is None or off is None:
                raise ConfigError("analyze needs --on and --off spectrum files")
            files = analyze(cfg, out, on, off)
        elif cfg.experiment == "mri":
            files = mri(cfg, out)
        elif cfg.experiment == "drive":
            files = drive(cfg, out)
        else:
            files, passed = roundtrip(cfg, out)
        status = "ok" if passed else "check_failed"
        io.write_manifest(out, experiment=cfg.experiment, seed=cfg.seed, config_hash=cfg.config_hash,
                          backend=BACKEND, files=files, status=status, started=started,
                          extra={"config": cfg.raw})
    except ConfigError as exc:
        return _error(out, EXIT_CONFIG, "config", str(exc))
    except OSError as exc:
        return _error(out, EXIT_IO, "io", f"{exc.__class__.__name__}: {exc}")
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        return _error(out, EXIT_RUNTIME, "runtime", f"{exc.__class__.__name__}: {exc}")
    (out / "error.json").unlink(missing_ok=True)
    print(f"{cfg.experiment}: {status}, {len(files)} files in {out}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED
