"""File output: atomic writes, spectrum CSV + JSON sidecars, manifests.

Floats are written with ``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import os
import platform
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .spectra import HETERODYNE_PSD, PHASE_DENSITY, PHASE_PSD, PHOTON_DENSITY, Spectrum

KHZ = 2 * np.pi * 1e3
SPECTRUM_UNITS = {
    PHOTON_DENSITY: "quanta per unit angular frequency, Lorentzian peak units",
    PHASE_DENSITY: "quanta per unit angular frequency, Lorentzian peak units",
    HETERODYNE_PSD: "W^2/Hz (local-oscillator power times photon energy)",
    PHASE_PSD: "W^2/Hz (local-oscillator power times photon energy)",
}


def write_atomic(path, data: bytes | str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return write_atomic(path, dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return write_atomic(path, "\n".join(lines) + "\n")


def write_spectrum(path, s: Spectrum, meta: dict) -> tuple[Path, Path]:
    """``path`` gets ``detuning_kHz,value`` rows; ``path.json`` the sidecar."""
    path = Path(path)
    rows = zip(s.frequencies / KHZ, s.values)
    write_csv(path, ["detuning_kHz", "value"], rows)
    side = {"kind": s.kind, "units": SPECTRUM_UNITS[s.kind], "seed": s.metadata.get("seed"),
            "M": s.averages, **meta}
    return path, write_json(path.with_suffix(".json"), side)


def read_spectrum(path) -> Spectrum:
    """Inverse of :func:`write_spectrum` (sidecar must sit next to the CSV)."""
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = read_json(path.with_suffix(".json"))
    meta = {k: v for k, v in side.items() if k not in ("kind", "M")}
    return Spectrum(data[:, 0] * KHZ, data[:, 1], side["kind"], averages=side.get("M"),
                    metadata=meta)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import scipy
    import yaml

    from . import __version__
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {"omarray": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba_version, "pyyaml": yaml.__version__}


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, *, experiment, seed, config_hash, backend, files, status,
                   started, extra=None) -> Path:
    """Manifest of a run: everything but ``timestamps`` is deterministic."""
    out_dir = Path(out_dir)
    entries = {}
    for f in sorted(set(map(str, files))):
        entries[os.path.relpath(f, out_dir)] = sha256_file(f)
    manifest = {"experiment": experiment, "seed": int(seed), "config_hash": config_hash,
                "backend": backend, "versions": versions(), "status": status, "files": entries,
                "timestamps": {"started": started, "finished": now()}}
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
