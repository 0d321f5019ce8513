"""Command-line entry point: ``omarray {simulate,analyze,mri,drive,roundtrip}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as config_mod
from .harness import EXIT_CONFIG, _error, execute


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file")
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config file)")
    common.add_argument("--out", type=Path, help="output directory (default runs/<subcommand>)")
    common.add_argument("--exclude-kHz", dest="exclude", action="append", metavar="LO:HI",
                        help="ignore this frequency band in fits; repeatable, replaces the config list")

    ap = argparse.ArgumentParser(prog="omarray", description=__doc__)
    sub = ap.add_subparsers(dest="experiment", required=True)
    sub.add_parser("simulate", parents=[common], help="synthesize noisy heterodyne spectra")
    an = sub.add_parser("analyze", parents=[common], help="thermometry on spectrum CSV files")
    an.add_argument("--on", type=Path, required=True, help="atoms-in spectrum CSV")
    an.add_argument("--off", type=Path, required=True, help="atoms-released spectrum CSV")
    sub.add_parser("mri", parents=[common], help="loading-position scan and site reconstruction")
    sub.add_parser("drive", parents=[common], help="selective-drive series and crosstalk bound")
    sub.add_parser("roundtrip", parents=[common], help="simulate, analyze and check against truth")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or Path("runs") / args.experiment
    try:
        raw = config_mod.load(args.config) if args.config else {}
        if not isinstance(raw, dict):
            raise config_mod.ConfigError("configuration must be a mapping of sections")
        seed = raw.pop("seed", 0)
        if args.seed is not None:
            seed = args.seed
        if args.exclude is not None:
            raw.setdefault("analysis", {})
            if not isinstance(raw["analysis"], dict):
                raise config_mod.ConfigError("section [analysis] must be a mapping")
            raw["analysis"]["exclude_kHz"] = [config_mod.parse_interval(t) for t in args.exclude]
        cfg = config_mod.build(raw, args.experiment, seed, out)
    except config_mod.ConfigError as exc:
        return _error(out, EXIT_CONFIG, "config", str(exc))
    kw = {"on": args.on, "off": args.off} if args.experiment == "analyze" else {}
    return execute(cfg, **kw)


if __name__ == "__main__":
    sys.exit(main())
