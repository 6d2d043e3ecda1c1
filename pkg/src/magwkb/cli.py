"""Command line entry point: ``magwkb <study> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import band1d, studies
from .assemble2d import assemble_montgomery
from .wkb import WellProfile, agmon_weight, write_agmon_csv

log = logging.getLogger("magwkb")

_KIND = {
    "band": "band-table",
    "simple-well": "simple-well",
    "double-well": "double-well",
    "agmon": "agmon",
    "domain-conv": "domain-convergence",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring SweepConfig")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--h", dest="h_range", help='1/h values as "start:stop:step" or "a,b,c"')
    common.add_argument("--grid", nargs=2, type=int, metavar=("NX", "NY"))
    common.add_argument("--eigs", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--emit-plots", action="store_true")
    common.add_argument("--k", type=int, help="vanishing order of the field (band, double-well)")
    common.add_argument("--workers", type=int, help="parallel solves")
    common.add_argument("--dump-vectors", action="store_true", help="store eigenvector dumps")
    common.add_argument("--export-matrix", action="store_true",
                        help="write the operator at the first h in coordinate format")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="magwkb", description="Semiclassical magnetic spectra studies")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("band", "simple-well", "double-well", "agmon", "domain-conv"):
        sub.add_parser(name, parents=[common])
    cam = sub.add_parser("camel", parents=[common])
    cam.add_argument("--bumps", choices=("one", "two"), default="one")
    return p


def build_config(args: argparse.Namespace) -> studies.SweepConfig:
    kind = "camel-1bump" if args.command == "camel" and args.bumps == "one" else (
        "camel-2bump" if args.command == "camel" else _KIND[args.command])
    if args.config:
        raw = json.loads(args.config.read_text())
        raw.setdefault("study_kind", kind)
        if raw["study_kind"] != kind:
            raise SystemExit(f"config is for {raw['study_kind']!r}, not {kind!r}")
        if args.k is not None:
            raw["k"] = args.k
        cfg = studies.SweepConfig.from_dict(raw)
    else:
        cfg = studies.default_config(kind, k=args.k)
    if args.h_range:
        cfg.h_list = studies.parse_h_range(args.h_range)[::-1]
        cfg.h_list = sorted(cfg.h_list, reverse=True)
    if args.grid:
        nx, ny = args.grid
        if kind == "band-table":
            cfg.grid["n"] = nx
        else:
            cfg.grid["nx"], cfg.grid["ny"] = nx, ny
            if cfg.grid.get("refine"):
                cfg.grid["refine"] = [int(1.5 * (nx - 1)) + 1, int(1.5 * (ny - 1)) + 1]
    if args.eigs is not None:
        cfg.n_eigs = args.eigs
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.dump_vectors:
        cfg.dump_vectors = True
    if args.out is not None:
        cfg.output_dir = str(args.out)
    cfg.validate()
    return cfg


def _extra_outputs(cfg: studies.SweepConfig, rep: studies.StudyReport, out: Path) -> None:
    if cfg.study_kind == "band-table":
        band1d.write_band_csv(rep.artifacts["points"], out / "band.csv")
        rep.artifacts["band_minimum"].to_json(out / "band_minimum.json")
    if cfg.study_kind == "simple-well":
        (out / "wkb_expansion.json").write_text(json.dumps(rep.predictions["wkb"], indent=2))
    if cfg.study_kind == "camel-1bump":
        (out / "camel_expansion.json").write_text(json.dumps(rep.predictions["camel"], indent=2))
    if cfg.study_kind == "agmon":
        prof = rep.extra["profile"]
        well = WellProfile.from_coeffs(cfg.well)
        variant = "double" if len(well.minima) == 2 else "single"
        z = agmon_weight(cfg.k, well, np.asarray(prof["s"]), variant=variant,
                         delta=cfg.params.get("delta", 0.5))
        write_agmon_csv(z, out / "agmon.csv")
        with (out / "profile.csv").open("w") as fh:
            fh.write("s,w,z\n")
            for s, w, zz in zip(prof["s"], prof["w"], prof["z"]):
                fh.write(f"{s!r},{w!r},{zz!r}\n")


def _export_matrix(cfg: studies.SweepConfig, out: Path) -> None:
    if cfg.study_kind not in ("simple-well", "double-well", "agmon"):
        log.warning("matrix export only for Montgomery studies; skipped")
        return
    well = WellProfile.from_coeffs(cfg.well)
    bm = band1d.band_minimum(cfg.k)
    xi = well.gamma0 ** (1.0 / (cfg.k + 2)) * bm.zeta0
    grid = studies._montgomery_grid(cfg.k, cfg.grid)
    h = cfg.h_list[0]
    H = assemble_montgomery(cfg.k, well, h, grid, gauge_shift=xi)
    H.export(out / "matrix.txt", gauge_shift=xi)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = build_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = studies.run_study(cfg)
    studies.write_report(rep, out, emit_plots=args.emit_plots)
    _extra_outputs(cfg, rep, out)
    if args.export_matrix:
        _export_matrix(cfg, out)
    for v in rep.verdicts:
        flag = "PASS" if v["passed"] else "FAIL"
        meas = v["measured"]
        if isinstance(meas, float):
            meas = f"{meas:.6g}"
        print(f"{flag}  {v['criterion']}: measured {meas}, expected {v['expected']}")
    print(f"wrote {out / 'report.json'} ({rep.runtime:.1f} s)")
    return 0 if rep.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
