"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 infeasible geometry.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from hbyield.config import ConfigError, ProcessConfig
from hbyield.harness import (CASE_STUDIES, HarnessError, LutCache, draw_validation_sets,
                             layout_for, load_manifest, run_case_study, run_model,
                             run_simulation, run_validation)
from hbyield.layout import LayoutError, build_random_redundant_layout, read_layout, write_layout
from hbyield.morphology import BitGrid, to_pbm

log = logging.getLogger("hbyield")

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="process configuration file")
    p.add_argument("--layout", help="layout CSV (default: the config's canonical pattern)")
    p.add_argument("--mode", choices=("w2w", "d2w"), help="bonding mode (overrides the config)")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hbyield",
                                     description="Hybrid-bonding yield model and simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("model", help="analytical yield")
    _common(p)
    p.add_argument("--lut-dir", help="critical-area table cache directory")

    p = sub.add_parser("simulate", help="Monte Carlo yield")
    _common(p)
    p.add_argument("--samples", type=int, help="wafers (W2W) or dies (D2W)")
    p.add_argument("--workers", type=int, help="worker processes")

    p = sub.add_parser("validate", help="model against simulation over drawn parameter sets")
    _common(p)
    p.add_argument("--sets", type=int, default=20)
    p.add_argument("--samples", type=int, help="simulation budget per set")
    p.add_argument("--manifest", help="validation manifest JSON")

    p = sub.add_parser("case-study", help="parameter sweeps of the case studies")
    _common(p)
    p.add_argument("name", choices=CASE_STUDIES)

    p = sub.add_parser("lut", help="build and save a critical-area table")
    _common(p)

    p = sub.add_parser("layout-gen", help="write a layout CSV and PBM bitmaps")
    _common(p)
    p.add_argument("--redundant", action="store_true",
                   help="random dedicated-pair layout instead of the canonical pattern")
    p.add_argument("--block-um", type=float, default=200.0)
    p.add_argument("--spacing-um", type=float, default=400.0)
    p.add_argument("--scheme", choices=("dedicated", "none", "shared"), default="dedicated")
    return parser


def _config(args) -> ProcessConfig:
    overrides = list(args.set)
    if args.mode:
        overrides.append(f"process.mode={args.mode}")
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    if getattr(args, "workers", None):
        overrides.append(f"sim.workers={args.workers}")
    return ProcessConfig.load(args.config, overrides)


def _layout(args, cfg):
    return read_layout(args.layout) if args.layout else layout_for(cfg)


def _write_json(path: Path, text: str) -> None:
    path.write_text(text + "\n")
    print(text)


def _run(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.verb == "model":
        rep = run_model(cfg, _layout(args, cfg), cache=LutCache(args.lut_dir))
        _write_json(out / f"model_{cfg.mode}.json", rep.to_json())
    elif args.verb == "simulate":
        rep = run_simulation(cfg, _layout(args, cfg), n_samples=args.samples)
        _write_json(out / f"simulation_{cfg.mode}.json", rep.to_json())
    elif args.verb == "validate":
        manifest = load_manifest(args.manifest)
        sets = draw_validation_sets(args.sets, cfg["sim.seed"], manifest, base=cfg)
        res = run_validation(sets, sim_budget=args.samples)
        res.write_csv(out / "validation_scatter.csv")
        _write_json(out / "validation_mse.json", json.dumps(res.mse, indent=2, sort_keys=True))
    elif args.verb == "case-study":
        rows = run_case_study(args.name, cfg, out / f"case_{args.name}.csv")
        print(f"wrote {len(rows)} rows to {out / f'case_{args.name}.csv'}")
    elif args.verb == "lut":
        from hbyield.defect import save_lut_csv

        lut = LutCache().get(cfg, _layout(args, cfg), cfg.mode)
        path = out / f"lut_{cfg.mode}_{lut.fingerprint}.csv"
        save_lut_csv(lut, path)
        print(path)
    elif args.verb == "layout-gen":
        plan = None
        if args.redundant:
            grid, plan = build_random_redundant_layout(cfg.die(), args.block_um, args.spacing_um,
                                                       seed=cfg["sim.seed"], scheme=args.scheme)
        else:
            grid = layout_for(cfg)
        path = out / "layout.csv"
        write_layout(path, grid, plan)
        cell = grid.gx_um * grid.gy_um
        from hbyield.layout import CellKind

        for kind in (CellKind.CRITICAL, CellKind.REDUNDANT):
            (out / f"layout_{kind.name.lower()}.pbm").write_text(
                to_pbm(BitGrid(grid.kinds == kind, cell)))
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LayoutError, HarnessError) as exc:
        print(f"infeasible geometry: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
