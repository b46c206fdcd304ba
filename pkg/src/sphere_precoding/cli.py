"""Command-line entry points.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
4 output write failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .channel import write_covariance_cache
from .config import ConfigError, RunConfig, build, load_config, merge_defaults
from .numerics import NumericalError
from .precoding import METHODS, beampattern_grid, slice_region, write_beampattern_csv
from .simulation import SweepResult, build_precoders, mobility_sweep, prepare_drop, sweep_seeds

log = logging.getLogger("sphere_precoding")

OUT_ENV = "SPHERE_PRECODING_OUT"

EXIT_CONFIG, EXIT_NUMERIC, EXIT_WRITE = 2, 3, 4


class WriteError(OSError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def parse_dx_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"malformed --dx list {text!r}: expected comma-separated metres") from None
    if not values or any(not np.isfinite(v) or v < 0 for v in values):
        raise ConfigError(f"malformed --dx list {text!r}: expected non-negative distances")
    return values


def resolve(args, overrides: Dict[str, Dict[str, object]]) -> RunConfig:
    """Load the config, apply flag overrides (flags win) and build it."""
    resolved = merge_defaults(load_config(args.config))
    for section, values in overrides.items():
        for key, value in values.items():
            if value is not None:
                resolved[section][key] = value
    if not resolved["output"]["dir"]:
        resolved["output"]["dir"] = os.environ.get(OUT_ENV, "out")
    return build(resolved)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def write_manifest(path: Path, args, run: RunConfig, outputs: List[Path]) -> None:
    manifest = {
        "tool": "sphere_precoding",
        "version": __version__,
        "command": args.command,
        "config_path": str(Path(args.config).resolve()),
        "config": run.resolved,
        "seed": run.seed,
        "output_dir": str(Path(run.resolved["output"]["dir"]).resolve()),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "outputs": [p.name for p in outputs + [path]],
    }
    try:
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def _out_dir(run: RunConfig) -> Path:
    out = Path(run.resolved["output"]["dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_sweep(out: Path, result: SweepResult, table_name: str) -> List[Path]:
    table = out / table_name
    cdf = out / "cdf.csv"
    write_csv(table, ["dx_m", "method", "avg_sinr_db", "sat_prob", "n_samples"], result.table())
    write_csv(cdf, ["method", "dx_m", "sinr_db", "cdf"], result.cdf_rows())
    return [table, cdf]


def cmd_simulate(args) -> int:
    run = resolve(args, {"simulation": {"seed": args.seed, "workers": args.workers}, "output": {"dir": args.out}})
    run.scenario.check_region()
    result = mobility_sweep(run.scenario, run.move_distances, [run.seed], run.workers)
    out = _out_dir(run)
    files = write_sweep(out, result, "metrics.csv")
    write_manifest(out / "manifest.json", args, run, files)
    return 0


def cmd_sweep(args) -> int:
    dx = parse_dx_list(args.dx) if args.dx is not None else None
    run = resolve(
        args,
        {
            "users": {"move_distance_m": dx},
            "simulation": {"seed": args.seed, "seeds": args.seeds, "workers": args.workers},
            "output": {"dir": args.out},
        },
    )
    run.scenario.check_region()
    result = mobility_sweep(run.scenario, run.move_distances, sweep_seeds(run.seed, run.seeds), run.workers)
    out = _out_dir(run)
    files = write_sweep(out, result, "sweep.csv")
    write_manifest(out / "manifest.json", args, run, files)
    return 0


def cmd_beampattern(args) -> int:
    run = resolve(
        args,
        {
            "beampattern": {"user": args.user, "method": args.method, "plane": args.plane, "resolution": args.resolution},
            "simulation": {"seed": args.seed},
            "output": {"dir": args.out},
        },
    )
    opts = run.beampattern
    k = int(opts["user"])
    if not 1 <= k <= run.scenario.user_count:
        raise ConfigError(f"--user {k} outside 1..{run.scenario.user_count}")
    method = opts["method"]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if opts["plane"] not in ("horizontal", "vertical"):
        raise ConfigError(f"unknown plane {opts['plane']!r}")
    cfg = run.scenario
    drop = prepare_drop(cfg, run.seed, int(opts["experiment"]))
    f = build_precoders(cfg, drop, [method])[method][:, k - 1]
    target = drop.users[k - 1].initial
    reach = max(np.linalg.norm(z.center - target) + z.radius for z in drop.zones)
    lower, upper = slice_region(target, reach + float(opts["margin_m"]), opts["plane"])
    grid = beampattern_grid(cfg.geometry, f, lower, upper, int(opts["resolution"]), cfg.wavelength)

    out = _out_dir(run)
    pattern = out / "beampattern.csv"
    zones = out / "zones.csv"
    try:
        write_beampattern_csv(pattern, grid)
    except OSError as exc:
        raise WriteError(f"cannot write {pattern}: {exc}") from exc
    write_csv(
        zones,
        ["user", "x", "y", "z", "radius", "target"],
        [(i + 1, *z.center, z.radius, int(i == k - 1)) for i, z in enumerate(drop.zones)],
    )
    write_manifest(out / "manifest.json", args, run, [pattern, zones])
    return 0


def cmd_covariance(args) -> int:
    run = resolve(args, {"simulation": {"seed": args.seed}, "output": {"dir": str(Path(args.out).parent)}})
    cfg = run.scenario
    k = args.user
    if not 1 <= k <= cfg.user_count:
        raise ConfigError(f"--user {k} outside 1..{cfg.user_count}")
    drop = prepare_drop(cfg, run.seed, 0)
    cache = Path(args.out)
    try:
        cache.parent.mkdir(parents=True, exist_ok=True)
        write_covariance_cache(cache, drop.covariances[k - 1])
    except OSError as exc:
        raise WriteError(f"cannot write {cache}: {exc}") from exc
    write_manifest(cache.with_name(cache.name + ".manifest.json"), args, run, [cache])
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sphere-precoding", description="Robust near-field precoding simulator.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output directory (default: config output.dir, then $" + OUT_ENV + ")"):
        sp.add_argument("config", help="TOML configuration file")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help=out_help)

    s = sub.add_parser("simulate", help="run experiments at the configured moving distance(s)")
    common(s)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="average SINR and CDF versus moving distance")
    common(s)
    s.add_argument("--dx", help="comma-separated moving distances in metres, e.g. 0,0.056,0.139")
    s.add_argument("--seeds", type=int, help="number of seeds to pool per distance")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("beampattern", help="beam gain over a slice through one user")
    common(s)
    s.add_argument("--user", type=int, help="1-based user index")
    s.add_argument("--method", help="one of " + ", ".join(METHODS))
    s.add_argument("--plane", help="horizontal or vertical")
    s.add_argument("--resolution", type=int, help="grid points per axis")
    s.set_defaults(func=cmd_beampattern)

    s = sub.add_parser("covariance", help="write one user's zone covariance to a cache file")
    s.add_argument("config", help="TOML configuration file")
    s.add_argument("--seed", type=int)
    s.add_argument("--user", type=int, default=1)
    s.add_argument("--out", required=True, help="cache file path")
    s.set_defaults(func=cmd_covariance)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WriteError as exc:
        print(f"write error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
