"""Command-line entry point: ``mincusum {run,reproduce,bounds,verify,trace}``.

Exit codes: 0 success, 1 invalid input, 2 a verification check failed,
3 anything else went wrong while running.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks, studies
from .config import ConfigError, load_config, parse_bounds_config, read_json
from .engine import write_trace
from .montecarlo import DEFAULT_HORIZON, default_workers, simulate_path
from .results import atomic_write, render_csv, write_manifest

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_FAULT = 0, 1, 2, 3
OUT_DIR_ENV = "MINCUSUM_OUT_DIR"
DEFAULT_OUT_DIR = "results"


class UsageError(Exception):
    """Bad command-line input detected before any work starts."""


def resolve_out_dir(flag: str | None, from_config: str | None = None) -> Path:
    """``--out-dir`` beats the environment variable, which beats the config file."""
    return Path(flag or os.environ.get(OUT_DIR_ENV) or from_config or DEFAULT_OUT_DIR)


def _positive(name):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {text!r}")
        if value < 1:
            raise argparse.ArgumentTypeError(f"{name} must be at least 1, got {value}")
        return value
    return parse


def _non_negative(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be non-negative, got {value}")
    return value


def _write_results(out_dir: Path, stem: str, rows, config_snapshot, seed, started, columns=None,
                   notes=()) -> Path:
    """CSV first, manifest second; if either fails, neither is left behind."""
    csv_path = out_dir / f"{stem}.csv"
    manifest_path = out_dir / f"{stem}.manifest.json"
    data = render_csv(rows) if columns is None else render_csv(rows, columns)
    try:
        atomic_write(csv_path, data)
        snapshot = dict(config_snapshot)
        if notes:
            snapshot["notes"] = list(notes)
        write_manifest(manifest_path, config=snapshot, seed=seed, version=__version__,
                       duration=round(time.perf_counter() - started, 3), outputs=[csv_path])
    except BaseException:
        for p in (csv_path, manifest_path):
            if p.exists():
                p.unlink()
        raise
    return csv_path


def cmd_run(args) -> int:
    started = time.perf_counter()
    overrides = {"seed": args.seed, "n_paths": args.paths, "horizon": args.horizon}
    cfg = load_config(args.config, overrides)
    out_dir = resolve_out_dir(args.out_dir, cfg.out_dir)
    result = studies.execute(cfg, workers=args.workers or default_workers())
    snapshot = {**cfg.raw, "experiment": {**cfg.raw["experiment"],
                                          **{k: v for k, v in overrides.items() if v is not None}}}
    path = _write_results(out_dir, cfg.scenario_id, result.rows, snapshot, cfg.seed, started,
                          notes=result.notes)
    for note in result.notes:
        print(f"note: {note}")
    print(f"wrote {path} ({len(result.rows)} rows)")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    started = time.perf_counter()
    seed = 0 if args.seed is None else args.seed
    n_paths = args.paths or studies.DEFAULT_PATHS
    horizon = args.horizon or DEFAULT_HORIZON
    out_dir = resolve_out_dir(args.out_dir)
    result = studies.reproduce(args.figure, seed=seed, n_paths=n_paths, horizon=horizon,
                               workers=args.workers or default_workers())
    fig = studies.figure(args.figure)
    snapshot = {
        "figure": args.figure,
        "scenario": fig.hs.to_record(),
        "experiment": {"true_hyp": fig.true_hyp, "nu": list(fig.nus), "thresholds": studies.DEFAULT_GRID,
                       "n_paths": n_paths, "seed": seed, "horizon": horizon,
                       "partial_k": list(fig.partial_k)},
    }
    path = _write_results(out_dir, args.figure, result.rows, snapshot, seed, started, notes=result.notes)
    for note in result.notes:
        print(f"note: {note}")
    print(f"wrote {path} ({len(result.rows)} rows)")
    return EXIT_OK


def _scenario_source(args):
    if (args.config is None) == (args.preset is None):
        raise UsageError("give exactly one of --config or --preset")
    if args.config is not None:
        return read_json(args.config)
    fig = studies.figure(args.preset)
    return {"scenario": fig.hs.to_record(), "experiment": {"true_hyp": fig.true_hyp},
            "output": {"scenario_id": args.preset}}


def cmd_bounds(args) -> int:
    started = time.perf_counter()
    raw = _scenario_source(args)
    if args.alpha:
        raw = {**raw, "bounds": {**raw.get("bounds", {}), "alpha": args.alpha}}
    bcfg = parse_bounds_config(raw, studies.DEFAULT_GRID)
    seed = 0 if args.seed is None else args.seed
    rows = studies.bound_table(bcfg.hs, bcfg.scenario_id, bcfg.alphas, bcfg.thresholds, seed=seed)
    out_dir = resolve_out_dir(args.out_dir, bcfg.out_dir)
    path = _write_results(out_dir, f"{bcfg.scenario_id}.bounds", rows, raw, seed, started,
                          columns=studies.BOUND_COLUMNS)
    for row in rows:
        if row[1] not in ("pair_bound", "overall_bound"):
            _, quantity, i, j, b, value, se, note = row
            shown = "" if value is None else f"{value:.6g}"
            extra = f" +- {se:.2g}" if se else ""
            pair = f"({i}|{j})" if i or j else ""
            print(f"{quantity:16s} {pair:18s} {shown}{extra} {note}".rstrip())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = checks.run_suite(args.suite, scale=args.scale, workers=args.workers or 1,
                               seed=0 if args.seed is None else args.seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(r.line())
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_trace(args) -> int:
    raw = _scenario_source(args)
    bcfg = parse_bounds_config(raw, studies.DEFAULT_GRID)
    hs = bcfg.hs
    true_hyp = args.true_hyp if args.true_hyp is not None else raw.get("experiment", {}).get("true_hyp")
    if true_hyp is not None and str(true_hyp) not in hs.labels:
        raise ConfigError("--true-hyp", f"{true_hyp!r} is not one of {list(hs.labels)}")
    if args.b <= 0:
        raise ConfigError("--b", "threshold must be positive")
    if args.nu < 0:
        raise ConfigError("--nu", "change point must be non-negative")
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    res = simulate_path(hs, None if true_hyp is None else str(true_hyp), args.nu, args.b, rng,
                        horizon=args.horizon or DEFAULT_HORIZON, keep_trace=True)
    out_dir = resolve_out_dir(args.out_dir, bcfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{bcfg.scenario_id}.trace.csv"
    write_trace(path, res.trace, hs.labels)
    if res.truncated:
        print(f"no stop within the horizon; wrote {len(res.trace)} steps to {path}")
    else:
        print(f"stopped at n={res.stop} deciding {hs.labels[res.decision]}; wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mincusum", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, paths=True):
        p.add_argument("--seed", type=_non_negative)
        if paths:
            p.add_argument("--paths", type=_positive("--paths"))
        p.add_argument("--horizon", type=_positive("--horizon"))
        p.add_argument("--workers", type=_positive("--workers"),
                       help="worker processes (default: all cores)")
        p.add_argument("--out-dir", help=f"output directory (env {OUT_DIR_ENV}; default {DEFAULT_OUT_DIR})")

    p = sub.add_parser("run", help="run the experiments described by a JSON config")
    p.add_argument("--config", required=True)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce", help="regenerate the data behind one of the built-in figures")
    p.add_argument("figure", choices=studies.FIGURES)
    common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("bounds", help="KL numbers, roots, constants and bound curves")
    p.add_argument("--config")
    p.add_argument("--preset", choices=studies.FIGURES, help="use a built-in scenario")
    p.add_argument("--alpha", type=float, action="append", help="target error level (repeatable)")
    p.add_argument("--seed", type=_non_negative)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="run invariant checks")
    p.add_argument("suite", nargs="?", default="all", choices=checks.SUITES)
    p.add_argument("--scale", type=float, default=1.0, help="multiply Monte Carlo sample sizes")
    p.add_argument("--seed", type=_non_negative)
    p.add_argument("--workers", type=_positive("--workers"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("trace", help="export the CuSum paths of a single simulated run")
    p.add_argument("--config")
    p.add_argument("--preset", choices=studies.FIGURES)
    p.add_argument("--true-hyp", help="post-change hypothesis label (omit for no change)")
    p.add_argument("--nu", type=int, default=0)
    p.add_argument("--b", type=float, default=5.0)
    common(p, paths=False)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if getattr(args, "scale", 1.0) <= 0:
        print("error: --scale must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_FAULT
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the fault exit code
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
