"""Command-line front end: ``d2dpf run | compare | sweep | complexity``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import platform
import statistics
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_from_dict, config_to_dict, load_config
from .scheduler import EnumerationTooLarge, complexity_estimate
from .sim import MetricSeries, ScenarioConfig, compare_scenario, run_scenario

SUMMARY_COLUMNS = (
    "scenario_id", "seed", "tier", "user_id", "mean_rate_bps",
    "logsum_tier", "utility_total", "wf_calls", "iterations_used",
)
PER_TTI_COLUMNS = (
    "scenario_id", "seed", "tti", "tier", "user_id", "rate_bps", "wf_calls", "iterations_used",
)
COMPARE_COLUMNS = (
    "scenario_id", "seed", "tti", "utility_phpfs", "utility_optimal", "ratio", "dominated",
)
SWEEP_COLUMNS = ("axis_value", "seed", "metric", "tier", "value")
SWEEP_AXES = {"N_C": "n_cue", "N_D": "n_d2d", "K": "n_subchannels", "M": "iterations"}

EXIT_USAGE = 2
EXIT_REFUSED = 3


def fmt(x) -> str:
    """Shortest round-tripping text for numbers; stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv_atomic(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    write_text_atomic(path, buf.getvalue())


def write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _map_seeds(fn, configs: list[ScenarioConfig], workers: int):
    if workers <= 1 or len(configs) <= 1:
        return [fn(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, configs))


def _seed_list(args, cfg: ScenarioConfig) -> list[int]:
    if args.seeds:
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    if args.n_seeds:
        return list(range(cfg.seed, cfg.seed + args.n_seeds))
    return [cfg.seed]


def _manifest(command: str, cfg: ScenarioConfig, seeds, outputs, started: float, extra=None) -> dict:
    doc = {
        "command": command,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config_to_dict(cfg),
        "seeds": list(seeds),
        "outputs": sorted(outputs),
        "wall_seconds": round(time.time() - started, 3),
    }
    if extra:
        doc.update(extra)
    return doc


def summary_rows(cfg: ScenarioConfig, seed: int, m: MetricSeries):
    total_wf = int(m.wf_calls.sum())
    total_iter = int(m.iterations_used.sum())
    ls = {"cue": m.logsum("cue"), "d2d": m.logsum("d2d")}
    utility = ls["cue"] + ls["d2d"]
    for tier in ("cue", "d2d"):
        for u, r in enumerate(m.mean_rates(tier)):
            yield (cfg.scenario_id, seed, tier, u, float(r), ls[tier], utility, total_wf, total_iter)


def per_tti_rows(cfg: ScenarioConfig, seed: int, m: MetricSeries):
    for t in range(m.n_tti):
        for tier, rates in (("cue", m.cue_rates[t]), ("d2d", m.d2d_rates[t])):
            for u, r in enumerate(rates):
                yield (cfg.scenario_id, seed, t, tier, u, float(r), int(m.wf_calls[t]), int(m.iterations_used[t]))


# --------------------------------------------------------------------------
# subcommands


def _resolve(args) -> tuple[ScenarioConfig, list[int]]:
    if getattr(args, "from_manifest", None):
        doc = json.loads(Path(args.from_manifest).read_text())
        cfg = config_from_dict(doc["config"])
        return cfg, list(doc["seeds"])
    if not args.config:
        raise ConfigError("a scenario file is required (or --from-manifest)")
    cfg = load_config(args.config, args.set or [])
    return cfg, _seed_list(args, cfg)


def cmd_run(args) -> int:
    started = time.time()
    cfg, seeds = _resolve(args)
    out = Path(args.out)
    configs = [dataclasses.replace(cfg, seed=s) for s in seeds]
    results = _map_seeds(run_scenario, configs, args.workers)
    summary, per_tti = [], []
    for c, m in zip(configs, results):
        summary.extend(summary_rows(c, c.seed, m))
        per_tti.extend(per_tti_rows(c, c.seed, m))
    write_csv_atomic(out / "summary.csv", SUMMARY_COLUMNS, summary)
    write_csv_atomic(out / "per_tti.csv", PER_TTI_COLUMNS, per_tti)
    manifest = _manifest("run", cfg, seeds, ["summary.csv", "per_tti.csv"], started)
    write_text_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for c, m in zip(configs, results):
        print(
            f"seed {c.seed}: logsum cue {m.logsum('cue'):.4f}  d2d {m.logsum('d2d'):.4f}  "
            f"throughput {m.throughput('cue') + m.throughput('d2d'):.1f} bit/s"
        )
    print(f"wrote {out / 'summary.csv'}, {out / 'per_tti.csv'}")
    return 0


def cmd_compare(args) -> int:
    started = time.time()
    cfg, seeds = _resolve(args)
    out = Path(args.out)
    configs = [dataclasses.replace(cfg, seed=s) for s in seeds]
    results = _map_seeds(compare_scenario, configs, args.workers)
    rows = []
    ratios = []
    for c, res in zip(configs, results):
        for r in res:
            rows.append((c.scenario_id, c.seed, r.tti, r.utility_phpfs, r.utility_optimal, r.ratio, r.dominated))
            ratios.append(r.ratio)
    write_csv_atomic(out / "compare.csv", COMPARE_COLUMNS, rows)
    finite = [r for r in ratios if math.isfinite(r)]
    median = statistics.median(finite) if finite else math.nan
    dominated = all(row[-1] for row in rows)
    manifest = _manifest(
        "compare", cfg, seeds, ["compare.csv"], started,
        {"median_ratio": median if math.isfinite(median) else None, "all_dominated": dominated},
    )
    write_text_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"rows {len(rows)}  median PHPFS/O-PF ratio {median:.4f}  dominance {'ok' if dominated else 'VIOLATED'}")
    return 0


def _sweep_one(cfg: ScenarioConfig) -> dict:
    m = run_scenario(cfg)
    return {
        ("logsum", "cue"): m.logsum("cue"),
        ("logsum", "d2d"): m.logsum("d2d"),
        ("logsum", "total"): m.logsum("cue") + m.logsum("d2d"),
        ("throughput", "cue"): m.throughput("cue"),
        ("throughput", "d2d"): m.throughput("d2d"),
        ("throughput", "total"): m.throughput("cue") + m.throughput("d2d"),
        ("wf_calls_per_tti", "total"): float(m.wf_calls.mean()) if m.n_tti else 0.0,
    }


def cmd_sweep(args) -> int:
    started = time.time()
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {', '.join(SWEEP_AXES)}")
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated integers, got {args.values!r}") from None
    if not values:
        raise ConfigError("--values is empty")
    cfg, seeds = _resolve(args)
    field_name = SWEEP_AXES[args.axis]
    jobs = [(v, dataclasses.replace(cfg, **{field_name: v}, seed=s)) for v in values for s in seeds]
    results = _map_seeds(_sweep_one, [c for _, c in jobs], args.workers)
    rows = []
    for (v, c), metrics in zip(jobs, results):
        for (metric, tier), value in metrics.items():
            rows.append((v, c.seed, metric, tier, value))
    out = Path(args.out)
    write_csv_atomic(out / "sweep.csv", SWEEP_COLUMNS, rows)
    manifest = _manifest("sweep", cfg, seeds, ["sweep.csv"], started, {"axis": args.axis, "values": values})
    write_text_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return 0


def complexity_table(n_cue: int, n_d2d: int, ks, m: int) -> list[tuple]:
    rows = []
    for k in ks:
        opt = complexity_estimate("optimal", n_cue, n_d2d, k, m)
        heur = complexity_estimate("phpfs", n_cue, n_d2d, k, m)
        rows.append((n_cue, n_d2d, k, m, opt, heur, opt / heur))
    return rows


def cmd_complexity(args) -> int:
    ks = _int_list(args.K, "K")
    for name in ("n_cue", "n_d2d", "M"):
        if getattr(args, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if any(k < 1 for k in ks):
        raise ConfigError("K must be >= 1")
    print(f"{'N_C':>4} {'N_D':>4} {'K':>4} {'M':>3} {'optimal':>14} {'phpfs':>14} {'ratio':>12}")
    for n_c, n_d, k, m, opt, heur, ratio in complexity_table(args.n_cue, args.n_d2d, ks, args.M):
        print(f"{n_c:>4} {n_d:>4} {k:>4} {m:>3} {opt:>14.6g} {heur:>14.6g} {ratio:>12.4g}")
    return 0


def _int_list(text: str, name: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be an integer, a list a,b,c or a range a..b") from None


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="d2dpf", description="PF scheduling simulator for SC-FDMA uplinks with D2D underlay."
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, out_default):
        sp.add_argument("config", nargs="?", help="scenario TOML file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
        sp.add_argument("--seeds", help="comma-separated seed list (default: the config seed)")
        sp.add_argument("--n-seeds", type=int, help="run seeds seed..seed+N-1")
        sp.add_argument("--workers", type=int, default=1, help="parallel seed workers")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--from-manifest", help="re-run exactly what a manifest.json records")

    scenario_args(sub.add_parser("run", help="simulate a scenario"), "out/run")
    scenario_args(sub.add_parser("compare", help="PHPFS vs exhaustive optimum per TTI"), "out/compare")
    sw = sub.add_parser("sweep", help="run a scenario over one axis")
    scenario_args(sw, "out/sweep")
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, help="comma-separated axis values")

    cx = sub.add_parser("complexity", help="closed-form operation counts")
    cx.add_argument("--n-cue", type=int, required=True)
    cx.add_argument("--n-d2d", type=int, required=True)
    cx.add_argument("-K", required=True, help="K, a list a,b,c or a range a..b")
    cx.add_argument("-M", type=int, default=1)
    return p


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep, "complexity": cmd_complexity}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"d2dpf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationTooLarge as exc:
        print(f"d2dpf: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except FileNotFoundError as exc:
        print(f"d2dpf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
