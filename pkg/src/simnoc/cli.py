"""Command-line front end.

    simnoc run <config>              one simulation, stats + figure
    simnoc sweep <config>            load sweep, CSV + curve figure
    simnoc matrix <config>           pattern x burst-size grid (Fig. 6 style)
    simnoc replay <trace> <config>   drive a recorded trace
    simnoc validate <config|trace>   syntax + invariant check only

Exit codes: 0 success, 1 config error, 2 runtime error, 3 validation error.
Every mode writes a manifest.ini holding the fully resolved experiment; the
manifest parses back into the identical run.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, SimulationError, ValidationError
from .harness import ExperimentConfig, dump_config, parse_config, with_seed
from .metrics import (
    aggregated_throughput,
    latency_stats,
    resolve_config,
    run_simulation,
    sweep,
    utilization,
)
from .stats import SimStats
from .topology import NocConfig, allocate_address_map, dump_address_map, dump_routing_tables
from .traffic import TrafficSpec, mix_seed, read_trace, trace_workload, validate_records

STATS_HEADER = "load,throughput_bps,utilization,mean_lat,p50,p95,p99"


def _stats_row(load, stats: SimStats, config: NocConfig) -> str:
    tput = aggregated_throughput(stats, config.clock_hz)
    util = utilization(tput, config)
    if stats.latency_samples:
        lat = latency_stats(stats)
    else:
        lat = {"mean": 0.0, "p50": 0.0, "p95": 0.0, "p99": 0.0}
    return (f"{load:g},{tput:.3f},{util:.6f},"
            f"{lat['mean']:.3f},{lat['p50']:.3f},{lat['p95']:.3f},{lat['p99']:.3f}")


def _write(path: Path, text: str, verbose: bool) -> None:
    path.write_text(text)
    if verbose:
        print(f"wrote {path}", file=sys.stderr)


def _manifest(ec: ExperimentConfig, outdir: Path, mode: str, wall: float,
              verbose: bool) -> None:
    meta = {
        "tool": "simnoc",
        "version": __version__,
        "mode": mode,
        "seed": ec.run.seed,
        "seed_mixing": "splitmix64(base ^ pattern_index ^ ...) per grid cell",
        "wall_time_s": f"{wall:.2f}",
    }
    _write(outdir / "manifest.ini", dump_config(ec, meta), verbose)


def _make_event_logger(path: Path):
    f = open(path, "w")

    def log(cycle, channel, src, dst, mid, beat, last):
        f.write(f"{cycle} {channel} {src} {dst} {mid} {beat} {int(last)}\n")

    return log, f


def cmd_run(ec: ExperimentConfig, outdir: Path, verbose: bool) -> int:
    t0 = time.time()
    event_log = logfile = None
    if verbose:
        event_log, logfile = _make_event_logger(outdir / "events.log")
    try:
        stats, sim = run_simulation(ec.noc, ec.traffic, warmup=ec.run.warmup,
                                    cycles=ec.run.cycles, event_log=event_log)
    finally:
        if logfile:
            logfile.close()
    cfg = resolve_config(ec.noc, ec.traffic)
    _write(outdir / "stats.csv",
           STATS_HEADER + "\n" + _stats_row(ec.traffic.injected_load, stats, cfg) + "\n",
           verbose)
    if ec.run.figures:
        from .plots import link_utilization_figure
        link_utilization_figure(stats, cfg, str(outdir / "links.png"))
    _manifest(ec, outdir, "run", time.time() - t0, verbose)
    return 0


def cmd_sweep(ec: ExperimentConfig, outdir: Path, verbose: bool) -> int:
    t0 = time.time()
    curve = sweep(ec.noc, ec.traffic, list(ec.run.loads),
                  cycles_per_point=ec.run.cycles, warmup=ec.run.warmup)
    cfg = resolve_config(ec.noc, ec.traffic)
    lines = [STATS_HEADER]
    for p in curve.points:
        lines.append(f"{p.load:g},{p.throughput_bps:.3f},{p.utilization:.6f},"
                     f"{p.latency['mean']:.3f},{p.latency['p50']:.3f},"
                     f"{p.latency['p95']:.3f},{p.latency['p99']:.3f}")
    _write(outdir / "sweep.csv", "\n".join(lines) + "\n", verbose)
    if ec.run.figures:
        from .plots import sweep_figure
        sweep_figure(curve, cfg, str(outdir / "sweep.png"))
    _manifest(ec, outdir, "sweep", time.time() - t0, verbose)
    return 0


def _matrix_cell(args) -> tuple[str, int, float, float]:
    noc, spec, warmup, cycles = args
    stats, _ = run_simulation(noc, spec, warmup=warmup, cycles=cycles)
    cfg = resolve_config(noc, spec)
    tput = aggregated_throughput(stats, cfg.clock_hz)
    return (spec.kind, spec.burst_len_range[1], tput, utilization(tput, cfg))


def cmd_matrix(ec: ExperimentConfig, outdir: Path, verbose: bool) -> int:
    t0 = time.time()
    beat = ec.noc.beat_bytes
    cells = []
    for pi, pattern in enumerate(ec.run.matrix_patterns):
        for bi, burst in enumerate(ec.run.matrix_bursts):
            spec = replace(
                ec.traffic, kind=pattern,
                burst_len_range=(max(beat, burst), max(beat, burst)),
                seed=mix_seed(ec.run.seed, pi, bi),
            )
            cells.append((ec.noc, spec, ec.run.warmup, ec.run.cycles))
    if ec.run.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=ec.run.jobs) as pool:
            rows = list(pool.map(_matrix_cell, cells))
    else:
        rows = [_matrix_cell(c) for c in cells]
    lines = ["pattern,burst_bytes,throughput_bps,utilization"]
    for pattern, burst, tput, util in rows:
        lines.append(f"{pattern},{burst},{tput:.3f},{util:.6f}")
    _write(outdir / "matrix.csv", "\n".join(lines) + "\n", verbose)
    if ec.run.figures:
        from .plots import matrix_figure
        matrix_figure(rows, ec.noc, str(outdir / "matrix.png"))
    _manifest(ec, outdir, "matrix", time.time() - t0, verbose)
    return 0


def cmd_replay(trace_path: str, ec: ExperimentConfig, outdir: Path, verbose: bool) -> int:
    t0 = time.time()
    with open(trace_path) as f:
        records = read_trace(f)
    addr_map = allocate_address_map(ec.noc)
    wl = trace_workload(records, ec.noc, addr_map)
    spec = replace(ec.traffic, kind="trace_replay", trace_path=trace_path)
    event_log = logfile = None
    if verbose:
        event_log, logfile = _make_event_logger(outdir / "events.log")
    try:
        stats, sim = run_simulation(ec.noc, spec, workload=wl, event_log=event_log)
    finally:
        if logfile:
            logfile.close()
    _write(outdir / "stats.csv",
           STATS_HEADER + "\n" + _stats_row(0.0, stats, ec.noc) + "\n", verbose)
    if ec.run.figures:
        from .plots import link_utilization_figure
        link_utilization_figure(stats, ec.noc, str(outdir / "links.png"))
    _manifest(replace_traffic(ec, spec), outdir, "replay", time.time() - t0, verbose)
    return 0


def replace_traffic(ec: ExperimentConfig, spec: TrafficSpec) -> ExperimentConfig:
    return ExperimentConfig(ec.noc, spec, ec.run, ec.preset)


def cmd_validate(path: str, config_path: str | None, verbose: bool) -> int:
    text = Path(path).read_text()
    stripped = next((ln for ln in text.splitlines()
                     if ln.strip() and not ln.strip().startswith("#")), "")
    if stripped.startswith("["):
        ec = parse_config(text)
        cfg = resolve_config(ec.noc, ec.traffic)
        addr_map = allocate_address_map(cfg)
        if verbose:
            sys.stderr.write(dump_address_map(addr_map))
            from .topology import build_mesh, generate_routing_tables
            sys.stderr.write(dump_routing_tables(
                generate_routing_tables(build_mesh(cfg), addr_map)))
        print(f"{path}: valid experiment config "
              f"({cfg.rows}x{cfg.cols}, DW={cfg.data_width}, {ec.traffic.kind})")
        return 0
    # otherwise treat as a trace
    if config_path:
        ec = parse_config(Path(config_path).read_text())
        noc = ec.noc
    else:
        noc = NocConfig()
    with open(path) as f:
        records = read_trace(f)
    validate_records(records, noc, allocate_address_map(noc))
    print(f"{path}: valid trace ({len(records)} records)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="simnoc",
                                 description="cycle-level AXI-mesh NoC simulator")
    ap.add_argument("--version", action="version", version=f"simnoc {__version__}")
    sub = ap.add_subparsers(dest="mode", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--seed", type=int, help="base seed override")
        p.add_argument("--jobs", type=int, help="parallel grid cells")
        p.add_argument("--verbose", action="store_true")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("run", help="single simulation")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("sweep", help="offered-load sweep")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("matrix", help="pattern x burst-size grid")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("replay", help="replay a trace file")
    p.add_argument("trace")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("validate", help="check a config or trace file")
    p.add_argument("path")
    p.add_argument("--config", help="config context for trace validation")
    p.add_argument("--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.mode == "validate":
            return cmd_validate(args.path, args.config, args.verbose)

        ec = parse_config(Path(args.config).read_text())
        if args.seed is not None:
            ec = with_seed(ec, args.seed)
        if args.jobs is not None:
            ec.run.jobs = args.jobs
        if args.out is not None:
            ec.run.out = args.out
        if args.no_figures:
            ec.run.figures = False
        outdir = Path(ec.run.out)
        outdir.mkdir(parents=True, exist_ok=True)

        if args.mode == "run":
            return cmd_run(ec, outdir, args.verbose)
        if args.mode == "sweep":
            return cmd_sweep(ec, outdir, args.verbose)
        if args.mode == "matrix":
            return cmd_matrix(ec, outdir, args.verbose)
        if args.mode == "replay":
            return cmd_replay(args.trace, ec, outdir, args.verbose)
        raise SimulationError(f"unhandled mode {args.mode}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except (SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
