"""Throughput, bisection bandwidth, utilization, latency, and load sweeps.

Unit convention: bytes per cycle internally, bytes per second (powers of
ten) at the interfaces.  Reports label 1e9 B/s as GB/s; the reference
figures quote the same numerals as GiB/s, and the utilization identities
(e.g. 22.5/32 = 70.3%) hold in the decimal convention used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .engine import Simulator
from .errors import MeasurementError
from .stats import SimStats
from .topology import NocConfig, allocate_address_map
from .traffic import (
    SYNTHETIC_KINDS,
    TrafficSpec,
    Workload,
    build_workload,
    pattern_slave_coords,
)


def aggregated_throughput(stats: SimStats, clock_hz: float) -> float:
    """Delivered payload bytes per second over the measurement window."""
    if stats.measured_cycles <= 0:
        raise MeasurementError("throughput over an empty measurement window")
    return stats.delivered_payload_bytes / stats.measured_cycles * clock_hz


def bisection_bandwidth(config: NocConfig) -> float:
    """Bandwidth across the midline cut of the longer dimension, both directions."""
    crossing_pairs = min(config.rows, config.cols)
    return 2 * crossing_pairs * config.beat_bytes * config.clock_hz


def utilization(throughput_bps: float, config: NocConfig) -> float:
    bb = bisection_bandwidth(config)
    if bb <= 0:
        raise MeasurementError("bisection bandwidth is zero")
    return throughput_bps / bb


def latency_stats(stats: SimStats) -> dict[str, float]:
    """Mean and nearest-rank percentiles of per-transfer latency, in cycles."""
    samples = stats.latency_samples
    if not samples:
        raise MeasurementError("no latency samples in the measurement window")
    ordered = sorted(samples)
    n = len(ordered)

    def rank(q: float) -> float:
        return ordered[max(0, math.ceil(q * n) - 1)]

    return {
        "mean": sum(ordered) / n,
        "p50": rank(0.50),
        "p95": rank(0.95),
        "p99": rank(0.99),
        "max": ordered[-1],
    }


def resolve_config(config: NocConfig, spec: TrafficSpec) -> NocConfig:
    """Apply the slave placement a pattern dictates (Fig. 5-style layouts)."""
    if spec.kind in ("all_global", "max_two_hop", "max_single_hop"):
        slaves = pattern_slave_coords(spec, config)
        if config.slaves != slaves:
            return replace(config, slave_coords=slaves)
    return config


def run_simulation(
    config: NocConfig,
    spec: TrafficSpec,
    warmup: int = 10_000,
    cycles: int = 100_000,
    workload: Workload | None = None,
    check: bool = True,
    event_log=None,
) -> tuple[SimStats, Simulator]:
    """Build and run one simulation with the measurement policy for its kind.

    Synthetic kinds use a fixed warmup + measurement window; finite workloads
    (DNN schedules, traces) run to drain with the schedule's suggested
    warmup/measurement bounds.
    """
    config = resolve_config(config, spec)
    addr_map = allocate_address_map(config)
    wl = workload if workload is not None else build_workload(spec, config, addr_map)
    sim = Simulator(config, addr_map, wl.streams, event_log=event_log)
    if wl.drain:
        stats = sim.run_to_drain(warmup=wl.suggested_warmup,
                                 measure=wl.suggested_measure)
    else:
        stats = sim.run(cycles, warmup=warmup)
    if check:
        sim.check_conservation()
    return stats, sim


@dataclass
class SweepPoint:
    load: float
    throughput_bps: float
    utilization: float
    latency: dict[str, float]


@dataclass
class SweepCurve:
    points: list[SweepPoint]
    saturation_point: float
    saturation_throughput: float


def sweep(
    config: NocConfig,
    spec: TrafficSpec,
    load_points: list[float],
    cycles_per_point: int = 100_000,
    warmup: int = 10_000,
    saturation_gain: float = 0.02,
) -> SweepCurve:
    """Independent simulation per offered-load point, plus saturation detection.

    Each point derives a fresh seed (base_seed xor point index); saturation
    is the first load whose relative throughput gain over the previous point
    drops below ``saturation_gain``.
    """
    if not load_points or any(l <= 0 or l > 1 for l in load_points):
        raise MeasurementError("load points must lie in (0, 1]")
    if sorted(load_points) != load_points or len(set(load_points)) != len(load_points):
        raise MeasurementError("load points must be strictly increasing")
    if spec.kind not in SYNTHETIC_KINDS:
        raise MeasurementError(f"sweep needs an open-loop traffic kind, not {spec.kind!r}")

    points: list[SweepPoint] = []
    for i, load in enumerate(load_points):
        pspec = replace(spec, injected_load=load, seed=spec.seed ^ i)
        try:
            stats, _ = run_simulation(config, pspec, warmup=warmup, cycles=cycles_per_point)
        except Exception as exc:
            raise MeasurementError(f"sweep failed at load point {load}: {exc}") from exc
        tput = aggregated_throughput(stats, config.clock_hz)
        lat = latency_stats(stats) if stats.latency_samples else {
            "mean": 0.0, "p50": 0.0, "p95": 0.0, "p99": 0.0, "max": 0.0}
        points.append(SweepPoint(load, tput, utilization(tput, config), lat))

    sat_load = points[-1].load
    sat_tput = points[-1].throughput_bps
    for prev, cur in zip(points, points[1:]):
        if prev.throughput_bps > 0:
            gain = (cur.throughput_bps - prev.throughput_bps) / prev.throughput_bps
            if gain < saturation_gain:
                sat_load = cur.load
                sat_tput = cur.throughput_bps
                break
    if len(points) == 1:
        sat_load = points[0].load
        sat_tput = points[0].throughput_bps
    return SweepCurve(points, sat_load, sat_tput)
