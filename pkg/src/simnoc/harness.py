"""Experiment configuration files: INI sections, presets, manifest echo.

A config file holds three sections::

    [noc]      design-time mesh parameters (or `preset = slim_4x4` etc.)
    [traffic]  pattern/workload description
    [run]      warmup, cycles, seed, output dir, sweep loads, matrix grid

Presets expand first, explicit keys override.  ``dump_config`` emits a fully
resolved file that parses back to the identical experiment, which is how run
manifests stay replayable.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .topology import CHANNELS, Coord, NocConfig
from .traffic import TrafficSpec

PRESETS: dict[str, dict] = {
    # the two evaluation configurations
    "slim_4x4": dict(rows=4, cols=4, addr_width=32, data_width=32, id_width=4,
                     max_outstanding=8),
    "wide_4x4": dict(rows=4, cols=4, addr_width=32, data_width=512, id_width=4,
                     max_outstanding=8),
    # the small synthesis-study mesh
    "slim_2x2": dict(rows=2, cols=2, addr_width=32, data_width=32, id_width=2,
                     max_outstanding=1),
}

DEFAULT_MATRIX_BURSTS = (4, 64, 1024, 10240, 65536)
DEFAULT_MATRIX_PATTERNS = ("all_global", "max_two_hop", "max_single_hop")


@dataclass
class RunSection:
    warmup: int = 10_000
    cycles: int = 100_000
    seed: int = 1
    out: str = "out"
    loads: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    matrix_bursts: tuple[int, ...] = DEFAULT_MATRIX_BURSTS
    matrix_patterns: tuple[str, ...] = DEFAULT_MATRIX_PATTERNS
    jobs: int = 1
    figures: bool = True


@dataclass
class ExperimentConfig:
    noc: NocConfig = field(default_factory=NocConfig)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    run: RunSection = field(default_factory=RunSection)
    preset: str = ""


def _parse_int(name: str, raw: str) -> int:
    try:
        return int(raw.replace("_", ""), 0)
    except ValueError:
        raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None


def _parse_float(name: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {raw!r}") from None


def _parse_bool(name: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name}: expected a boolean, got {raw!r}")


def _parse_coord(name: str, raw: str) -> Coord:
    parts = raw.replace(",", " ").split()
    if len(parts) != 2:
        raise ConfigError(f"{name}: expected 'row,col', got {raw!r}")
    return (_parse_int(name, parts[0]), _parse_int(name, parts[1]))


def _parse_coords(name: str, raw: str) -> tuple[Coord, ...]:
    out = []
    for item in raw.split(";"):
        item = item.strip()
        if item:
            out.append(_parse_coord(name, item))
    return tuple(out)


def _parse_slices(raw: str) -> frozenset:
    low = raw.strip().lower()
    if low in ("all", "*"):
        return frozenset(CHANNELS)
    if low in ("none", ""):
        return frozenset()
    chans = frozenset(c.strip().upper() for c in raw.replace(",", " ").split())
    unknown = chans - set(CHANNELS)
    if unknown:
        raise ConfigError(f"register_slice: unknown channels {sorted(unknown)}")
    return chans


_NOC_KEYS = {
    "rows": int, "cols": int, "addr_width": int, "data_width": int,
    "id_width": int, "max_outstanding": int, "connectivity": str,
    "clock_hz": float, "endpoint_region_bytes": int, "fifo_depth": int,
    "w_token_depth": int, "slave_latency": int, "slave_burst_gap": int,
    "dma_setup_cycles": int, "dma_fill_cycles": int,
}

_TRAFFIC_KEYS = {
    "kind": str, "injected_load": float, "rw_mix": float, "seed": int,
    "batches": int, "pipeline_batches": int, "gradient_exchange": bool,
    "layer_table": str, "trace_path": str,
}

_RUN_KEYS = {
    "warmup": int, "cycles": int, "seed": int, "out": str, "jobs": int,
    "figures": bool,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse an experiment file; unknown sections/keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None

    for section in cp.sections():
        if section not in ("noc", "traffic", "run", "meta"):
            raise ConfigError(f"unknown section [{section}]")

    noc_kwargs: dict = {}
    preset = ""
    if cp.has_section("noc"):
        items = dict(cp.items("noc"))
        preset = items.pop("preset", "")
        if preset:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r} "
                                  f"(have {', '.join(sorted(PRESETS))})")
            noc_kwargs.update(PRESETS[preset])
        for key, raw in items.items():
            if key == "register_slice":
                noc_kwargs[key] = _parse_slices(raw)
            elif key == "masters":
                noc_kwargs["master_coords"] = _parse_coords("masters", raw)
            elif key == "slaves":
                noc_kwargs["slave_coords"] = _parse_coords("slaves", raw)
            elif key in _NOC_KEYS:
                typ = _NOC_KEYS[key]
                conv = {int: _parse_int, float: _parse_float, str: str}[typ]
                noc_kwargs[key] = conv(f"noc.{key}", raw) if typ is not str else raw
            else:
                raise ConfigError(f"unknown key noc.{key}")
    noc = NocConfig(**noc_kwargs)

    traffic_kwargs: dict = {}
    if cp.has_section("traffic"):
        for key, raw in cp.items("traffic"):
            if key == "burst_len_range":
                parts = raw.split()
                if len(parts) != 2:
                    raise ConfigError("traffic.burst_len_range: expected 'min max'")
                traffic_kwargs["burst_len_range"] = (
                    _parse_int("burst_min", parts[0]), _parse_int("burst_max", parts[1]))
            elif key == "single_slave":
                traffic_kwargs[key] = _parse_coord("traffic.single_slave", raw)
            elif key == "l2":
                traffic_kwargs["l2_coord"] = _parse_coord("traffic.l2", raw)
            elif key in _TRAFFIC_KEYS:
                typ = _TRAFFIC_KEYS[key]
                conv = {int: _parse_int, float: _parse_float, str: str, bool: _parse_bool}[typ]
                traffic_kwargs[key] = conv(f"traffic.{key}", raw) if typ is not str else raw
            else:
                raise ConfigError(f"unknown key traffic.{key}")
    run = RunSection()
    if cp.has_section("run"):
        for key, raw in cp.items("run"):
            if key == "loads":
                run.loads = tuple(_parse_float("run.loads", x) for x in raw.split())
            elif key == "matrix_bursts":
                run.matrix_bursts = tuple(_parse_int("run.matrix_bursts", x) for x in raw.split())
            elif key == "matrix_patterns":
                pats = tuple(raw.split())
                bad = set(pats) - set(DEFAULT_MATRIX_PATTERNS) - {"uniform_random"}
                if bad:
                    raise ConfigError(f"run.matrix_patterns: unknown patterns {sorted(bad)}")
                run.matrix_patterns = pats
            elif key in _RUN_KEYS:
                typ = _RUN_KEYS[key]
                conv = {int: _parse_int, float: _parse_float, str: str, bool: _parse_bool}[typ]
                setattr(run, key, conv(f"run.{key}", raw) if typ is not str else raw)
            else:
                raise ConfigError(f"unknown key run.{key}")

    # run.seed is the experiment base seed; the traffic seed follows it
    # unless the traffic section pins its own.
    if "seed" not in traffic_kwargs:
        traffic_kwargs["seed"] = run.seed
    if "burst_len_range" not in traffic_kwargs:
        traffic_kwargs["burst_len_range"] = (noc.beat_bytes, noc.beat_bytes)
    traffic = TrafficSpec(**traffic_kwargs)
    traffic.validate_against(noc)

    return ExperimentConfig(noc, traffic, run, preset)


def dump_config(ec: ExperimentConfig, meta: dict | None = None) -> str:
    """Emit the fully resolved experiment, parseable by ``parse_config``."""
    noc = ec.noc
    lines = ["[noc]"]
    for key in _NOC_KEYS:
        val = getattr(noc, key)
        if isinstance(val, float):
            lines.append(f"{key} = {val!r}")
        else:
            lines.append(f"{key} = {val}")
    lines.append(f"register_slice = {','.join(c for c in CHANNELS if c in noc.register_slice) or 'none'}")
    if noc.master_coords is not None:
        lines.append("masters = " + "; ".join(f"{r},{c}" for r, c in noc.master_coords))
    if noc.slave_coords is not None:
        lines.append("slaves = " + "; ".join(f"{r},{c}" for r, c in noc.slave_coords))

    t = ec.traffic
    lines += [
        "",
        "[traffic]",
        f"kind = {t.kind}",
        f"injected_load = {t.injected_load!r}",
        f"burst_len_range = {t.burst_len_range[0]} {t.burst_len_range[1]}",
        f"rw_mix = {t.rw_mix!r}",
        f"seed = {t.seed}",
        f"single_slave = {t.single_slave[0]},{t.single_slave[1]}",
        f"l2 = {t.l2_coord[0]},{t.l2_coord[1]}",
        f"batches = {t.batches}",
        f"pipeline_batches = {t.pipeline_batches}",
        f"gradient_exchange = {t.gradient_exchange}",
    ]
    if t.layer_table:
        lines.append(f"layer_table = {t.layer_table}")
    if t.trace_path:
        lines.append(f"trace_path = {t.trace_path}")

    r = ec.run
    lines += [
        "",
        "[run]",
        f"warmup = {r.warmup}",
        f"cycles = {r.cycles}",
        f"seed = {r.seed}",
        f"out = {r.out}",
        "loads = " + " ".join(repr(x) for x in r.loads),
        "matrix_bursts = " + " ".join(str(x) for x in r.matrix_bursts),
        "matrix_patterns = " + " ".join(r.matrix_patterns),
        f"jobs = {r.jobs}",
        f"figures = {r.figures}",
    ]
    if meta:
        lines += ["", "[meta]"]
        lines += [f"{k} = {v}" for k, v in meta.items()]
    return "\n".join(lines) + "\n"


def with_seed(ec: ExperimentConfig, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        ec.noc, replace(ec.traffic, seed=seed),
        replace(ec.run, seed=seed), ec.preset,
    )
