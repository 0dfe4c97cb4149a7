"""Injection streams: synthetic patterns, DNN workload emulations, trace I/O.

Synthetic generators are lazy, per-master, and deterministic per seed:
transfer arrivals form a Poisson-style renewal process whose mean byte rate
is ``injected_load`` times the per-master peak (one beat per cycle), with
destinations drawn from the pattern's slave set.

DNN workloads are finite schedules built from bundled per-layer byte tables.
Issue cycles follow an idealized timing estimate (link rate for converging
flows, the DMA backend rate for parallel flows); the engine's backpressure
supplies the real makespan, so throughput is always measured, never assumed.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from importlib import resources
from typing import IO, Iterable, Iterator, Sequence

from .axi import READ, WRITE, TransferRequest
from .errors import ConfigError, ValidationError
from .topology import AddressMap, Coord, NocConfig, manhattan

# A trace record has exactly the fields of a transfer request.
TraceRecord = TransferRequest

SYNTHETIC_KINDS = ("uniform_random", "all_global", "max_two_hop", "max_single_hop")
DNN_KINDS = ("dnn_training", "dnn_parallel_conv", "dnn_pipelined_conv")
KINDS = SYNTHETIC_KINDS + DNN_KINDS + ("trace_replay",)

HOP_BOUND = {"max_two_hop": 2, "max_single_hop": 1}

# Breathing room added to schedule phase estimates.
SCHED_SLACK = 64


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (the fixed seed-derivation function)."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def mix_seed(base: int, *vals: int) -> int:
    s = base & 0xFFFFFFFFFFFFFFFF
    for v in vals:
        s = splitmix64(s ^ (v & 0xFFFFFFFFFFFFFFFF))
    return s


@dataclass(frozen=True)
class TrafficSpec:
    """Declarative description of one traffic pattern or workload."""

    kind: str = "uniform_random"
    injected_load: float = 0.5
    burst_len_range: tuple[int, int] = (4, 4)
    rw_mix: float = 0.5
    seed: int = 1
    single_slave: Coord = (2, 1)
    l2_coord: Coord = (0, 0)
    batches: int = 2
    pipeline_batches: int = 40
    gradient_exchange: bool = True
    layer_table: str = ""
    trace_path: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown traffic kind {self.kind!r}")
        if not 0.0 <= self.injected_load <= 1.0:
            raise ConfigError(f"injected_load must be in [0, 1], got {self.injected_load}")
        if not 0.0 <= self.rw_mix <= 1.0:
            raise ConfigError(f"rw_mix must be in [0, 1], got {self.rw_mix}")
        lo, hi = self.burst_len_range
        if lo <= 0 or hi < lo:
            raise ConfigError(f"bad burst_len_range {self.burst_len_range}")
        if self.batches < 1 or self.pipeline_batches < 1:
            raise ConfigError("batch counts must be >= 1")

    def validate_against(self, config: NocConfig) -> None:
        if self.burst_len_range[0] < config.beat_bytes and self.kind in SYNTHETIC_KINDS:
            raise ConfigError(
                f"min transfer {self.burst_len_range[0]} below beat size {config.beat_bytes}"
            )


@dataclass
class Workload:
    """Per-master record streams plus how a run over them should be measured."""

    streams: dict[Coord, Iterable[TransferRequest]]
    drain: bool = False
    suggested_warmup: int = 0
    suggested_measure: int | None = None


def default_table(kind: str) -> str:
    return "resnet34_s90" if kind == "dnn_training" else "tiled_cnn16"


def pattern_slave_coords(spec: TrafficSpec, config: NocConfig) -> tuple[Coord, ...]:
    """Slave placement implied by a pattern kind (mesh default otherwise)."""
    kind = spec.kind
    if kind == "all_global":
        r, c = spec.single_slave
        if not (0 <= r < config.rows and 0 <= c < config.cols):
            raise ConfigError(f"single slave {spec.single_slave} outside mesh")
        return (spec.single_slave,)
    if kind in ("max_two_hop", "max_single_hop"):
        if (config.rows, config.cols) != (4, 4):
            raise ConfigError(f"{kind} pattern is defined on a 4x4 mesh")
        if kind == "max_two_hop":
            return ((1, 1), (1, 2), (2, 1), (2, 2))
        return ((0, 1), (0, 2), (1, 0), (1, 3), (2, 0), (2, 3), (3, 1), (3, 2))
    return config.slaves


def destination_set(spec: TrafficSpec, config: NocConfig, master: Coord) -> list[Coord]:
    """Slaves this master may address under the pattern's rules."""
    slaves = pattern_slave_coords(spec, config)
    if spec.kind == "uniform_random":
        dests = [s for s in slaves if s != master]
    elif spec.kind in HOP_BOUND:
        bound = HOP_BOUND[spec.kind]
        dests = [s for s in slaves if manhattan(master, s) <= bound]
    else:
        dests = list(slaves)
    if not dests:
        raise ConfigError(f"master {master} has no reachable destination under {spec.kind}")
    return dests


def _synthetic_stream(
    spec: TrafficSpec,
    config: NocConfig,
    addr_map: AddressMap,
    master: Coord,
    midx: int,
) -> Iterator[TransferRequest]:
    if spec.injected_load <= 0.0:
        return
    rng = random.Random(mix_seed(spec.seed, midx))
    beat = config.beat_bytes
    dests = destination_set(spec, config, master)
    regions = [addr_map.region_of(c) for c in dests]
    lo, hi = spec.burst_len_range
    lo_beats = max(1, (lo + beat - 1) // beat)
    hi_beats = max(lo_beats, hi // beat)
    rate = spec.injected_load * beat  # mean bytes per cycle
    id_mod = 1 << config.id_width
    t = 0.0
    seq = 0
    while True:
        size = rng.randint(lo_beats, hi_beats) * beat
        region = regions[rng.randrange(len(regions))] if len(regions) > 1 else regions[0]
        span = region.size - size
        offset = rng.randrange(span // beat + 1) * beat if span > 0 else 0
        direction = WRITE if rng.random() < spec.rw_mix else READ
        # renewal process: E[gap] = size/rate keeps the byte rate at `rate`
        t += rng.expovariate(rate / size)
        yield TransferRequest(master, direction, region.base + offset, size,
                              seq % id_mod, int(t))
        seq += 1


# ---------------------------------------------------------------------------
# DNN workload emulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    name: str
    in_bytes: int
    out_bytes: int
    weight_bytes: int


def load_layer_table(name_or_path: str) -> list[Layer]:
    """Read a `layer,in_bytes,out_bytes,weight_bytes` CSV (bundled or external)."""
    try:
        bundled = resources.files("simnoc.data").joinpath(name_or_path + ".csv")
        if bundled.is_file():
            text = bundled.read_text()
        else:
            with open(name_or_path) as f:
                text = f.read()
    except (FileNotFoundError, ModuleNotFoundError) as exc:
        raise ConfigError(f"layer table {name_or_path!r} not found") from exc
    rdr = csv.DictReader(text.splitlines())
    needed = {"layer", "in_bytes", "out_bytes", "weight_bytes"}
    if rdr.fieldnames is None or not needed.issubset(rdr.fieldnames):
        raise ConfigError(f"layer table {name_or_path!r} missing header {sorted(needed)}")
    layers = [
        Layer(row["layer"], int(row["in_bytes"]), int(row["out_bytes"]),
              int(row["weight_bytes"]))
        for row in rdr
    ]
    if not layers:
        raise ConfigError(f"layer table {name_or_path!r} is empty")
    return layers


def _align(nbytes: int, beat: int) -> int:
    return max(beat, (nbytes + beat - 1) // beat * beat)


class _DnnBuilder:
    """Shared state for the three workload schedules."""

    def __init__(self, spec: TrafficSpec, config: NocConfig, addr_map: AddressMap):
        self.spec = spec
        self.config = config
        self.beat = config.beat_bytes
        self.cores = [(r, c) for r in range(config.rows) for c in range(config.cols)]
        if spec.l2_coord not in config.slaves:
            raise ConfigError(f"L2 endpoint {spec.l2_coord} has no slave region")
        self.l2 = addr_map.region_of(spec.l2_coord)
        self.addr_map = addr_map
        self.layers = load_layer_table(spec.layer_table or default_table(spec.kind))
        self.recs: dict[Coord, list[TransferRequest]] = {c: [] for c in self.cores}
        self.seq: dict[Coord, int] = {c: 0 for c in self.cores}
        self.id_mod = 1 << config.id_width

    def emit(self, core: Coord, direction: str, region, nbytes: int, cycle: int) -> None:
        size = _align(nbytes, self.beat)
        if size > region.size:
            raise ConfigError(f"transfer of {size} B exceeds region size {region.size}")
        rid = self.seq[core] % self.id_mod
        self.seq[core] += 1
        self.recs[core].append(
            TransferRequest(core, direction, region.base, size, rid, cycle)
        )

    def dma_cycles(self, nbytes: int) -> int:
        """Endpoint-paced duration of one transfer (drain plus local refill)."""
        beats = _align(nbytes, self.beat) // self.beat
        return beats * (1 + self.config.dma_fill_cycles) + self.config.dma_setup_cycles

    def link_cycles(self, nbytes: int) -> int:
        """Serialized duration of flows converging on one link."""
        return _align(nbytes, self.beat) // self.beat


def build_workload(spec: TrafficSpec, config: NocConfig, addr_map: AddressMap) -> Workload:
    """Streams for any traffic kind except trace replay (see ``trace_workload``)."""
    spec.validate_against(config)
    if spec.kind in SYNTHETIC_KINDS:
        streams = {
            m: _synthetic_stream(spec, config, addr_map, m, i)
            for i, m in enumerate(config.masters)
        }
        return Workload(streams)
    if spec.kind == "dnn_training":
        return _training_workload(spec, config, addr_map)
    if spec.kind == "dnn_parallel_conv":
        return _parallel_conv_workload(spec, config, addr_map)
    if spec.kind == "dnn_pipelined_conv":
        return _pipelined_conv_workload(spec, config, addr_map)
    raise ConfigError(f"kind {spec.kind!r} needs an explicit trace (use trace_workload)")


def _training_workload(spec: TrafficSpec, config: NocConfig, addr_map: AddressMap) -> Workload:
    """Replicated-model training: weight fetches, activation write-backs, gradient ring."""
    b = _DnnBuilder(spec, config, addr_map)
    ncores = len(b.cores)
    t = 0
    for _ in range(spec.batches):
        for layer in b.layers:
            # forward: every core fetches the layer's weights and writes back
            # its activations; the two flows overlap on independent channels
            for core in b.cores:
                b.emit(core, READ, b.l2, layer.weight_bytes, t)
                b.emit(core, WRITE, b.l2, layer.out_bytes, t)
            rd = b.link_cycles(layer.weight_bytes) * ncores
            wr = b.link_cycles(layer.out_bytes) * ncores
            t += max(rd, wr) + SCHED_SLACK
        if spec.gradient_exchange:
            for layer in reversed(b.layers):
                # backward: gradients (weight-sized) to the next core in the ring
                for i, core in enumerate(b.cores):
                    nbr = b.cores[(i + 1) % ncores]
                    b.emit(core, WRITE, b.addr_map.region_of(nbr), layer.weight_bytes, t)
                t += b.dma_cycles(layer.weight_bytes) + SCHED_SLACK
    return Workload(dict(b.recs), drain=True)


def _parallel_conv_workload(spec: TrafficSpec, config: NocConfig, addr_map: AddressMap) -> Workload:
    """Layer-tiled inference: pure L2-to-core and core-to-L2 traffic."""
    b = _DnnBuilder(spec, config, addr_map)
    ncores = len(b.cores)
    t = 0
    for _ in range(spec.batches):
        for layer in b.layers:
            tile_in = _align(max(1, layer.in_bytes // ncores), b.beat)
            tile_out = _align(max(1, layer.out_bytes // ncores), b.beat)
            for core in b.cores:
                b.emit(core, READ, b.l2, tile_in, t)
            t_wr = t + b.link_cycles(tile_in) * ncores + SCHED_SLACK
            for core in b.cores:
                b.emit(core, WRITE, b.l2, tile_out, t_wr)
            t = t_wr + b.link_cycles(tile_out) * ncores + SCHED_SLACK
    return Workload(dict(b.recs), drain=True)


def _pipelined_conv_workload(spec: TrafficSpec, config: NocConfig, addr_map: AddressMap) -> Workload:
    """Depth-first pipeline: core i streams layer-i activations to core i+1."""
    b = _DnnBuilder(spec, config, addr_map)
    ncores = len(b.cores)
    if len(b.layers) != ncores:
        raise ConfigError(
            f"pipelined mapping needs one layer per core "
            f"({len(b.layers)} layers, {ncores} cores)"
        )
    batches = spec.pipeline_batches
    # one pipeline step: the slowest stage sets the pace (core 0 also reads input)
    step = max(
        max(b.dma_cycles(l.out_bytes) for l in b.layers),
        b.dma_cycles(b.layers[0].out_bytes) + b.dma_cycles(b.layers[0].in_bytes),
    ) + SCHED_SLACK
    for s in range(batches + ncores - 1):
        t = s * step
        for i, core in enumerate(b.cores):
            batch = s - i
            if not 0 <= batch < batches:
                continue
            if i == 0:
                b.emit(core, READ, b.l2, b.layers[0].in_bytes, t)
            layer = b.layers[i]
            if i + 1 < ncores:
                dest = b.addr_map.region_of(b.cores[i + 1])
            else:
                dest = b.l2
            b.emit(core, WRITE, dest, layer.out_bytes, t)
    ramp = (ncores + 1) * step
    steady = max(1, (batches - ncores - 1)) * step
    return Workload(dict(b.recs), drain=True, suggested_warmup=ramp,
                    suggested_measure=steady)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------

_DIR_CODE = {READ: "R", WRITE: "W"}
_CODE_DIR = {"R": READ, "W": WRITE}


def write_trace(f: IO[str], records: Iterable[TransferRequest], header: str = "") -> None:
    """`cycle row col dir addr_hex bytes id` lines, `#` comments allowed."""
    if header:
        for line in header.splitlines():
            f.write(f"# {line}\n")
    for r in records:
        f.write(
            f"{r.issue_cycle} {r.master[0]} {r.master[1]} {_DIR_CODE[r.direction]} "
            f"0x{r.base_address:x} {r.total_bytes} {r.id}\n"
        )


def read_trace(f: IO[str]) -> list[TraceRecord]:
    records = []
    for ln, raw in enumerate(f, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValidationError(f"expected 7 fields, got {len(parts)}", line=ln)
        try:
            cycle, row, col = int(parts[0]), int(parts[1]), int(parts[2])
            direction = _CODE_DIR[parts[3]]
            addr = int(parts[4], 16)
            nbytes = int(parts[5])
            rid = int(parts[6])
        except (ValueError, KeyError) as exc:
            raise ValidationError(f"unparseable record: {exc}", line=ln) from None
        records.append(TraceRecord((row, col), direction, addr, nbytes, rid, cycle))
    return records


def validate_records(
    records: Sequence[TraceRecord], config: NocConfig, addr_map: AddressMap
) -> None:
    """Reject records that no master could legally issue on this config."""
    beat = config.beat_bytes
    masters = set(config.masters)
    last_cycle: dict[Coord, int] = {}
    for i, r in enumerate(records, 1):
        where = f"record {i}"
        if r.master not in masters:
            raise ValidationError(f"{where}: no master at {r.master}")
        if r.total_bytes <= 0 or r.total_bytes % beat:
            raise ValidationError(f"{where}: {r.total_bytes} B is not a positive beat multiple")
        if r.base_address % beat:
            raise ValidationError(f"{where}: address 0x{r.base_address:x} not beat-aligned")
        if not 0 <= r.id < (1 << config.id_width):
            raise ValidationError(f"{where}: id {r.id} outside {config.id_width}-bit range")
        region = addr_map.lookup(r.base_address)
        if region is None or r.base_address + r.total_bytes > region.end:
            raise ValidationError(
                f"{where}: [0x{r.base_address:x}, +{r.total_bytes}) not inside one slave region"
            )
        if r.issue_cycle < last_cycle.get(r.master, 0):
            raise ValidationError(f"{where}: issue cycles not sorted for master {r.master}")
        last_cycle[r.master] = r.issue_cycle


def trace_workload(
    records: Sequence[TraceRecord], config: NocConfig, addr_map: AddressMap
) -> Workload:
    validate_records(records, config, addr_map)
    streams: dict[Coord, list[TraceRecord]] = {m: [] for m in config.masters}
    for r in records:
        streams[r.master].append(r)
    return Workload(streams, drain=True)


def materialize(
    spec: TrafficSpec,
    config: NocConfig,
    addr_map: AddressMap,
    until_cycle: int | None = None,
) -> list[TraceRecord]:
    """Flatten a workload into a replayable record list (cycle-major order)."""
    if spec.kind in SYNTHETIC_KINDS and until_cycle is None:
        raise ConfigError("synthetic streams are unbounded; pass until_cycle")
    wl = build_workload(spec, config, addr_map)
    out: list[TraceRecord] = []
    for coord in sorted(wl.streams):
        stream = wl.streams[coord]
        if until_cycle is None:
            out.extend(stream)
        else:
            for r in stream:
                if r.issue_cycle >= until_cycle:
                    break
                out.append(r)
    out.sort(key=lambda r: (r.issue_cycle, r.master))
    return out
