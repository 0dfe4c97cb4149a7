"""Mesh construction, address map allocation, and YX routing tables.

The mesh is a grid of crosspoints (XPs) addressed by (row, col) with row 0 at
the top.  Every crosspoint has up to four mesh ports (N/E/S/W, depending on
position) plus one local port where endpoints attach.  Routing is
dimension-ordered YX: a request first moves vertically until it reaches the
destination row, then horizontally, then exits through the local port.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import ConfigError, MappingError

Coord = tuple[int, int]

CHANNELS = ("AW", "W", "B", "AR", "R")


class Port(Enum):
    NORTH = "N"
    EAST = "E"
    SOUTH = "S"
    WEST = "W"
    LOCAL = "L"

    def opposite(self) -> "Port":
        return _OPPOSITE[self]


_OPPOSITE = {
    Port.NORTH: Port.SOUTH,
    Port.SOUTH: Port.NORTH,
    Port.EAST: Port.WEST,
    Port.WEST: Port.EAST,
    Port.LOCAL: Port.LOCAL,
}

# Port -> (drow, dcol)
_PORT_DELTA = {
    Port.NORTH: (-1, 0),
    Port.SOUTH: (1, 0),
    Port.EAST: (0, 1),
    Port.WEST: (0, -1),
}


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class NocConfig:
    """Design-time parameters of the mesh.

    ``master_coords`` / ``slave_coords`` default to one master and one slave
    per crosspoint.  ``register_slice`` names the channels that get a
    one-cycle pipeline stage at every crosspoint egress (all five by default).
    """

    rows: int = 4
    cols: int = 4
    addr_width: int = 32
    data_width: int = 32
    id_width: int = 4
    max_outstanding: int = 8
    connectivity: str = "partial"
    register_slice: frozenset = frozenset(CHANNELS)
    clock_hz: float = 1e9
    endpoint_region_bytes: int = 1 << 20
    master_coords: tuple[Coord, ...] | None = None
    slave_coords: tuple[Coord, ...] | None = None
    fifo_depth: int = 2
    w_token_depth: int = 2
    slave_latency: int = 1
    slave_burst_gap: int = 2
    dma_setup_cycles: int = 16
    dma_fill_cycles: int = 2

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"mesh dimensions must be >= 1, got {self.rows}x{self.cols}")
        if self.addr_width not in (32, 64):
            raise ConfigError(f"addr_width must be 32 or 64, got {self.addr_width}")
        if not _is_pow2(self.data_width) or not 8 <= self.data_width <= 1024:
            raise ConfigError(f"data_width must be a power of two in [8, 1024], got {self.data_width}")
        if not 1 <= self.id_width <= 16:
            raise ConfigError(f"id_width must be in [1, 16], got {self.id_width}")
        if not 1 <= self.max_outstanding <= 128:
            raise ConfigError(f"max_outstanding must be in [1, 128], got {self.max_outstanding}")
        if self.connectivity not in ("partial", "full"):
            raise ConfigError(f"connectivity must be 'partial' or 'full', got {self.connectivity!r}")
        unknown = set(self.register_slice) - set(CHANNELS)
        if unknown:
            raise ConfigError(f"unknown register_slice channels: {sorted(unknown)}")
        if self.fifo_depth < 1:
            raise ConfigError("fifo_depth must be >= 1")
        if self.w_token_depth < 1:
            raise ConfigError("w_token_depth must be >= 1")
        if self.slave_latency < 0 or self.slave_burst_gap < 0:
            raise ConfigError("slave timing parameters must be >= 0")
        if self.dma_setup_cycles < 0 or self.dma_fill_cycles < 0:
            raise ConfigError("DMA timing parameters must be >= 0")
        n = self.rows * self.cols
        for name, coords in (("master", self.masters), ("slave", self.slaves)):
            if len(coords) > n:
                raise ConfigError(f"{name} endpoints exceed crosspoint count ({len(coords)} > {n})")
            if len(set(coords)) != len(coords):
                raise ConfigError(f"duplicate {name} coordinates")
            for r, c in coords:
                if not (0 <= r < self.rows and 0 <= c < self.cols):
                    raise ConfigError(f"{name} coordinate ({r},{c}) outside {self.rows}x{self.cols} mesh")
        if (1 << self.id_width) < len(self.masters):
            raise ConfigError(
                f"2^id_width ({1 << self.id_width}) < number of masters ({len(self.masters)}): "
                "unique-ID requirement violated"
            )
        if self.endpoint_region_bytes <= 0:
            raise ConfigError("endpoint_region_bytes must be positive")
        if self.endpoint_region_bytes % self.beat_bytes:
            raise ConfigError(
                f"beat size {self.beat_bytes} must divide endpoint_region_bytes "
                f"{self.endpoint_region_bytes}"
            )

    @property
    def beat_bytes(self) -> int:
        return self.data_width // 8

    @property
    def masters(self) -> tuple[Coord, ...]:
        if self.master_coords is not None:
            return self.master_coords
        return self._all_coords()

    @property
    def slaves(self) -> tuple[Coord, ...]:
        if self.slave_coords is not None:
            return self.slave_coords
        return self._all_coords()

    def _all_coords(self) -> tuple[Coord, ...]:
        return tuple((r, c) for r in range(self.rows) for c in range(self.cols))


@dataclass(frozen=True)
class Region:
    """One contiguous slave-owned address range."""

    base: int
    size: int
    coord: Coord
    role: str = "slave"

    @property
    def end(self) -> int:
        return self.base + self.size

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.end


class AddressMap:
    """Ordered, disjoint slave regions with binary-search lookup."""

    def __init__(self, regions: Sequence[Region]):
        self.regions = sorted(regions, key=lambda r: r.base)
        self._bases = [r.base for r in self.regions]
        prev_end = -1
        for r in self.regions:
            if r.base < prev_end:
                raise MappingError(f"overlapping regions at 0x{r.base:x}")
            prev_end = r.end
        self._by_coord = {r.coord: r for r in self.regions}
        if len(self._by_coord) != len(self.regions):
            raise MappingError("multiple regions share one endpoint coordinate")

    def lookup(self, addr: int) -> Region | None:
        i = bisect.bisect_right(self._bases, addr) - 1
        if i >= 0 and self.regions[i].contains(addr):
            return self.regions[i]
        return None

    def region_of(self, coord: Coord) -> Region:
        try:
            return self._by_coord[coord]
        except KeyError:
            raise MappingError(f"no region owned by endpoint {coord}") from None

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)


@dataclass
class Mesh:
    """Crosspoint grid plus its derived connectivity."""

    config: NocConfig
    coords: tuple[Coord, ...] = field(init=False)
    links: tuple[tuple[Coord, Coord], ...] = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.coords = tuple((r, c) for r in range(cfg.rows) for c in range(cfg.cols))
        links = []
        for r in range(cfg.rows):
            for c in range(cfg.cols):
                if c + 1 < cfg.cols:
                    links.append(((r, c), (r, c + 1)))
                if r + 1 < cfg.rows:
                    links.append(((r, c), (r + 1, c)))
        self.links = tuple(links)

    def in_bounds(self, coord: Coord) -> bool:
        r, c = coord
        return 0 <= r < self.config.rows and 0 <= c < self.config.cols

    def neighbor(self, coord: Coord, port: Port) -> Coord | None:
        if port is Port.LOCAL:
            return None
        dr, dc = _PORT_DELTA[port]
        n = (coord[0] + dr, coord[1] + dc)
        return n if self.in_bounds(n) else None

    def mesh_ports(self, coord: Coord) -> tuple[Port, ...]:
        """Mesh-facing ports that exist at this position (2 at corners, 3 at edges, 4 inside)."""
        return tuple(p for p in (Port.NORTH, Port.EAST, Port.SOUTH, Port.WEST)
                     if self.neighbor(coord, p) is not None)

    def ports(self, coord: Coord) -> tuple[Port, ...]:
        return self.mesh_ports(coord) + (Port.LOCAL,)


def build_mesh(config: NocConfig) -> Mesh:
    """Instantiate the crosspoint grid with NESW links and one local port each."""
    return Mesh(config)


def allocate_address_map(config: NocConfig, base_address: int = 0) -> AddressMap:
    """Assign each slave a contiguous region, row-major from ``base_address``.

    Deterministic for a given config; raises ConfigError when the map
    does not fit in the configured address width.
    """
    if base_address < 0:
        raise ConfigError("base_address must be non-negative")
    regions = []
    addr = base_address
    order = sorted(config.slaves)  # row-major
    for coord in order:
        regions.append(Region(addr, config.endpoint_region_bytes, coord))
        addr += config.endpoint_region_bytes
    if addr > (1 << config.addr_width):
        raise ConfigError(
            f"address map top 0x{addr:x} exceeds 2^{config.addr_width}"
        )
    return AddressMap(regions)


def yx_route(src: Coord, dst: Coord) -> list[Port]:
    """Egress-port sequence from src to dst: column moves first, then row, then Local.

    Length is always Manhattan distance + 1.
    """
    ports = []
    r, c = src
    dr, dc = dst
    step = Port.SOUTH if dr > r else Port.NORTH
    for _ in range(abs(dr - r)):
        ports.append(step)
    step = Port.EAST if dc > c else Port.WEST
    for _ in range(abs(dc - c)):
        ports.append(step)
    ports.append(Port.LOCAL)
    return ports


def first_hop(src: Coord, dst: Coord) -> Port:
    if src[0] != dst[0]:
        return Port.SOUTH if dst[0] > src[0] else Port.NORTH
    if src[1] != dst[1]:
        return Port.EAST if dst[1] > src[1] else Port.WEST
    return Port.LOCAL


@dataclass(frozen=True)
class RouteEntry:
    base: int
    size: int
    port: Port

    @property
    def end(self) -> int:
        return self.base + self.size


class RoutingTable:
    """Per-crosspoint address ranges mapped to egress ports."""

    def __init__(self, coord: Coord, entries: Sequence[RouteEntry]):
        self.coord = coord
        self.entries = sorted(entries, key=lambda e: e.base)
        self._bases = [e.base for e in self.entries]

    def route(self, addr: int) -> Port | None:
        i = bisect.bisect_right(self._bases, addr) - 1
        if i >= 0:
            e = self.entries[i]
            if e.base <= addr < e.end:
                return e.port
        return None


def generate_routing_tables(
    mesh: Mesh, addr_map: AddressMap, coalesce: bool = True
) -> dict[Coord, RoutingTable]:
    """Build the per-XP address-to-egress tables implementing YX routing.

    Adjacent ranges that resolve to the same egress port are merged when
    ``coalesce`` is set; merging never changes routing decisions.
    """
    tables = {}
    for xp in mesh.coords:
        entries = []
        for region in addr_map:
            if not mesh.in_bounds(region.coord):
                raise MappingError(f"region at 0x{region.base:x} owned by off-mesh endpoint {region.coord}")
            entries.append(RouteEntry(region.base, region.size, first_hop(xp, region.coord)))
        entries.sort(key=lambda e: e.base)
        if coalesce:
            merged: list[RouteEntry] = []
            for e in entries:
                if merged and merged[-1].port is e.port and merged[-1].end == e.base:
                    merged[-1] = RouteEntry(merged[-1].base, merged[-1].size + e.size, e.port)
                else:
                    merged.append(e)
            entries = merged
        tables[xp] = RoutingTable(xp, entries)
    return tables


@dataclass
class DeadlockVerdict:
    acyclic: bool
    # Witness: list of directed inter-XP links forming a dependency cycle.
    cycle: list[tuple[Coord, Coord]] | None = None
    network: str = ""

    def __bool__(self) -> bool:
        return self.acyclic


def check_deadlock_freedom(
    mesh: Mesh, tables: dict[Coord, RoutingTable]
) -> DeadlockVerdict:
    """Channel-dependency-graph analysis over all table-routed paths.

    Nodes are directed inter-XP links; an edge joins two links when some
    destination's route enters an XP on the first and leaves on the second.
    The request network (AW/W/AR) uses the tables as-is; the response network
    (B/R) retraces request paths in reverse, so its dependency graph is the
    transpose and is acyclic exactly when the request graph is.  The returned
    witness therefore refers to the request network.
    """
    # Destinations: every distinct range base present in the tables.
    probe_addrs = sorted({e.base for t in tables.values() for e in t.entries})

    adj: dict[tuple[Coord, Coord], set[tuple[Coord, Coord]]] = {}
    for addr in probe_addrs:
        for xp in mesh.coords:
            out = tables[xp].route(addr)
            if out is None or out is Port.LOCAL:
                continue
            nxt = mesh.neighbor(xp, out)
            if nxt is None:
                raise MappingError(f"table at {xp} names absent port {out} for 0x{addr:x}")
            out_link = (xp, nxt)
            for p in mesh.mesh_ports(xp):
                up = mesh.neighbor(xp, p)
                if tables[up].route(addr) is p.opposite():
                    adj.setdefault((up, xp), set()).add(out_link)
            adj.setdefault(out_link, set())

    # Iterative DFS cycle detection with path recovery.
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in adj}
    for root in adj:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(adj[root]))]
        color[root] = GREY
        path = [root]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt not in color:
                    continue
                if color[nxt] == GREY:
                    cycle = path[path.index(nxt):] + [nxt]
                    return DeadlockVerdict(False, cycle, "request")
                if color[nxt] == WHITE:
                    color[nxt] = GREY
                    stack.append((nxt, iter(adj[nxt])))
                    path.append(nxt)
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
                path.pop()
    return DeadlockVerdict(True, None, "request")


# ---------------------------------------------------------------------------
# Line-based text serialization
# ---------------------------------------------------------------------------

def dump_address_map(addr_map: AddressMap) -> str:
    """One `region <base-hex> <size-hex> <row> <col> <role>` line per region."""
    lines = [
        f"region 0x{r.base:x} 0x{r.size:x} {r.coord[0]} {r.coord[1]} {r.role}"
        for r in addr_map
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def dump_routing_tables(tables: dict[Coord, RoutingTable]) -> str:
    """One `route <row> <col> <base-hex> <size-hex> <port>` line per entry."""
    lines = []
    for coord in sorted(tables):
        for e in tables[coord].entries:
            lines.append(f"route {coord[0]} {coord[1]} 0x{e.base:x} 0x{e.size:x} {e.port.value}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_address_map(text: str) -> AddressMap:
    regions = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6 or parts[0] != "region":
            raise MappingError(f"line {ln}: malformed region record: {raw!r}")
        _, base, size, row, col, role = parts
        regions.append(Region(int(base, 16), int(size, 16), (int(row), int(col)), role))
    return AddressMap(regions)


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
