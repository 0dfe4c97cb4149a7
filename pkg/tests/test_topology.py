"""Mesh construction, address map, YX routing, deadlock analysis."""

from collections import deque

import pytest

from simnoc.errors import ConfigError, MappingError
from simnoc.topology import (
    AddressMap,
    NocConfig,
    Port,
    Region,
    RouteEntry,
    RoutingTable,
    allocate_address_map,
    build_mesh,
    check_deadlock_freedom,
    dump_address_map,
    dump_routing_tables,
    first_hop,
    generate_routing_tables,
    manhattan,
    parse_address_map,
    yx_route,
)

MIB = 1 << 20


def bfs_distance(mesh, src, dst):
    """Independent shortest-path oracle over the mesh graph."""
    seen = {src: 0}
    q = deque([src])
    while q:
        cur = q.popleft()
        if cur == dst:
            return seen[cur]
        for p in mesh.mesh_ports(cur):
            nxt = mesh.neighbor(cur, p)
            if nxt not in seen:
                seen[nxt] = seen[cur] + 1
                q.append(nxt)
    raise AssertionError("disconnected mesh")


# -- mesh construction -------------------------------------------------------

def test_mesh_2x2_counts():
    mesh = build_mesh(NocConfig(rows=2, cols=2, id_width=2))
    assert len(mesh.coords) == 4
    assert len(mesh.links) == 4


def test_mesh_1x1_degenerate():
    mesh = build_mesh(NocConfig(rows=1, cols=1, id_width=1))
    assert len(mesh.coords) == 1
    assert len(mesh.links) == 0
    assert mesh.ports((0, 0)) == (Port.LOCAL,)


def test_mesh_4x4_link_count():
    # grid-graph edges: 3*4 horizontal + 4*3 vertical
    mesh = build_mesh(NocConfig(rows=4, cols=4))
    assert len(mesh.coords) == 16
    assert len(mesh.links) == 24


def test_port_counts_by_position():
    mesh = build_mesh(NocConfig(rows=4, cols=4))
    degrees = sorted(len(mesh.mesh_ports(c)) for c in mesh.coords)
    assert degrees.count(2) == 4      # corners
    assert degrees.count(3) == 8      # edges
    assert degrees.count(4) == 4      # interior


def test_config_invariants():
    with pytest.raises(ConfigError):
        NocConfig(rows=0, cols=4)
    with pytest.raises(ConfigError):
        NocConfig(rows=4, cols=4, id_width=2)  # 2^2 < 16 masters
    with pytest.raises(ConfigError):
        NocConfig(data_width=48)
    with pytest.raises(ConfigError):
        NocConfig(addr_width=48)
    with pytest.raises(ConfigError):
        NocConfig(max_outstanding=0)
    with pytest.raises(ConfigError):
        NocConfig(rows=2, cols=2, id_width=2, slave_coords=((0, 0), (0, 0)))
    with pytest.raises(ConfigError):
        NocConfig(rows=2, cols=2, id_width=2, master_coords=((5, 5),))
    # beat size must divide the region size
    with pytest.raises(ConfigError):
        NocConfig(rows=2, cols=2, id_width=2, data_width=512,
                  endpoint_region_bytes=96)


# -- address map -------------------------------------------------------------

def test_address_map_row_major_2x2():
    cfg = NocConfig(rows=2, cols=2, id_width=2, endpoint_region_bytes=MIB)
    amap = allocate_address_map(cfg)
    got = [(r.coord, r.base) for r in amap]
    assert got == [((0, 0), 0), ((0, 1), MIB), ((1, 0), 2 * MIB), ((1, 1), 3 * MIB)]


def test_address_map_fits_32_bits():
    cfg = NocConfig(rows=4, cols=4, endpoint_region_bytes=16 * MIB)
    amap = allocate_address_map(cfg)
    assert len(amap) == 16
    assert amap.regions[-1].end == 256 * MIB < (1 << 32)


def test_address_map_overflow():
    cfg = NocConfig(rows=4, cols=4, endpoint_region_bytes=512 * MIB)
    with pytest.raises(ConfigError):
        allocate_address_map(cfg)  # 8 GiB > 4 GiB


def test_address_map_lookup_and_disjointness():
    cfg = NocConfig(rows=3, cols=3, id_width=4, endpoint_region_bytes=4096)
    amap = allocate_address_map(cfg, base_address=0x1000)
    assert amap.lookup(0xFFF) is None
    assert amap.lookup(0x1000).coord == (0, 0)
    assert amap.lookup(0x1000 + 9 * 4096) is None
    with pytest.raises(MappingError):
        AddressMap([Region(0, 4096, (0, 0)), Region(100, 4096, (0, 1))])


# -- YX routing --------------------------------------------------------------

def test_yx_route_zero_hop():
    assert yx_route((0, 0), (0, 0)) == [Port.LOCAL]


def test_yx_route_column_first():
    assert yx_route((0, 0), (2, 1)) == [Port.SOUTH, Port.SOUTH, Port.EAST, Port.LOCAL]


def test_yx_route_all_pairs_minimal_4x4():
    mesh = build_mesh(NocConfig(rows=4, cols=4))
    for src in mesh.coords:
        for dst in mesh.coords:
            route = yx_route(src, dst)
            assert len(route) == bfs_distance(mesh, src, dst) + 1
            assert route[-1] is Port.LOCAL


@pytest.mark.parametrize("n", [8])
def test_yx_route_legality_up_to_8x8(n):
    # no vertical move may follow a horizontal move
    vertical = {Port.NORTH, Port.SOUTH}
    horizontal = {Port.EAST, Port.WEST}
    for src in ((r, c) for r in range(n) for c in range(n)):
        for dst in ((r, c) for r in range(n) for c in range(n)):
            route = yx_route(src, dst)
            assert len(route) == manhattan(src, dst) + 1
            seen_horizontal = False
            for port in route[:-1]:
                if port in horizontal:
                    seen_horizontal = True
                assert not (seen_horizontal and port in vertical)


# -- routing tables ----------------------------------------------------------

def test_table_first_hop_examples():
    cfg = NocConfig(rows=4, cols=4)
    mesh = build_mesh(cfg)
    amap = allocate_address_map(cfg)
    tables = generate_routing_tables(mesh, amap)
    region = amap.region_of((2, 1))
    assert tables[(0, 0)].route(region.base) is Port.SOUTH
    assert tables[(2, 1)].route(region.base) is Port.LOCAL


def walk(mesh, tables, start, addr, owner):
    cur = start
    for _ in range(mesh.config.rows + mesh.config.cols):
        port = tables[cur].route(addr)
        assert port is not None, f"no route for 0x{addr:x} at {cur}"
        if port is Port.LOCAL:
            return cur
        cur = mesh.neighbor(cur, port)
    raise AssertionError(f"walk from {start} to {owner} did not terminate")


@pytest.mark.parametrize("coalesce", [False, True])
def test_table_walk_reaches_every_region(coalesce):
    cfg = NocConfig(rows=4, cols=4)
    mesh = build_mesh(cfg)
    amap = allocate_address_map(cfg)
    tables = generate_routing_tables(mesh, amap, coalesce=coalesce)
    for start in mesh.coords:
        for region in amap:
            probe_addrs = (region.base, region.end - 1)
            for addr in probe_addrs:
                assert walk(mesh, tables, start, addr, region.coord) == region.coord


def test_coalescing_preserves_routing():
    cfg = NocConfig(rows=4, cols=4)
    mesh = build_mesh(cfg)
    amap = allocate_address_map(cfg)
    plain = generate_routing_tables(mesh, amap, coalesce=False)
    merged = generate_routing_tables(mesh, amap, coalesce=True)
    for xp in mesh.coords:
        assert len(merged[xp].entries) <= len(plain[xp].entries)
        for region in amap:
            for addr in (region.base, region.base + region.size // 2, region.end - 1):
                assert plain[xp].route(addr) is merged[xp].route(addr)


def test_tables_never_name_absent_ports():
    cfg = NocConfig(rows=4, cols=4)
    mesh = build_mesh(cfg)
    tables = generate_routing_tables(mesh, allocate_address_map(cfg))
    for xp in mesh.coords:
        allowed = set(mesh.ports(xp))
        for e in tables[xp].entries:
            assert e.port in allowed


# -- deadlock freedom --------------------------------------------------------

@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_yx_tables_are_acyclic(n):
    cfg = NocConfig(rows=n, cols=n, id_width=max(1, (n * n - 1).bit_length()))
    mesh = build_mesh(cfg)
    tables = generate_routing_tables(mesh, allocate_address_map(cfg))
    verdict = check_deadlock_freedom(mesh, tables)
    assert verdict.acyclic
    assert verdict.cycle is None


def test_adversarial_turn_ring_detected():
    cfg = NocConfig(rows=2, cols=2, id_width=2)
    mesh = build_mesh(cfg)
    ring = {
        (0, 0): Port.EAST,
        (0, 1): Port.SOUTH,
        (1, 1): Port.WEST,
        (1, 0): Port.NORTH,
    }
    tables = {xp: RoutingTable(xp, [RouteEntry(0, 4096, port)])
              for xp, port in ring.items()}
    verdict = check_deadlock_freedom(mesh, tables)
    assert not verdict.acyclic
    # the witness is the four-link ring
    links = set(verdict.cycle)
    assert {((0, 0), (0, 1)), ((0, 1), (1, 1)), ((1, 1), (1, 0)), ((1, 0), (0, 0))} <= links


# -- serialization -----------------------------------------------------------

def test_address_map_text_round_trip():
    cfg = NocConfig(rows=2, cols=3, id_width=3)
    amap = allocate_address_map(cfg, base_address=0x4000)
    text = dump_address_map(amap)
    back = parse_address_map(text)
    assert [(r.base, r.size, r.coord, r.role) for r in amap] == \
           [(r.base, r.size, r.coord, r.role) for r in back]
    assert all(line.startswith("region 0x") for line in text.splitlines())


def test_routing_table_dump_format():
    cfg = NocConfig(rows=2, cols=2, id_width=2)
    mesh = build_mesh(cfg)
    tables = generate_routing_tables(mesh, allocate_address_map(cfg), coalesce=False)
    text = dump_routing_tables(tables)
    lines = text.splitlines()
    assert len(lines) == 4 * 4  # 4 XPs x 4 regions
    parts = lines[0].split()
    assert parts[0] == "route" and parts[3].startswith("0x")
    assert parts[5] in "NESWL"


def test_first_hop_matches_route_head():
    for src in ((r, c) for r in range(4) for c in range(4)):
        for dst in ((r, c) for r in range(4) for c in range(4)):
            assert first_hop(src, dst) is yx_route(src, dst)[0]
