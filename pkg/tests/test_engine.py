"""Crosspoint pipelines, arbitration, ID remapping, MOT, endpoints."""

import random

import pytest

from simnoc.axi import READ, WRITE, TransferRequest
from simnoc.engine import CH_W, P_L, RemapTable, Simulator
from simnoc.errors import SimulationError
from simnoc.topology import NocConfig, allocate_address_map

FAST = dict(dma_setup_cycles=0, dma_fill_cycles=0, slave_latency=0, slave_burst_gap=0)


def make_sim(rows=4, cols=4, **kw):
    kw.setdefault("id_width", 4)
    cfg = NocConfig(rows=rows, cols=cols, **kw)
    amap = allocate_address_map(cfg)
    return Simulator(cfg, amap, {}), cfg, amap


def run_to_done(sim, master, limit=5000):
    start = sim.masters[master].completed
    for _ in range(limit):
        sim.step()
        if sim.masters[master].completed > start:
            return sim.cycle
    raise AssertionError("transfer did not complete")


# -- golden latency / determinism ---------------------------------------------

def test_zero_load_same_xp_write_golden():
    # engine-specific golden value: 1-beat write, same XP, zero-latency slave,
    # slices on all channels, no DMA overheads
    results = []
    for _ in range(3):
        sim, cfg, amap = make_sim(rows=1, cols=1, id_width=1, **FAST)
        t0 = sim.cycle
        assert sim.inject((0, 0), TransferRequest((0, 0), WRITE, 0x40, 4, 0, t0))
        done = run_to_done(sim, (0, 0))
        results.append(done - t0)
    assert results == [8, 8, 8]


def test_zero_traffic_idle():
    sim, cfg, _ = make_sim()
    stats = sim.run(2000)
    assert stats.delivered_payload_bytes == 0
    assert not stats.link_busy
    assert sim.in_network == 0


# -- round-robin fairness ------------------------------------------------------

def test_round_robin_grant_fairness():
    # two masters with continuous single-beat bursts converging on one slave
    # egress; 1-beat bursts via max_burst_beats=1 keep the W lock trivial
    cfg = NocConfig(rows=1, cols=2, id_width=1, max_outstanding=128,
                    slave_coords=((0, 1),), **FAST)
    amap = allocate_address_map(cfg)
    region = amap.region_of((0, 1))

    def jobs(master):
        # a few huge single-id jobs keep the W supply continuous for the window
        return iter([TransferRequest(master, WRITE, region.base, 128 * 1024, 0, 0)
                     for _ in range(4)])

    sim = Simulator(cfg, amap, {(0, 0): jobs((0, 0)), (0, 1): jobs((0, 1))},
                    max_burst_beats=1)
    for _ in range(2000):
        sim.step()
    egress = sim.xps[(0, 1)].chans[CH_W].egress[P_L]
    base = list(egress.grants)
    for _ in range(10_000):
        sim.step()
    deltas = [g - b for g, b in zip(egress.grants, base)]
    competing = sorted(d for d in deltas if d)
    assert len(competing) == 2
    assert competing[1] - competing[0] <= 1
    assert sum(competing) > 4000  # the egress was actually busy


# -- ID remapping --------------------------------------------------------------

def test_remap_distinct_pairs_distinct_ids():
    t = RemapTable(4)
    a = t.map_request(0, 0)
    b = t.map_request(1, 0)  # different ingress, same original id
    assert a != b


def test_remap_same_pair_same_id_while_in_flight():
    t = RemapTable(4)
    a = t.map_request(2, 5)
    b = t.map_request(2, 5)
    assert a == b
    entry = t.response_entry(a)
    assert entry.count == 2


def test_remap_free_and_reuse():
    t = RemapTable(1)  # capacity 2
    a = t.map_request(0, 0)
    b = t.map_request(1, 0)
    assert not t.can_map(2, 0)  # table full for a new pair
    t.release(t.response_entry(a))
    assert t.can_map(2, 0)
    c = t.map_request(2, 0)
    assert c == a  # freed outbound id recycled
    t.release(t.response_entry(b))
    t.release(t.response_entry(c))
    assert not t.fwd and not t.rev


def test_two_masters_same_id_end_to_end():
    # both masters use id 0 through the shared slave crosspoint
    cfg = NocConfig(rows=1, cols=2, id_width=1, slave_coords=((0, 1),), **FAST)
    amap = allocate_address_map(cfg)
    sim = Simulator(cfg, amap, {})
    region = amap.region_of((0, 1))
    assert sim.inject((0, 0), TransferRequest((0, 0), WRITE, region.base, 16, 0, 0))
    assert sim.inject((0, 1), TransferRequest((0, 1), WRITE, region.base, 16, 0, 0))
    for _ in range(200):
        sim.step()
        if all(m.completed for m in sim.masters.values()):
            break
    assert all(m.completed == 1 for m in sim.masters.values())
    sim.check_conservation()


# -- response retrace -----------------------------------------------------------

def test_response_retraces_request_path():
    events = []
    cfg = NocConfig(rows=4, cols=4, **FAST)
    amap = allocate_address_map(cfg)
    sim = Simulator(cfg, amap, {},
                    event_log=lambda *a: events.append(a))
    region = amap.region_of((1, 1))
    assert sim.inject((0, 0), TransferRequest((0, 0), WRITE, region.base, 4, 0, 0))
    run_to_done(sim, (0, 0))
    aw_links = [(e[2], e[3]) for e in events if e[1] == "AW"]
    b_links = [(e[2], e[3]) for e in events if e[1] == "B"]
    # request: master -> xp(0,0) -> xp(1,0) -> xp(1,1) -> slave (YX: south then east)
    assert aw_links == [("xp(0,0)", "xp(1,0)"), ("xp(1,0)", "xp(1,1)"),
                        ("xp(1,1)", "slave(1,1)")]
    # response retraces in reverse
    assert b_links == [("xp(1,1)", "xp(1,0)"), ("xp(1,0)", "xp(0,0)"),
                       ("xp(0,0)", "master(0,0)")]


def test_same_xp_response_via_local_only():
    events = []
    cfg = NocConfig(rows=2, cols=2, id_width=2, **FAST)
    amap = allocate_address_map(cfg)
    sim = Simulator(cfg, amap, {}, event_log=lambda *a: events.append(a))
    region = amap.region_of((0, 0))
    assert sim.inject((0, 0), TransferRequest((0, 0), READ, region.base, 4, 0, 0))
    run_to_done(sim, (0, 0))
    r_links = [(e[2], e[3]) for e in events if e[1] == "R"]
    assert r_links == [("xp(0,0)", "master(0,0)")]


# -- decode errors ----------------------------------------------------------------

def test_write_decode_error_returns_error_response():
    sim, cfg, amap = make_sim(**FAST)
    assert amap.lookup(0xFFFF_FFF0) is None
    assert sim.inject((1, 2), TransferRequest((1, 2), WRITE, 0xFFFF_FFF0, 16, 3, 0))
    run_to_done(sim, (1, 2))
    while sim.in_network:
        sim.step()
    assert sim.total_delivered_w == 0
    assert sim.total_sunk_w == 16
    sim.check_conservation()


def test_read_decode_error_returns_error_response():
    sim, cfg, amap = make_sim(**FAST)
    assert sim.inject((0, 3), TransferRequest((0, 3), READ, 0xFFFF_FF00, 64, 1, 0))
    run_to_done(sim, (0, 3))
    assert sim.total_delivered_r == 0
    assert sim.total_injected_r == 0
    sim.check_conservation()


def test_route_request_decode():
    from simnoc.axi import ChannelMessage, Burst
    sim, cfg, amap = make_sim()
    region = amap.region_of((2, 1))
    burst = Burst(region.base, 1, 4, 0, WRITE)
    msg = ChannelMessage("AW", burst, 0, region.base)
    from simnoc.topology import Port
    assert sim.xps[(0, 0)].route_request(msg) is Port.SOUTH
    assert sim.xps[(2, 1)].route_request(msg) is Port.LOCAL
    msg_bad = ChannelMessage("AW", burst, 0, 0xFFFF_FFF0)
    assert sim.xps[(0, 0)].route_request(msg_bad) is None


# -- MOT ---------------------------------------------------------------------------

def test_inject_mot1_serializes():
    sim, cfg, amap = make_sim(max_outstanding=1, **FAST)
    region = amap.region_of((3, 3))
    r1 = TransferRequest((0, 0), WRITE, region.base, 4, 0, 0)
    r2 = TransferRequest((0, 0), WRITE, region.base, 4, 1, 0)
    assert sim.inject((0, 0), r1)
    assert not sim.inject((0, 0), r2)  # deferred while the first is in flight
    run_to_done(sim, (0, 0))
    assert sim.inject((0, 0), r2)


def test_mot_caps_outstanding_bursts():
    # a multi-burst write against a slow slave: in-flight bursts cap at MOT=8
    sim, cfg, amap = make_sim(max_outstanding=8, dma_setup_cycles=0,
                              dma_fill_cycles=0, slave_latency=400,
                              slave_burst_gap=0)
    region = amap.region_of((0, 1))
    req = TransferRequest((0, 0), WRITE, region.base, 80, 0, 0)
    sim_burst1 = Simulator(cfg, amap, {}, max_burst_beats=1)
    assert sim_burst1.inject((0, 0), req)
    m = sim_burst1.masters[(0, 0)]
    peak = 0
    for _ in range(300):
        sim_burst1.step()
        peak = max(peak, m.outstanding_w)
    assert peak == 8  # the 9th burst deferred until a response frees a slot


def test_mot8_accepts_when_idle():
    sim, cfg, amap = make_sim(max_outstanding=8, **FAST)
    region = amap.region_of((1, 0))
    assert sim.inject((0, 0), TransferRequest((0, 0), WRITE, region.base, 4, 0, 0))


# -- conservation / no-loss --------------------------------------------------------

def test_conservation_and_no_loss_random_finite():
    rng = random.Random(5)
    sim, cfg, amap = make_sim()
    regions = list(amap)
    streams = {}
    issued = {}
    for m in cfg.masters:
        recs = []
        t = 0
        for i in range(rng.randrange(3, 12)):
            region = regions[rng.randrange(len(regions))]
            nbeats = rng.randrange(1, 600)
            t += rng.randrange(0, 300)
            recs.append(TransferRequest(
                m, WRITE if rng.random() < 0.5 else READ,
                region.base, nbeats * 4, i % 16, t))
        streams[m] = recs
        issued[m] = len(recs)
    sim.attach_traffic(streams)
    stats = sim.run_to_drain(max_cycles=400_000)
    assert stats.drained
    sim.check_conservation()
    res_w, res_r = sim.resident_bytes()
    assert res_w == 0 and res_r == 0
    assert sim.total_injected_w == sim.total_delivered_w
    assert sim.total_injected_r == sim.total_delivered_r
    # every request produced exactly one completion
    for m, n in issued.items():
        assert sim.masters[m].completed == n


def test_per_link_throughput_ceiling():
    sim, cfg, amap = make_sim()
    from simnoc.traffic import TrafficSpec, build_workload
    spec = TrafficSpec(kind="uniform_random", injected_load=1.0,
                       burst_len_range=(256, 4096), seed=2)
    wl = build_workload(spec, cfg, amap)
    sim2 = Simulator(cfg, amap, wl.streams)
    stats = sim2.run(5000, warmup=500)
    for (_, _, _), busy in stats.link_busy.items():
        assert busy <= stats.measured_cycles
    n_links = sum(1 for _ in ())  # delivered ceiling checked via busy counters
    assert stats.delivered_payload_bytes <= stats.measured_cycles * cfg.beat_bytes * 80


def test_w_beats_never_interleave_per_link():
    events = []
    cfg = NocConfig(rows=2, cols=2, id_width=2)
    amap = allocate_address_map(cfg)
    from simnoc.traffic import TrafficSpec, build_workload
    spec = TrafficSpec(kind="uniform_random", injected_load=0.9,
                       burst_len_range=(64, 2048), seed=4)
    wl = build_workload(spec, cfg, amap)
    sim = Simulator(cfg, amap, wl.streams, event_log=lambda *a: events.append(a))
    for _ in range(4000):
        sim.step()
    open_burst = {}
    for cyc, ch, src, dst, mid, beat, last in events:
        if ch != "W":
            continue
        link = (src, dst)
        cur = open_burst.get(link)
        if cur is None:
            if not last:
                open_burst[link] = (mid, beat)
        else:
            assert beat == cur[1] + 1, f"interleaved W stream on {link}"
            open_burst[link] = None if last else (mid, beat)


# -- determinism ---------------------------------------------------------------------

def test_determinism_bit_exact():
    def once():
        cfg = NocConfig(rows=4, cols=4)
        amap = allocate_address_map(cfg)
        from simnoc.traffic import TrafficSpec, build_workload
        spec = TrafficSpec(kind="uniform_random", injected_load=0.7,
                           burst_len_range=(4, 1024), seed=123)
        wl = build_workload(spec, cfg, amap)
        sim = Simulator(cfg, amap, wl.streams)
        return sim.run(8000, warmup=800).canonical()
    assert once() == once()


def test_slice_latency_and_drain_totals():
    # enabling all-channel slices adds exactly one cycle per traversed egress
    # stage (request + response chains) and never changes drained bytes
    def run(slices, nbytes):
        cfg = NocConfig(rows=4, cols=4, register_slice=frozenset(
            {"AW", "W", "B", "AR", "R"}) if slices else frozenset(), **FAST)
        amap = allocate_address_map(cfg)
        sim = Simulator(cfg, amap, {})
        region = amap.region_of((2, 3))
        t0 = sim.cycle
        assert sim.inject((0, 0), TransferRequest((0, 0), WRITE, region.base, nbytes, 0, t0))
        done = run_to_done(sim, (0, 0))
        sim.check_conservation()
        return done - t0, sim.total_delivered_w

    hops = 2 + 3   # (0,0) -> (2,3)
    stages_on_chain = 2 * (hops + 1)
    for nbytes in (4, 256):
        lat_on, bytes_on = run(True, nbytes)
        lat_off, bytes_off = run(False, nbytes)
        assert lat_on - lat_off == stages_on_chain
        assert bytes_on == bytes_off == nbytes


def test_engine_invariant_breach_raises():
    sim, cfg, amap = make_sim()
    m = sim.masters[(0, 0)]
    m.outstanding_w = cfg.max_outstanding + 1
    m.pending.append(TransferRequest((0, 0), WRITE, 0, 4, 0, 0))
    with pytest.raises(SimulationError):
        for _ in range(5):
            sim.step()
