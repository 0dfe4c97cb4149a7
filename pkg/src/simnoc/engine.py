"""Cycle-driven simulation core.

One ``step`` models a clock edge in four phases with a fixed deterministic
order:

  A. occupied egress registers (slices) move across their link into the
     downstream ingress FIFO or endpoint inbox;
  B. slave endpoints consume request messages and emit responses;
  C. master endpoints consume responses, advance their DMA job state, and
     emit requests;
  D. every crosspoint arbitrates, per channel and per egress, one message
     from its ingress FIFOs (round-robin, grant-then-advance).

A message entering a FIFO is stamped with the cycle and becomes visible to
arbitration (and to endpoints) the following cycle, so each FIFO stage and
each enabled register slice costs exactly one cycle.

Endpoint model
--------------
Each master is a DMA engine executing one transfer (job) at a time.  A job is
split into AXI bursts; bursts pipeline up to the configured MOT per
direction.  The engine has a single internal burst buffer: the network side
drains/fills it at link rate (one beat per cycle) while the local side moves
one beat per ``dma_fill_cycles`` cycles, so between consecutive bursts of a
job the network stream pauses for the refill.  ``dma_setup_cycles`` models
per-job descriptor handling.  Slaves are idealized memories: fixed service
latency, one beat per cycle per channel, and a short turnaround gap between
bursts.

Write data never interleaves on a link: each W egress holds a queue of burst
grants made by the corresponding AW egress and serves beats strictly in that
order.  Responses retrace the request path using the per-hop ID-remap
entries, which double as return-route records.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Callable, Iterable, Iterator, Mapping

from .axi import READ, WRITE, Burst, ChannelMessage, TransferRequest, split_transfer
from .errors import SimulationError
from .stats import SimStats
from .topology import (
    AddressMap,
    Coord,
    Mesh,
    NocConfig,
    Port,
    RoutingTable,
    allocate_address_map,
    build_mesh,
    generate_routing_tables,
)

# Integer port ids used throughout the hot path. INJ is the virtual ingress
# carrying crosspoint-generated error responses.
P_N, P_E, P_S, P_W, P_L, P_INJ = range(6)
NPORTS = 6

_PORT_INT = {Port.NORTH: P_N, Port.EAST: P_E, Port.SOUTH: P_S, Port.WEST: P_W, Port.LOCAL: P_L}
_INT_PORT = {v: k for k, v in _PORT_INT.items()}

CH_AW, CH_W, CH_B, CH_AR, CH_R = range(5)
CH_NAMES = ("AW", "W", "B", "AR", "R")


class RemapEntry:
    __slots__ = ("src_port", "orig_id", "out_id", "count")

    def __init__(self, src_port: int, orig_id: int, out_id: int):
        self.src_port = src_port
        self.orig_id = orig_id
        self.out_id = out_id
        self.count = 0


class RemapTable:
    """Per-egress, per-direction ID translation with in-flight counts.

    A live (ingress, original id) pair keeps its outbound id until the last
    response passes back; distinct concurrent pairs get distinct outbound
    ids; a full table back-pressures the requester.
    """

    __slots__ = ("fwd", "rev", "free")

    def __init__(self, id_width: int):
        self.fwd: dict[tuple[int, int], RemapEntry] = {}
        self.rev: dict[int, RemapEntry] = {}
        self.free = list(range(1 << id_width))
        heapq.heapify(self.free)

    def can_map(self, src_port: int, orig_id: int) -> bool:
        return (src_port, orig_id) in self.fwd or bool(self.free)

    def map_request(self, src_port: int, orig_id: int) -> int:
        entry = self.fwd.get((src_port, orig_id))
        if entry is None:
            out_id = heapq.heappop(self.free)
            entry = RemapEntry(src_port, orig_id, out_id)
            self.fwd[(src_port, orig_id)] = entry
            self.rev[out_id] = entry
        entry.count += 1
        return entry.out_id

    def response_entry(self, out_id: int) -> RemapEntry | None:
        return self.rev.get(out_id)

    def release(self, entry: RemapEntry) -> None:
        entry.count -= 1
        if entry.count == 0:
            del self.fwd[(entry.src_port, entry.orig_id)]
            del self.rev[entry.out_id]
            heapq.heappush(self.free, entry.out_id)


class Egress:
    """One egress port of one channel: arbiter state, optional slice, link."""

    __slots__ = (
        "channel", "port", "slice_on", "slice_reg", "rr", "grants", "busy",
        "tokens", "lock_burst", "lock_port", "lock_entry", "inject",
        "tgt_fifo", "tgt_chan", "tgt_depth", "src_label", "dst_label",
    )

    def __init__(self, channel: int, port: int, slice_on: bool):
        self.channel = channel
        self.port = port
        self.slice_on = slice_on
        self.slice_reg: ChannelMessage | None = None
        self.rr = 0
        self.grants = [0] * NPORTS
        self.busy = 0
        self.tokens: deque = deque()      # W: (burst, src_port) in AW-grant order
        self.lock_burst: Burst | None = None   # R: burst owning this egress
        self.lock_port = -1
        self.lock_entry: RemapEntry | None = None
        self.inject: deque = deque()      # XP-generated error responses (B/R)
        self.tgt_fifo: deque | None = None
        self.tgt_chan: "XpChan | None" = None
        self.tgt_depth = 0
        self.src_label = ""
        self.dst_label = ""


class XpChan:
    """One channel's FIFOs and egresses at one crosspoint."""

    __slots__ = ("xp", "ingress", "egress", "count")

    def __init__(self, xp: "Crosspoint"):
        self.xp = xp
        self.ingress: list[deque | None] = [None] * 5
        self.egress: list[Egress | None] = [None] * 5
        self.count = 0


class Crosspoint:
    __slots__ = ("coord", "table", "chans", "remap_w", "remap_r",
                 "w_sink", "sink_ports", "count")

    def __init__(self, coord: Coord, table: RoutingTable, id_width: int,
                 slice_set: frozenset):
        self.coord = coord
        self.table = table
        self.count = 0
        self.chans = [XpChan(self) for _ in range(5)]
        self.remap_w: list[RemapTable | None] = [None] * 5
        self.remap_r: list[RemapTable | None] = [None] * 5
        self.w_sink: dict[int, list] = {}  # id(burst) -> [beats left to discard, port]
        self.sink_ports: list[int] = []

    def route_request(self, msg: ChannelMessage) -> Port | None:
        """Table egress for a request message; None means decode error."""
        return self.table.route(msg.addr)


class Master:
    """DMA endpoint: serial jobs, per-direction MOT over in-flight bursts."""

    __slots__ = (
        "sim", "coord", "cfg", "stream", "next_rec", "pending",
        "inbox_b", "inbox_r",
        "job", "bursts", "burst_idx", "resp_left", "issue_gate", "done_gate", "accept_cycle",
        "emit_burst", "emit_idx", "aw_out", "ar_out",
        "outstanding_r", "outstanding_w",
        "chan_aw", "chan_w", "chan_ar", "depth",
        "completed", "label",
    )

    def __init__(self, sim: "Simulator", coord: Coord):
        self.sim = sim
        self.coord = coord
        self.cfg = sim.config
        self.stream: Iterator[TransferRequest] | None = None
        self.next_rec: TransferRequest | None = None
        self.pending: deque[TransferRequest] = deque()
        self.inbox_b: deque = deque()
        self.inbox_r: deque = deque()
        self.job: TransferRequest | None = None
        self.bursts: list[Burst] = []
        self.burst_idx = 0
        self.resp_left = 0
        self.issue_gate = 0
        self.done_gate = 0
        self.accept_cycle = 0
        self.emit_burst: Burst | None = None
        self.emit_idx = 0
        self.aw_out: ChannelMessage | None = None
        self.ar_out: ChannelMessage | None = None
        self.outstanding_r = 0
        self.outstanding_w = 0
        xp = sim.xps[coord]
        self.chan_aw = xp.chans[CH_AW]
        self.chan_w = xp.chans[CH_W]
        self.chan_ar = xp.chans[CH_AR]
        self.depth = sim.config.fifo_depth
        self.completed = 0
        self.label = f"master({coord[0]},{coord[1]})"

    # -- acceptance gate ---------------------------------------------------

    def can_accept(self, direction: str) -> bool:
        out = self.outstanding_r if direction == READ else self.outstanding_w
        return self.job is None and out < self.cfg.max_outstanding

    def inject(self, req: TransferRequest) -> bool:
        """Spec-level accept/defer gate. Accepted jobs start immediately."""
        if not self.can_accept(req.direction):
            return False
        self._start_job(req, self.sim.cycle)
        return True

    def _start_job(self, req: TransferRequest, now: int) -> None:
        req.validate(self.cfg.data_width, self.cfg.id_width)
        self.job = req
        self.bursts = split_transfer(req, self.cfg.data_width, self.sim.max_burst_beats)
        self.burst_idx = 0
        self.resp_left = len(self.bursts)
        self.done_gate = 0
        self.accept_cycle = now
        gate = now + self.cfg.dma_setup_cycles
        if req.direction == WRITE:
            gate += self.cfg.dma_fill_cycles * self.bursts[0].num_beats
        self.issue_gate = gate

    # -- per-cycle processing ----------------------------------------------

    def process(self, now: int) -> None:
        cfg = self.cfg
        sim = self.sim

        # Arrivals from the traffic stream.
        nxt = self.next_rec
        if nxt is not None and nxt.issue_cycle <= now:
            while nxt is not None and nxt.issue_cycle <= now:
                self.pending.append(nxt)
                nxt = next(self.stream, None)
            self.next_rec = nxt

        if self.job is None and not self.pending:
            return

        # Write responses: free bookkeeping, drain fully.
        while self.inbox_b and self.inbox_b[0].arrived < now:
            msg = self.inbox_b.popleft()
            sim.in_network -= 1
            if msg.id != msg.burst.id:
                raise SimulationError(
                    f"{self.label}: B returned with id {msg.id}, issued {msg.burst.id}")
            self.outstanding_w -= 1
            self.resp_left -= 1
            self._maybe_complete(now)

        # Read data: the DMA datapath retires at most one beat per cycle.
        if self.inbox_r and self.inbox_r[0].arrived < now:
            msg = self.inbox_r.popleft()
            sim.in_network -= 1
            if msg.id != msg.burst.id:
                raise SimulationError(
                    f"{self.label}: R returned with id {msg.id}, issued {msg.burst.id}")
            if not msg.error:
                bb = msg.burst.beat_bytes
                sim.total_delivered_r += bb
                if sim.meas_on:
                    sim.meas_delivered_r += bb
            if msg.is_last:
                self.outstanding_r -= 1
                self.resp_left -= 1
                # the burst buffer flushes to local memory before it can be reused
                flush = now + cfg.dma_fill_cycles * msg.burst.num_beats
                self.issue_gate = max(self.issue_gate, flush)
                self.done_gate = max(self.done_gate, flush)
                self._maybe_complete(now)

        if self.job is not None and self.resp_left == 0:
            self._maybe_complete(now)

        # Continue streaming W beats of the current burst.
        if self.emit_burst is not None:
            q = self.chan_w.ingress[P_L]
            if len(q) < self.depth:
                b = self.emit_burst
                i = self.emit_idx
                last = i == b.num_beats - 1
                msg = ChannelMessage("W", b, b.id, 0, i, last)
                msg.arrived = now
                q.append(msg)
                self.chan_w.count += 1
                self.chan_w.xp.count += 1
                sim.in_network += 1
                sim.total_injected_w += b.beat_bytes
                if sim.meas_on:
                    sim.meas_injected += b.beat_bytes
                if last:
                    self.emit_burst = None
                    if self.burst_idx < len(self.bursts):
                        self.issue_gate = now + cfg.dma_fill_cycles * self.bursts[self.burst_idx].num_beats
                else:
                    self.emit_idx = i + 1

        # Retry a request header that found its FIFO full.  W beats start only
        # once their AW is actually on the link.
        if self.aw_out is not None and self._try_emit(self.chan_aw, self.aw_out, now):
            self.emit_burst = self.aw_out.burst
            self.emit_idx = 0
            self.aw_out = None
        if self.ar_out is not None and self._try_emit(self.chan_ar, self.ar_out, now):
            self.ar_out = None

        # Start the next pending job.
        if self.job is None and self.pending:
            req = self.pending[0]
            if self.can_accept(req.direction):
                self.pending.popleft()
                self._start_job(req, now)

        # Issue the next burst of the active job.
        if (
            self.job is not None
            and self.burst_idx < len(self.bursts)
            and now >= self.issue_gate
            and self.aw_out is None
            and self.ar_out is None
            and self.emit_burst is None
        ):
            burst = self.bursts[self.burst_idx]
            if self.job.direction == WRITE:
                if self.outstanding_w < cfg.max_outstanding:
                    msg = ChannelMessage("AW", burst, burst.id, burst.start_address,
                                         0, True)
                    self.burst_idx += 1
                    self.outstanding_w += 1
                    if self._try_emit(self.chan_aw, msg, now):
                        self.emit_burst = burst
                        self.emit_idx = 0
                    else:
                        self.aw_out = msg
            else:
                # single internal buffer: one read burst in flight at a time
                if self.outstanding_r == 0:
                    msg = ChannelMessage("AR", burst, burst.id, burst.start_address,
                                         0, True)
                    self.burst_idx += 1
                    self.outstanding_r += 1
                    if not self._try_emit(self.chan_ar, msg, now):
                        self.ar_out = msg

        if self.outstanding_r > cfg.max_outstanding or self.outstanding_w > cfg.max_outstanding:
            raise SimulationError(f"{self.label}: MOT exceeded")

    def _try_emit(self, chan: XpChan, msg: ChannelMessage, now: int) -> bool:
        q = chan.ingress[P_L]
        if len(q) >= self.depth:
            return False
        msg.arrived = now
        q.append(msg)
        chan.count += 1
        chan.xp.count += 1
        self.sim.in_network += 1
        return True

    def _maybe_complete(self, now: int) -> None:
        if (self.job is not None and self.resp_left == 0
                and self.burst_idx == len(self.bursts) and now >= self.done_gate):
            sim = self.sim
            self.completed += 1
            if self.job.issue_cycle >= sim.warmup_abs and now < sim.measure_end_abs:
                sim.latency_samples.append(now - self.job.issue_cycle)
                sim.meas_completed += 1
            if sim.completion_log is not None:
                sim.completion_log.append(
                    (self.coord, self.job.id, self.job.direction,
                     self.job.issue_cycle, now))
            self.job = None
            self.bursts = []

    def idle(self) -> bool:
        return (self.job is None and not self.pending and self.next_rec is None
                and self.aw_out is None and self.ar_out is None)


class Slave:
    """Memory endpoint: fixed service latency, one beat per cycle per channel."""

    __slots__ = (
        "sim", "coord", "cfg", "inbox_aw", "inbox_w", "inbox_ar",
        "wrecs", "b_queue", "r_queue", "r_burst", "r_id", "r_idx",
        "w_resume", "r_resume", "chan_b", "chan_r", "depth", "label",
    )

    def __init__(self, sim: "Simulator", coord: Coord):
        self.sim = sim
        self.coord = coord
        self.cfg = sim.config
        self.inbox_aw: deque = deque()
        self.inbox_w: deque = deque()
        self.inbox_ar: deque = deque()
        self.wrecs: dict[int, list] = {}   # id(burst) -> [beats_left, resp_id]
        self.b_queue: deque = deque()      # (ready_cycle, msg)
        self.r_queue: deque = deque()      # (ready_cycle, burst, resp_id)
        self.r_burst: Burst | None = None
        self.r_id = 0
        self.r_idx = 0
        self.w_resume = 0
        self.r_resume = 0
        xp = sim.xps[coord]
        self.chan_b = xp.chans[CH_B]
        self.chan_r = xp.chans[CH_R]
        self.depth = sim.config.fifo_depth
        self.label = f"slave({coord[0]},{coord[1]})"

    def process(self, now: int) -> None:
        if not (self.inbox_aw or self.inbox_w or self.inbox_ar
                or self.b_queue or self.r_queue or self.r_burst is not None):
            return
        sim = self.sim
        cfg = self.cfg

        if self.inbox_aw and self.inbox_aw[0].arrived < now:
            msg = self.inbox_aw.popleft()
            sim.in_network -= 1
            self.wrecs[id(msg.burst)] = [msg.burst.num_beats, msg.id]

        if now >= self.w_resume and self.inbox_w and self.inbox_w[0].arrived < now:
            msg = self.inbox_w.popleft()
            sim.in_network -= 1
            rec = self.wrecs.get(id(msg.burst))
            if rec is None:
                raise SimulationError(f"{self.label}: W beat before its AW")
            rec[0] -= 1
            bb = msg.burst.beat_bytes
            sim.total_delivered_w += bb
            if sim.meas_on:
                sim.meas_delivered_w += bb
            if msg.is_last:
                if rec[0]:
                    raise SimulationError(f"{self.label}: early last beat")
                resp = ChannelMessage("B", msg.burst, rec[1])
                self.b_queue.append((now + cfg.slave_latency, resp))
                del self.wrecs[id(msg.burst)]
                self.w_resume = now + 1 + cfg.slave_burst_gap

        if self.inbox_ar and self.inbox_ar[0].arrived < now:
            msg = self.inbox_ar.popleft()
            sim.in_network -= 1
            self.r_queue.append((now + cfg.slave_latency, msg.burst, msg.id))

        # Emit one B response.
        if self.b_queue and self.b_queue[0][0] <= now:
            q = self.chan_b.ingress[P_L]
            if len(q) < self.depth:
                _, msg = self.b_queue.popleft()
                msg.arrived = now
                q.append(msg)
                self.chan_b.count += 1
                self.chan_b.xp.count += 1
                sim.in_network += 1

        # Emit one R beat of the burst being served.
        if self.r_burst is None and now >= self.r_resume and self.r_queue and self.r_queue[0][0] <= now:
            _, self.r_burst, self.r_id = self.r_queue.popleft()
            self.r_idx = 0
        if self.r_burst is not None:
            q = self.chan_r.ingress[P_L]
            if len(q) < self.depth:
                b = self.r_burst
                i = self.r_idx
                last = i == b.num_beats - 1
                msg = ChannelMessage("R", b, self.r_id, 0, i, last)
                msg.arrived = now
                q.append(msg)
                self.chan_r.count += 1
                self.chan_r.xp.count += 1
                sim.in_network += 1
                sim.total_injected_r += b.beat_bytes
                if sim.meas_on:
                    sim.meas_injected += b.beat_bytes
                if last:
                    self.r_burst = None
                    self.r_resume = now + 1 + cfg.slave_burst_gap
                else:
                    self.r_idx = i + 1

    def idle(self) -> bool:
        return not (self.wrecs or self.b_queue or self.r_queue or self.r_burst)


class Simulator:
    """One deterministic simulation instance over one mesh."""

    def __init__(
        self,
        config: NocConfig,
        addr_map: AddressMap | None = None,
        traffic: Mapping[Coord, Iterable[TransferRequest]] | None = None,
        max_burst_beats: int = 256,
        event_log: Callable | None = None,
    ):
        self.config = config
        self.mesh: Mesh = build_mesh(config)
        self.addr_map = addr_map if addr_map is not None else allocate_address_map(config)
        self.tables = generate_routing_tables(self.mesh, self.addr_map)
        self.max_burst_beats = max_burst_beats
        self.event_log = event_log
        self._w_token_depth = config.w_token_depth

        self.cycle = 0
        self.warmup_abs = 0
        self.measure_end_abs = 1 << 62
        self.meas_on = False
        self.in_network = 0
        self.total_injected_w = 0
        self.total_injected_r = 0
        self.total_delivered_w = 0
        self.total_delivered_r = 0
        self.total_sunk_w = 0
        self.meas_delivered_w = 0
        self.meas_delivered_r = 0
        self.meas_injected = 0
        self.meas_completed = 0
        self.latency_samples: list[int] = []
        self.completion_log: list | None = None
        self.hot_slices: list[Egress] = []

        self.xps: dict[Coord, Crosspoint] = {}
        for coord in self.mesh.coords:
            self.xps[coord] = Crosspoint(coord, self.tables[coord],
                                         config.id_width, config.register_slice)
        self._wire()

        self.masters: dict[Coord, Master] = {}
        for coord in config.masters:
            self.masters[coord] = Master(self, coord)
        self.slaves: dict[Coord, Slave] = {}
        for coord in config.slaves:
            self.slaves[coord] = Slave(self, coord)
        self._wire_endpoints()
        self._master_list = list(self.masters.values())
        self._slave_list = list(self.slaves.values())
        self._xp_list = list(self.xps.values())

        if traffic:
            self.attach_traffic(traffic)

    # -- construction --------------------------------------------------------

    def _wire(self) -> None:
        cfg = self.config
        slice_set = cfg.register_slice
        for coord, xp in self.xps.items():
            ports = [_PORT_INT[p] for p in self.mesh.ports(coord)]
            for ch in range(5):
                chan = xp.chans[ch]
                sliced = CH_NAMES[ch] in slice_set
                for p in ports:
                    chan.ingress[p] = deque()
                    e = Egress(ch, p, sliced)
                    e.src_label = f"xp({coord[0]},{coord[1]})"
                    chan.egress[p] = e
            for p in ports:
                if p != P_L:
                    xp.remap_w[p] = RemapTable(cfg.id_width)
                    xp.remap_r[p] = RemapTable(cfg.id_width)
            # local egress remaps requests entering the slave
            xp.remap_w[P_L] = RemapTable(cfg.id_width)
            xp.remap_r[P_L] = RemapTable(cfg.id_width)

        # Mesh links: egress at port p feeds the neighbor ingress at opposite(p).
        for coord, xp in self.xps.items():
            for port in self.mesh.mesh_ports(coord):
                p = _PORT_INT[port]
                nbr = self.mesh.neighbor(coord, port)
                nxp = self.xps[nbr]
                q_port = _PORT_INT[port.opposite()]
                for ch in range(5):
                    e = xp.chans[ch].egress[p]
                    nchan = nxp.chans[ch]
                    e.tgt_fifo = nchan.ingress[q_port]
                    e.tgt_chan = nchan
                    e.tgt_depth = self.config.fifo_depth
                    e.dst_label = f"xp({nbr[0]},{nbr[1]})"

    def _wire_endpoints(self) -> None:
        depth = self.config.fifo_depth
        for coord, m in self.masters.items():
            xp = self.xps[coord]
            for ch, fifo in ((CH_B, m.inbox_b), (CH_R, m.inbox_r)):
                e = xp.chans[ch].egress[P_L]
                e.tgt_fifo = fifo
                e.tgt_depth = depth
                e.dst_label = m.label
        for coord, s in self.slaves.items():
            xp = self.xps[coord]
            for ch, fifo in ((CH_AW, s.inbox_aw), (CH_W, s.inbox_w), (CH_AR, s.inbox_ar)):
                e = xp.chans[ch].egress[P_L]
                e.tgt_fifo = fifo
                e.tgt_depth = depth
                e.dst_label = s.label

    def attach_traffic(self, traffic: Mapping[Coord, Iterable[TransferRequest]]) -> None:
        for coord, stream in traffic.items():
            m = self.masters.get(coord)
            if m is None:
                raise SimulationError(f"traffic names absent master {coord}")
            m.stream = iter(stream)
            m.next_rec = next(m.stream, None)
        for m in self._master_list:
            if m.stream is None:
                m.stream = iter(())
                m.next_rec = None

    def inject(self, coord: Coord, req: TransferRequest) -> bool:
        """Accept or defer a transfer at a master (spec-level gate)."""
        return self.masters[coord].inject(req)

    # -- per-cycle phases ------------------------------------------------------

    def step(self) -> None:
        now = self.cycle
        self.meas_on = self.warmup_abs <= now < self.measure_end_abs
        self._drain_slices(now)
        for s in self._slave_list:
            s.process(now)
        for m in self._master_list:
            m.process(now)
        warm = self.meas_on
        for xp in self._xp_list:
            if xp.count:
                self._grant_xp(xp, now, warm)
        self.cycle = now + 1

    def _drain_slices(self, now: int) -> None:
        hot = self.hot_slices
        if not hot:
            return
        keep = []
        warm = self.meas_on
        log = self.event_log
        for e in hot:
            msg = e.slice_reg
            fifo = e.tgt_fifo
            if len(fifo) < e.tgt_depth:
                msg.arrived = now
                fifo.append(msg)
                tc = e.tgt_chan
                if tc is not None:
                    tc.count += 1
                    tc.xp.count += 1
                e.slice_reg = None
                if warm:
                    e.busy += 1
                if log is not None:
                    log(now, CH_NAMES[e.channel], e.src_label, e.dst_label,
                        msg.id, msg.beat_index, msg.is_last)
            else:
                keep.append(e)
        self.hot_slices = keep

    def _push_out(self, e: Egress, msg: ChannelMessage, now: int, warm: bool) -> None:
        """Move a granted message into the slice or straight across the link."""
        if e.slice_on:
            e.slice_reg = msg
            self.hot_slices.append(e)
            return
        msg.arrived = now
        e.tgt_fifo.append(msg)
        tc = e.tgt_chan
        if tc is not None:
            tc.count += 1
            tc.xp.count += 1
        if warm:
            e.busy += 1
        if self.event_log is not None:
            self.event_log(now, CH_NAMES[e.channel], e.src_label, e.dst_label,
                           msg.id, msg.beat_index, msg.is_last)

    def _egress_free(self, e: Egress) -> bool:
        if e.slice_on:
            return e.slice_reg is None
        return len(e.tgt_fifo) < e.tgt_depth

    # -- arbitration -----------------------------------------------------------

    def _grant_xp(self, xp: Crosspoint, now: int, warm: bool) -> None:
        chans = xp.chans
        if chans[CH_AW].count:
            self._grant_requests(xp, CH_AW, now, warm)
        if chans[CH_W].count or xp.sink_ports:
            self._grant_w(xp, now, warm)
        if chans[CH_AR].count:
            self._grant_requests(xp, CH_AR, now, warm)
        if chans[CH_B].count:
            self._grant_responses(xp, CH_B, now, warm)
        if chans[CH_R].count:
            self._grant_responses(xp, CH_R, now, warm)

    def _grant_requests(self, xp: Crosspoint, ch: int, now: int, warm: bool) -> None:
        chan = xp.chans[ch]
        ingress = chan.ingress
        cand: dict[int, tuple[int, int, ChannelMessage]] = {}
        for p in range(5):
            q = ingress[p]
            if not q:
                continue
            msg = q[0]
            if msg.arrived >= now:
                continue
            rc = msg.rcache
            if rc is not None and rc[0] is xp:
                eport = rc[1]
            else:
                port = xp.table.route(msg.addr)
                if port is None:
                    self._decode_error(xp, ch, p, msg, now)
                    continue
                eport = _PORT_INT[port]
                msg.rcache = (xp, eport)
            table = xp.remap_w[eport] if ch == CH_AW else xp.remap_r[eport]
            if not table.can_map(p, msg.id):
                continue
            if ch == CH_AW and len(xp.chans[CH_W].egress[eport].tokens) >= self._w_token_depth:
                continue  # W path busy: hold the AW handshake back
            e = chan.egress[eport]
            rank = (p - e.rr) % NPORTS
            best = cand.get(eport)
            if best is None or rank < best[0]:
                cand[eport] = (rank, p, msg)
        for eport, (_, p, msg) in cand.items():
            e = chan.egress[eport]
            if not self._egress_free(e):
                continue
            q = ingress[p]
            q.popleft()
            chan.count -= 1
            xp.count -= 1
            table = xp.remap_w[eport] if ch == CH_AW else xp.remap_r[eport]
            msg.id = table.map_request(p, msg.id)
            msg.rcache = None
            if ch == CH_AW:
                xp.chans[CH_W].egress[eport].tokens.append((msg.burst, p))
            e.grants[p] += 1
            e.rr = (p + 1) % NPORTS
            self._push_out(e, msg, now, warm)

    def _grant_w(self, xp: Crosspoint, now: int, warm: bool) -> None:
        chan = xp.chans[CH_W]
        popped = None
        if xp.sink_ports:
            popped = self._drain_sinks(xp, chan, now)
            if chan.count == 0:
                return
        ingress = chan.ingress
        for e in chan.egress:
            if e is None or not e.tokens:
                continue
            burst, p = e.tokens[0]
            if popped is not None and p in popped:
                continue
            q = ingress[p]
            if not q:
                continue
            msg = q[0]
            if msg.arrived >= now or msg.burst is not burst:
                continue
            if not self._egress_free(e):
                continue
            q.popleft()
            chan.count -= 1
            xp.count -= 1
            if msg.is_last:
                e.tokens.popleft()
            e.grants[p] += 1
            e.rr = (p + 1) % NPORTS
            self._push_out(e, msg, now, warm)

    def _drain_sinks(self, xp: Crosspoint, chan: XpChan, now: int) -> set[int]:
        """Discard W beats of bursts whose AW hit a decode error here."""
        popped: set[int] = set()
        for p in list(xp.sink_ports):
            q = chan.ingress[p]
            if not q:
                continue
            msg = q[0]
            key = id(msg.burst)
            rec = xp.w_sink.get(key)
            if rec is None or msg.arrived >= now:
                continue
            q.popleft()
            popped.add(p)
            chan.count -= 1
            xp.count -= 1
            self.in_network -= 1
            self.total_sunk_w += msg.burst.beat_bytes
            rec[0] -= 1
            if rec[0] == 0 or msg.is_last:
                del xp.w_sink[key]
                if not any(r[1] == p for r in xp.w_sink.values()):
                    xp.sink_ports.remove(p)
        return popped

    def _decode_error(self, xp: Crosspoint, ch: int, p: int, msg: ChannelMessage,
                      now: int) -> None:
        """Unmapped request address: consume it and answer with an error response."""
        chan = xp.chans[ch]
        chan.ingress[p].popleft()
        chan.count -= 1
        xp.count -= 1
        self.in_network -= 1
        if ch == CH_AW:
            xp.w_sink[id(msg.burst)] = [msg.burst.num_beats, p]
            if p not in xp.sink_ports:
                xp.sink_ports.append(p)
            resp = ChannelMessage("B", msg.burst, msg.id, error=True)
            resp_ch = CH_B
        else:
            resp = ChannelMessage("R", msg.burst, msg.id, 0,
                                  msg.burst.num_beats - 1, True, error=True)
            resp_ch = CH_R
        resp.arrived = now
        rchan = xp.chans[resp_ch]
        e = rchan.egress[p]
        e.inject.append(resp)
        rchan.count += 1
        xp.count += 1
        self.in_network += 1

    def _grant_responses(self, xp: Crosspoint, ch: int, now: int, warm: bool) -> None:
        chan = xp.chans[ch]
        ingress = chan.ingress
        egress = chan.egress
        remap = xp.remap_w if ch == CH_B else xp.remap_r
        is_r = ch == CH_R

        # Locked R egresses stream their burst to completion.
        popped: set[int] | None = None
        if is_r:
            for e in egress:
                if e is None or e.lock_burst is None:
                    continue
                p = e.lock_port
                q = e.inject if p == P_INJ else ingress[p]
                if not q:
                    continue
                msg = q[0]
                if msg.burst is not e.lock_burst or msg.arrived >= now:
                    continue
                if not self._egress_free(e):
                    continue
                q.popleft()
                if popped is None:
                    popped = {p}
                else:
                    popped.add(p)
                chan.count -= 1
                xp.count -= 1
                entry = e.lock_entry
                if entry is not None:
                    msg.id = entry.orig_id
                if msg.is_last:
                    if entry is not None:
                        remap[p].release(entry)
                    e.lock_burst = None
                    e.lock_entry = None
                e.grants[p] += 1
                self._push_out(e, msg, now, warm)

        cand: dict[int, tuple[int, int, ChannelMessage, RemapEntry | None]] = {}
        for p in range(5):
            if popped is not None and p in popped:
                continue
            q = ingress[p]
            if not q:
                continue
            msg = q[0]
            if msg.arrived >= now:
                continue
            table = remap[p]
            entry = table.rev.get(msg.id) if table is not None else None
            if entry is None:
                raise SimulationError(
                    f"xp{xp.coord}: {CH_NAMES[ch]} response id {msg.id} on port {p} "
                    "has no remap entry"
                )
            eport = entry.src_port
            e = egress[eport]
            if is_r and e.lock_burst is not None:
                continue
            rank = (p - e.rr) % NPORTS
            best = cand.get(eport)
            if best is None or rank < best[0]:
                cand[eport] = (rank, p, msg, entry)
        # XP-generated error responses compete as the virtual INJ ingress.
        for eport_i, e in enumerate(egress):
            if e is None or not e.inject:
                continue
            msg = e.inject[0]
            if msg.arrived >= now:
                continue
            if is_r and e.lock_burst is not None:
                continue
            rank = (P_INJ - e.rr) % NPORTS
            best = cand.get(eport_i)
            if best is None or rank < best[0]:
                cand[eport_i] = (rank, P_INJ, msg, None)

        for eport, (_, p, msg, entry) in cand.items():
            e = egress[eport]
            if (is_r and e.lock_burst is not None) or not self._egress_free(e):
                continue
            q = e.inject if p == P_INJ else ingress[p]
            q.popleft()
            chan.count -= 1
            xp.count -= 1
            if entry is not None:
                msg.id = entry.orig_id
            if is_r and not msg.is_last:
                e.lock_burst = msg.burst
                e.lock_port = p
                e.lock_entry = entry
            elif entry is not None:
                remap[p].release(entry)
            e.grants[p] += 1
            e.rr = (p + 1) % NPORTS
            self._push_out(e, msg, now, warm)

    # -- runs -------------------------------------------------------------------

    def run(self, cycles: int, warmup: int = 0) -> SimStats:
        """Warmup then a fixed measurement window of ``cycles`` cycles."""
        self.warmup_abs = self.cycle + warmup
        self.measure_end_abs = 1 << 62
        end = self.cycle + warmup + cycles
        while self.cycle < end:
            self.step()
        return self.snapshot()

    def run_to_drain(self, warmup: int = 0, measure: int | None = None,
                     max_cycles: int = 50_000_000) -> SimStats:
        """Run until all traffic has been injected, delivered, and responded.

        ``measure`` caps the measurement window; the run itself always
        continues to the drain point.
        """
        self.warmup_abs = self.cycle + warmup
        self.measure_end_abs = (1 << 62) if measure is None else self.warmup_abs + measure
        end = self.cycle + max_cycles
        while self.cycle < end:
            self.step()
            if self.in_network == 0 and self.drained():
                break
        return self.snapshot(drained=self.in_network == 0 and self.drained())

    def drained(self) -> bool:
        return (all(m.idle() for m in self._master_list)
                and all(s.idle() for s in self._slave_list))

    def snapshot(self, drained: bool = False) -> SimStats:
        stats = SimStats(
            measured_cycles=min(self.cycle, self.measure_end_abs) - self.warmup_abs,
            warmup_cycles=self.warmup_abs,
            delivered_read_bytes=self.meas_delivered_r,
            delivered_write_bytes=self.meas_delivered_w,
            injected_bytes=self.meas_injected,
            completed_transfers=self.meas_completed,
            latency_samples=list(self.latency_samples),
            drained=drained,
            final_cycle=self.cycle,
        )
        for xp in self._xp_list:
            for ch in range(5):
                for e in xp.chans[ch].egress:
                    if e is not None and e.busy:
                        stats.link_busy[(e.src_label, e.dst_label, CH_NAMES[ch])] = e.busy
        return stats

    # -- invariants ---------------------------------------------------------------

    def resident_bytes(self) -> tuple[int, int]:
        """Payload bytes currently inside the network (write, read)."""
        res_w = 0
        res_r = 0

        def payload(msg: ChannelMessage) -> int:
            if msg.error:
                return 0
            return msg.burst.beat_bytes

        for xp in self._xp_list:
            for ch, acc in ((CH_W, "w"), (CH_R, "r")):
                chan = xp.chans[ch]
                total = 0
                for q in chan.ingress:
                    if q:
                        total += sum(payload(m) for m in q)
                for e in chan.egress:
                    if e is None:
                        continue
                    if e.slice_reg is not None:
                        total += payload(e.slice_reg)
                    total += sum(payload(m) for m in e.inject)
                if acc == "w":
                    res_w += total
                else:
                    res_r += total
        for s in self._slave_list:
            res_w += sum(payload(m) for m in s.inbox_w)
        for m in self._master_list:
            res_r += sum(payload(x) for x in m.inbox_r)
        return res_w, res_r

    def check_conservation(self) -> None:
        res_w, res_r = self.resident_bytes()
        if self.total_injected_w != self.total_delivered_w + self.total_sunk_w + res_w:
            raise SimulationError(
                f"write byte conservation broken: injected {self.total_injected_w} != "
                f"delivered {self.total_delivered_w} + sunk {self.total_sunk_w} "
                f"+ resident {res_w}"
            )
        if self.total_injected_r != self.total_delivered_r + res_r:
            raise SimulationError(
                f"read byte conservation broken: injected {self.total_injected_r} != "
                f"delivered {self.total_delivered_r} + resident {res_r}"
            )
