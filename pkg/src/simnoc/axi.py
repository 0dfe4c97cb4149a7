"""Transaction / burst / beat model and AXI-compliant burst splitting.

A transfer is what a DMA job moves end to end; it is split into INCR bursts
that respect the 4 KiB address boundary and the beat cap (256 for AXI4).
Beats are the per-cycle payload units on the W and R channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigError

BOUNDARY_BYTES = 4096
MAX_BURST_BEATS = 256

READ = "read"
WRITE = "write"


@dataclass(frozen=True)
class TransferRequest:
    """One DMA job: a contiguous byte range moved in one direction."""

    master: tuple[int, int]
    direction: str
    base_address: int
    total_bytes: int
    id: int
    issue_cycle: int = 0

    def validate(self, data_width: int, id_width: int) -> None:
        beat = data_width // 8
        if self.total_bytes <= 0:
            raise ConfigError(f"total_bytes must be positive, got {self.total_bytes}")
        if self.base_address % beat:
            raise ConfigError(
                f"base_address 0x{self.base_address:x} not aligned to {beat}-byte beats"
            )
        if not 0 <= self.id < (1 << id_width):
            raise ConfigError(f"id {self.id} does not fit in {id_width} bits")
        if self.direction not in (READ, WRITE):
            raise ConfigError(f"direction must be read|write, got {self.direction!r}")


@dataclass(slots=True)
class Burst:
    """One AXI transaction: up to 256 contiguous beats inside a 4 KiB window."""

    start_address: int
    num_beats: int
    beat_bytes: int
    id: int
    direction: str
    transfer: TransferRequest | None = None

    @property
    def total_bytes(self) -> int:
        return self.num_beats * self.beat_bytes

    @property
    def end_address(self) -> int:
        return self.start_address + self.total_bytes


@dataclass(frozen=True)
class Beat:
    burst: Burst
    index: int

    @property
    def is_last(self) -> bool:
        return self.index == self.burst.num_beats - 1


@dataclass(slots=True)
class ChannelMessage:
    """One unit on one of the five channels.

    AW/AR messages carry the full burst header; W/R carry a beat index of
    their burst; B carries only the response token.  ``id`` is rewritten at
    every remapping hop, ``addr`` is the routing key for requests.
    """

    channel: str
    burst: Burst
    id: int
    addr: int = 0
    beat_index: int = 0
    is_last: bool = True
    error: bool = False
    arrived: int = -1  # cycle this message last entered a FIFO
    rcache: object = None  # (xp key, egress) route memo while stalled at one XP


def split_transfer(
    req: TransferRequest, data_width: int, max_beats: int = MAX_BURST_BEATS
) -> list[Burst]:
    """Split a transfer into maximal boundary- and cap-compliant bursts.

    Bursts are contiguous, address-ordered, and cover exactly
    [base, base+total_bytes).  Raises ConfigError on a misaligned base.
    """
    beat = data_width // 8
    if req.base_address % beat:
        raise ConfigError(
            f"base_address 0x{req.base_address:x} not aligned to {beat}-byte beats"
        )
    if req.total_bytes % beat:
        raise ConfigError(
            f"total_bytes {req.total_bytes} not a whole number of {beat}-byte beats"
        )
    if max_beats < 1:
        raise ConfigError("max_beats must be >= 1")

    bursts = []
    addr = req.base_address
    remaining = req.total_bytes // beat
    while remaining:
        to_boundary = (BOUNDARY_BYTES - addr % BOUNDARY_BYTES) // beat
        n = min(remaining, max_beats, to_boundary)
        bursts.append(Burst(addr, n, beat, req.id, req.direction, req))
        addr += n * beat
        remaining -= n
    return bursts


def ordering_constraint(a: Burst, b: Burst) -> bool:
    """True iff AXI requires a and b to stay ordered.

    Ordering binds transactions from the same master with the same ID in the
    same direction class; read and write orders are independent.
    """
    ta, tb = a.transfer, b.transfer
    if ta is None or tb is None:
        return False
    return ta.master == tb.master and a.id == b.id and a.direction == b.direction


def compliance_check(bursts: Iterable[Burst]) -> tuple[bool, str | None]:
    """Verify burst invariants plus contiguity of siblings.

    Returns (ok, first_violation).  Bursts from the same transfer must be
    contiguous and in address order.
    """
    prev_by_transfer: dict[int, Burst] = {}
    for i, b in enumerate(bursts):
        if not 1 <= b.num_beats <= MAX_BURST_BEATS:
            return False, f"burst {i}: num_beats {b.num_beats} outside [1, {MAX_BURST_BEATS}]"
        if b.start_address % b.beat_bytes:
            return False, f"burst {i}: start 0x{b.start_address:x} not beat-aligned"
        first_window = b.start_address // BOUNDARY_BYTES
        last_window = (b.end_address - 1) // BOUNDARY_BYTES
        if first_window != last_window:
            return False, f"burst {i}: crosses 4 KiB boundary at 0x{(first_window + 1) * BOUNDARY_BYTES:x}"
        if b.transfer is not None:
            key = id(b.transfer)
            prev = prev_by_transfer.get(key)
            if prev is not None and prev.end_address != b.start_address:
                return False, (
                    f"burst {i}: not contiguous with sibling "
                    f"(0x{prev.end_address:x} != 0x{b.start_address:x})"
                )
            prev_by_transfer[key] = b
    return True, None
