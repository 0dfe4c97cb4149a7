"""Measurement results of one simulation run."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SimStats:
    """Counters collected over the measurement window (warmup excluded).

    ``delivered_payload_bytes`` counts read payload handed to masters plus
    write payload accepted by slaves; request/response headers are overhead
    and never counted.  ``link_busy`` maps ``(src, dst, channel)`` labels to
    busy-cycle counts; the per-link ceiling of one beat per cycle bounds
    delivered bytes structurally.
    """

    measured_cycles: int = 0
    warmup_cycles: int = 0
    delivered_read_bytes: int = 0
    delivered_write_bytes: int = 0
    injected_bytes: int = 0
    completed_transfers: int = 0
    latency_samples: list[int] = field(default_factory=list)
    link_busy: dict[tuple[str, str, str], int] = field(default_factory=dict)
    drained: bool = False
    final_cycle: int = 0

    @property
    def delivered_payload_bytes(self) -> int:
        return self.delivered_read_bytes + self.delivered_write_bytes

    def bytes_per_cycle(self) -> float:
        if self.measured_cycles <= 0:
            return 0.0
        return self.delivered_payload_bytes / self.measured_cycles

    def canonical(self) -> tuple:
        """Stable value for bit-exact determinism comparisons."""
        return (
            self.measured_cycles,
            self.warmup_cycles,
            self.delivered_read_bytes,
            self.delivered_write_bytes,
            self.injected_bytes,
            self.completed_transfers,
            tuple(self.latency_samples),
            tuple(sorted(self.link_busy.items())),
            self.drained,
            self.final_cycle,
        )
