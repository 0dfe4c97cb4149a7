"""Figure rendering for sweep curves, pattern matrices, and link utilization."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection

from .metrics import SweepCurve, bisection_bandwidth
from .stats import SimStats
from .topology import NocConfig

GIGA = 1e9


def sweep_figure(curve: SweepCurve, config: NocConfig, path: str) -> None:
    """Accepted throughput versus offered load, saturation point marked."""
    loads = [p.load for p in curve.points]
    tputs = [p.throughput_bps / GIGA for p in curve.points]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(loads, tputs, "o-", color="tab:blue", lw=1.5)
    ax.axvline(curve.saturation_point, color="tab:red", ls="--", lw=1,
               label=f"saturation @ {curve.saturation_point:g}")
    ax.set_xlabel("offered load (fraction of per-master peak)")
    ax.set_ylabel("aggregated throughput (GB/s)")
    ax.set_title(f"{config.rows}x{config.cols} mesh, DW={config.data_width}")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)


def matrix_figure(rows: list[tuple[str, int, float, float]], config: NocConfig,
                  path: str) -> None:
    """Utilization versus burst size, one line per traffic pattern."""
    patterns: dict[str, list[tuple[int, float]]] = {}
    for pattern, burst, _tput, util in rows:
        patterns.setdefault(pattern, []).append((burst, util))
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for pattern, pts in patterns.items():
        pts.sort()
        ax.plot([b for b, _ in pts], [100 * u for _, u in pts], "o-", label=pattern)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("max DMA burst size (bytes)")
    ax.set_ylabel("NoC utilization (% of bisection)")
    ax.set_title(
        f"{config.rows}x{config.cols}, DW={config.data_width}, "
        f"bisection {bisection_bandwidth(config) / GIGA:.0f} GB/s"
    )
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)


def link_utilization_figure(stats: SimStats, config: NocConfig, path: str) -> None:
    """Mesh drawing: directed inter-XP links shaded by busiest-channel duty."""
    cycles = max(1, stats.measured_cycles)
    # (src,dst) -> max busy fraction over the five channels
    links: dict[tuple[str, str], float] = {}
    for (src, dst, _ch), busy in stats.link_busy.items():
        key = (src, dst)
        links[key] = max(links.get(key, 0.0), busy / cycles)

    def pos(label: str):
        if not label.startswith("xp("):
            return None
        r, c = label[3:-1].split(",")
        return int(c), -int(r)  # row 0 at the top

    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    cmap = plt.get_cmap("viridis")
    segs, colors = [], []
    local_util: dict[tuple[float, float], float] = {}
    for (src, dst), frac in links.items():
        a, b = pos(src), pos(dst)
        if a is None:
            continue
        if b is None:
            local_util[a] = max(local_util.get(a, 0.0), frac)
            continue
        # offset the two directions of one physical link
        dx, dy = b[0] - a[0], b[1] - a[1]
        ox, oy = -dy * 0.07, dx * 0.07
        segs.append([(a[0] + ox + dx * 0.12, a[1] + oy + dy * 0.12),
                     (b[0] + ox - dx * 0.12, b[1] + oy - dy * 0.12)])
        colors.append(cmap(frac))
    ax.add_collection(LineCollection(segs, colors=colors, linewidths=3))
    for r in range(config.rows):
        for c in range(config.cols):
            x, y = c, -r
            frac = local_util.get((x, y), 0.0)
            ax.add_patch(plt.Rectangle((x - 0.1, y - 0.1), 0.2, 0.2,
                                       facecolor=cmap(frac), edgecolor="k", lw=0.6))
            ax.annotate(f"{r},{c}", (x, y + 0.17), ha="center", fontsize=7)
    ax.set_xlim(-0.6, config.cols - 0.4)
    ax.set_ylim(-config.rows + 0.4, 0.6)
    ax.set_aspect("equal")
    ax.axis("off")
    sm = plt.cm.ScalarMappable(cmap=cmap, norm=plt.Normalize(0, 1))
    fig.colorbar(sm, ax=ax, fraction=0.045, label="link busy fraction")
    ax.set_title("per-link channel utilization (max over AW/W/B/AR/R)")
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
