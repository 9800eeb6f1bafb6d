"""Matplotlib renderings of the report data, written next to the CSV/JSON."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .costs import ComparisonReport
from .fabric import Timeline
from .partitioning import WorkloadReport

_KIND_COLORS = {
    "compute": "#4878d0",
    "send_intra": "#6acc64",
    "send_inter": "#d65f5f",
    "recv": "#b8b8b8",
    "buffer_swap": "#222222",
}


def save_timeline_figure(timeline: Timeline, path: str) -> None:
    """Gantt-style lanes: one row per device, bars colored by event kind."""
    devices = sorted({e.device for e in timeline.events})
    fig, ax = plt.subplots(figsize=(10, 0.6 * len(devices) + 1.5))
    for e in timeline.events:
        if e.kind == "recv":
            continue  # mirrors the matching send
        y = devices.index(e.device)
        if e.kind == "buffer_swap":
            ax.plot([e.start], [y], marker="|", color=_KIND_COLORS[e.kind], markersize=14)
            continue
        ax.barh(
            y,
            e.end - e.start,
            left=e.start,
            height=0.6,
            color=_KIND_COLORS.get(e.kind, "#999999"),
            edgecolor="white",
            linewidth=0.3,
        )
    ax.set_yticks(range(len(devices)), [f"device {d}" for d in devices])
    ax.set_xlabel("seconds")
    ax.set_xlim(0, timeline.makespan * 1.02)
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=_KIND_COLORS[k])
        for k in ("compute", "send_intra", "send_inter")
    ]
    ax.legend(handles, ["compute", "send intra", "send inter"], loc="upper right", fontsize=8)
    ax.set_title(f"ring timeline, makespan = {timeline.makespan:.3g} s")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_balance_figure(report: WorkloadReport, path: str) -> None:
    """Per-step pair counts as a heatmap plus per-device totals."""
    data = np.asarray(report.per_step_pairs)
    fig, (ax0, ax1) = plt.subplots(
        1, 2, figsize=(9, 3.2), gridspec_kw={"width_ratios": [2, 1]}
    )
    im = ax0.imshow(data, aspect="auto", cmap="viridis")
    ax0.set_xlabel("ring step")
    ax0.set_ylabel("device")
    ax0.set_yticks(range(data.shape[0]), [str(i + 1) for i in range(data.shape[0])])
    ax0.set_title("unmasked pairs per step")
    fig.colorbar(im, ax=ax0, shrink=0.85)
    ax1.bar(range(1, len(report.per_device_pairs) + 1), report.per_device_pairs, color="#4878d0")
    ax1.set_xlabel("device")
    ax1.set_title("total pairs")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_comparison_figure(report: ComparisonReport, path: str) -> None:
    names = [r.name for r in report.rows]
    x = np.arange(len(names))
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax0.bar(x - 0.2, [r.forward_elements for r in report.rows], width=0.4, label="forward")
    ax0.bar(x + 0.2, [r.backward_elements for r in report.rows], width=0.4, label="backward")
    ax0.set_xticks(x, names)
    ax0.set_ylabel("elements per device")
    ax0.set_title("ring traffic")
    ax0.legend(fontsize=8)
    ax1.bar(x - 0.2, [r.analytic_seconds for r in report.rows], width=0.4, label="analytic")
    ax1.bar(
        x + 0.2,
        [r.forward_makespan + r.backward_makespan for r in report.rows],
        width=0.4,
        label="simulated",
    )
    ax1.set_xticks(x, names)
    ax1.set_ylabel("seconds")
    ax1.set_title("communication time")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_lmhead_figure(rows: list[tuple[int, int, int]], path: str) -> None:
    """rows: (rows_per_tile, naive_elements, fused_elements)."""
    tiles = [r[0] for r in rows]
    naive = [r[1] for r in rows]
    fused = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(tiles, naive, marker="o", label="naive N x vocab")
    ax.plot(tiles, fused, marker="s", label="fused peak")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("rows per tile")
    ax.set_ylabel("logits elements")
    ax.set_title("LM-head logits storage")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
