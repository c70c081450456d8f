"""SVG charts for study summaries.

Output is deterministic for a fixed summary: the SVG hash salt is pinned and
no creation date is written.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib
matplotlib.use("Agg")  # Non-interactive backend
import matplotlib.pyplot as plt
import numpy as np

from .errors import EmptySummaryError
from .models import StudyKind

if TYPE_CHECKING:
    from .harness import MetricsSummary

logger = logging.getLogger(__name__)

SVG_HASHSALT = "cyborg-explorer"

COLORS = {
    "natural": "#95a5a6",
    "fixed": "#e67e22",
    "levy": "#e74c3c",
    "uniform": "#3498db",
    "brownian": "#2ecc71",
    "tracking": "#8e44ad",
    "onboard": "#16a085",
    "2d": "#2980b9",
    "3d": "#c0392b",
}


def _color(label: str) -> str:
    return COLORS.get(label.split("-")[0], "#34495e")


def _save(fig, path: Path) -> Path:
    with plt.rc_context({"svg.hashsalt": SVG_HASHSALT}):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    logger.info("  -> %s", path)
    return path


def _ok(summary: MetricsSummary, label: str | None = None):
    return [r for r in summary.records if r.status == "ok" and (label is None or r.label == label)]


def _draw_arena(ax, context: dict) -> None:
    arena = context.get("arena")
    if arena:
        x0, y0 = arena["origin"]
        ax.add_patch(plt.Rectangle((x0, y0), arena["width"], arena["height"],
                                   fill=False, edgecolor="black", linewidth=1.0))
        ax.set_xlim(x0 - 0.2, x0 + arena["width"] + 0.2)
        ax.set_ylim(y0 - 0.2, y0 + arena["height"] + 0.2)
    for src in context.get("sources", []):
        ax.add_patch(plt.Circle(tuple(src["center"]), src["radius"], color="#c0392b", alpha=0.35))
        ax.annotate(src["name"], tuple(src["center"]), fontsize=8, ha="center", va="center")
    start = context.get("start")
    if start:
        ax.plot(*start, marker="o", color="#f1c40f", markeredgecolor="black", zorder=5)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")


# ─── Chart 1: Coverage vs time ────────────────────────────────────────

def chart_coverage(summary: MetricsSummary, out: Path) -> Path:
    """Mean coverage curve with a +/- SD band per strategy, or final-coverage bars."""
    fig, ax = plt.subplots(figsize=(8, 5))
    curves = {label: e["coverage_curve"] for label, e in summary.aggregates.items() if "coverage_curve" in e}
    if curves:
        for label, curve in curves.items():
            x = np.asarray(curve["x"])
            mean = 100.0 * np.asarray(curve["mean"])
            sd = 100.0 * np.asarray(curve["sd"])
            ax.plot(x, mean, label=label, color=_color(label), linewidth=1.8)
            ax.fill_between(x, np.clip(mean - sd, 0, 100), np.clip(mean + sd, 0, 100),
                            color=_color(label), alpha=0.15, linewidth=0)
        ax.set_xlabel("Simulated time (h)")
        ax.legend(loc="lower right")
    else:
        labels = list(summary.aggregates)
        means = [100.0 * (summary.aggregates[lb]["final_coverage"]["mean"] or 0.0) for lb in labels]
        sds = [100.0 * (summary.aggregates[lb]["final_coverage"]["sd"] or 0.0) for lb in labels]
        ax.bar(labels, means, yerr=sds, color=[_color(lb) for lb in labels], capsize=4)
    ax.set_ylim(0, 100)
    ax.set_ylabel("Area coverage (%)")
    ax.set_title("Exploration coverage", fontweight="bold")
    return _save(fig, out / "coverage.svg")


# ─── Chart 2: Search time per strategy ────────────────────────────────

def chart_search_time(summary: MetricsSummary, out: Path) -> Path | None:
    rows = [(label, e["search_time_min"], e["found_rate"]) for label, e in summary.aggregates.items()
            if "search_time_min" in e]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(8, 5))
    labels = [r[0] for r in rows]
    means = [r[1]["mean"] or 0.0 for r in rows]
    sds = [r[1]["sd"] or 0.0 for r in rows]
    bars = ax.bar(labels, means, yerr=sds, color=[_color(lb) for lb in labels], capsize=4)
    for bar, (_, _, found) in zip(bars, rows):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), f"{100.0 * (found or 0):.0f}% found",
                ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("Search time (min)")
    ax.set_title("Time to find the target", fontweight="bold")
    return _save(fig, out / "search_time.svg")


# ─── Chart 3: Trajectories ────────────────────────────────────────────

def chart_trajectories(summary: MetricsSummary, out: Path) -> Path:
    """One polyline per trial (gid ``trial-<index>``) with arrival circles around estimates."""
    fig, ax = plt.subplots(figsize=(7, 8))
    _draw_arena(ax, summary.context)
    radius = summary.context.get("arrival_radius", 0.2)
    for record in _ok(summary):
        rows = record.series.get("trajectory")
        if not rows:
            continue
        path = np.asarray(rows, dtype=object)
        xs = path[:, 1].astype(float)
        ys = path[:, 2].astype(float)
        (line,) = ax.plot(xs, ys, color=_color(record.label), linewidth=0.8, alpha=0.7)
        line.set_gid(f"trial-{record.index}")
        for est in record.series.get("estimates", []):
            ax.add_patch(plt.Circle((est["x"], est["y"]), radius, fill=False,
                                    edgecolor="#2c3e50", linewidth=0.6))
    ax.set_title(f"{summary.kind.value.replace('_', ' ')} trajectories", fontweight="bold")
    return _save(fig, out / "trajectories.svg")


# ─── Chart 4: Distance to source after each arrival ───────────────────

def chart_arrival_distances(summary: MetricsSummary, out: Path) -> Path | None:
    context = summary.context
    d0 = _start_distance(context) if context.get("sources") and context.get("start") else None
    fig, ax = plt.subplots(figsize=(7, 5))
    plotted = False
    for label, entry in summary.aggregates.items():
        stats = [s for s in entry.get("arrival_distance_m", []) if s["mean"] is not None]
        if not stats:
            continue
        means = [s["mean"] for s in stats]
        sds = [s["sd"] for s in stats]
        x = list(range(1, len(stats) + 1))
        if d0 is not None:
            x, means, sds = [0] + x, [d0] + means, [0.0] + sds
        ax.errorbar(x, means, yerr=sds, marker="o", capsize=4, color=_color(label), label=label)
        plotted = True
    if not plotted:
        plt.close(fig)
        return None
    ax.set_xlabel("Estimated destinations reached")
    ax.set_ylabel("Distance to source (m)")
    ax.set_ylim(bottom=0)
    ax.legend()
    ax.set_title("Approach progress", fontweight="bold")
    return _save(fig, out / "arrival_distances.svg")


def _start_distance(context: dict) -> float:
    sx, sy = context["start"]
    cx, cy = context["sources"][0]["center"]
    return float(np.hypot(cx - sx, cy - sy))


# ─── Chart 5: IMU error propagation ───────────────────────────────────

def chart_imu_error(summary: MetricsSummary, out: Path, n_bars: int = 10) -> Path:
    """Error vs traveled distance; error bars span the band's share of the distance."""
    bands = summary.context.get("error_bands_pct", {})
    fig, ax = plt.subplots(figsize=(8, 5))
    for label in summary.labels:
        records = [r for r in _ok(summary, label) if r.series.get("traveled")]
        if not records:
            continue
        color = _color(label)
        for r in records:
            ax.plot(r.series["traveled"], r.series["error"], color=color, linewidth=0.5, alpha=0.35)
        reach = min(r.series["traveled"][-1] for r in records)
        if reach <= 0:
            continue
        grid = np.linspace(reach / n_bars, reach, n_bars)
        mean_err = np.mean([np.interp(grid, r.series["traveled"], r.series["error"]) for r in records], axis=0)
        band = bands.get(label, 5.0)
        ax.errorbar(grid, mean_err, yerr=grid * band / 100.0, fmt="o", color=color, capsize=3,
                    label=f"{label} (bars: {band:g}% of traveled)")
    ax.set_xlabel("Traveled distance (m)")
    ax.set_ylabel("Position error (m)")
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper left")
    ax.set_title("Dead-reckoning error propagation", fontweight="bold")
    return _save(fig, out / "imu_error.svg")


# ─── Chart 6: Blob accuracy vs distance ───────────────────────────────

def chart_blob_accuracy(summary: MetricsSummary, out: Path) -> Path:
    table = summary.aggregates["table"]
    d = [row["distance_m"] for row in table]
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(d, [100.0 * row["hit_rate"] for row in table], marker="o", color="#2c3e50", label="blob in hottest region")
    ax.set_ylim(0, 100)
    ax.set_xlabel("Distance to human (m)")
    ax.set_ylabel("Accuracy (%)")
    twin = ax.twinx()
    twin.plot(d, [100.0 * row["fraction"] for row in table], marker="s", color="#e67e22", label="in-band pixels")
    twin.set_ylabel("Thermal information (%)")
    working = summary.aggregates.get("working_range_m")
    if working is not None:
        ax.axvline(working, color="#c0392b", linestyle="--", linewidth=1)
    ax.set_title("Blob detection accuracy", fontweight="bold")
    return _save(fig, out / "blob_accuracy.svg")


def emit_plots(summary: MetricsSummary, outdir: str | Path) -> list[Path]:
    """Render every chart that applies to the summary's study kind."""
    if not summary.records or not _ok(summary):
        raise EmptySummaryError("nothing to plot: the summary has no successful trials")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    kind = summary.kind
    if kind is StudyKind.EXPLORATION:
        paths = [chart_coverage(summary, out), chart_search_time(summary, out)]
        if any(r.series.get("trajectory") for r in _ok(summary)):
            paths.append(chart_trajectories(summary, out))
    elif kind is StudyKind.THERMAL_NAV:
        paths = [chart_trajectories(summary, out), chart_arrival_distances(summary, out)]
    elif kind is StudyKind.FULL_MISSION:
        paths = [chart_trajectories(summary, out)]
    elif kind is StudyKind.IMU_REPLAY:
        paths = [chart_imu_error(summary, out)]
    else:
        paths = [chart_blob_accuracy(summary, out)]
    return [p for p in paths if p is not None]
