"""Figure rendering for run and sweep outputs.

Figures are written next to the delimited logs: a top view of the ground
reference points with the detected footholds, an exploration detail per
explored step, and the success curve for sweeps.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .logs import GroundReferenceLog

FOOTHOLD_STYLE = dict(facecolor="none", edgecolor="black", linewidth=1.2)


def _draw_polygon(ax, verts, **kw):
    verts = np.asarray(verts, dtype=float)
    if verts.shape[0] >= 3:
        ax.fill(verts[:, 0], verts[:, 1], **kw)
    elif verts.shape[0] == 2:
        ax.plot(verts[:, 0], verts[:, 1], color=kw.get("edgecolor", "black"),
                linewidth=kw.get("linewidth", 1.2))
    else:
        ax.plot(verts[:, 0], verts[:, 1], marker="s", markersize=3,
                color=kw.get("edgecolor", "black"))


def plot_ground_reference(log: GroundReferenceLog, sidecar: dict, path: str):
    """Top view of ICP / reference / CoP / CMP trajectories with the support
    polygons that were active along the run."""
    n = log.n
    fig, ax = plt.subplots(figsize=(9, 4.2))
    seen = set()
    for sid in np.unique(log.support_id[:n]):
        for poly in sidecar["supports"][sid]:
            key = repr(poly["vertices"])
            if key in seen:
                continue
            seen.add(key)
            _draw_polygon(ax, poly["vertices"], **FOOTHOLD_STYLE)
    stride = max(n // 2000, 1)
    sl = slice(0, n, stride)
    ax.plot(log.icp_ref[sl, 0], log.icp_ref[sl, 1], "-", color="tab:gray", lw=1.0, label="ICP reference")
    ax.plot(log.icp[sl, 0], log.icp[sl, 1], "-", color="tab:blue", lw=1.2, label="ICP")
    ax.plot(log.cop[sl, 0], log.cop[sl, 1], ".", color="tab:green", ms=1.5, label="CoP")
    ax.plot(log.cmp[sl, 0], log.cmp[sl, 1], ".", color="tab:red", ms=1.5, label="CMP")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper left", fontsize=8)
    ax.set_title("ground reference points")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_exploration(sidecar: dict, path: str):
    """Per-explored-step detail: CoP history and the fused foothold."""
    entries = sidecar.get("exploration", [])
    if not entries:
        return None
    fig, axes = plt.subplots(1, len(entries), figsize=(3.1 * len(entries), 3.2), squeeze=False)
    for ax, entry in zip(axes[0], entries):
        pts = np.array([p for (_, p, _) in entry["history"]]) if entry["history"] else np.zeros((0, 2))
        if pts.size:
            ax.plot(pts[:, 0], pts[:, 1], "o", ms=3, color="tab:green", label="CoP samples")
        _draw_polygon(ax, entry["final_foothold"]["vertices"],
                      facecolor="tab:blue", alpha=0.25, edgecolor="tab:blue")
        ax.set_title(f"step {entry['step']} ({entry['terrain_kind']}, {entry['duration']:.2f}s)",
                     fontsize=9)
        ax.set_aspect("equal")
        ax.tick_params(labelsize=7)
    axes[0][0].legend(fontsize=7)
    fig.suptitle("foothold exploration (sole frame)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_sweep(values, rows, parameter: str, path: str):
    """Success rate and tracking error against the swept parameter."""
    vals = sorted(set(values))
    rates, errs = [], []
    for v in vals:
        ms = [m for vv, _, _, m in rows if vv == v]
        rates.append(np.mean([m.success for m in ms]))
        errs.append(np.mean([m.max_tracking_error for m in ms]))
    fig, ax1 = plt.subplots(figsize=(5.2, 3.4))
    ax1.plot(vals, rates, "o-", color="tab:blue")
    ax1.set_xlabel(parameter)
    ax1.set_ylabel("success rate", color="tab:blue")
    ax1.set_ylim(-0.05, 1.05)
    ax2 = ax1.twinx()
    ax2.plot(vals, errs, "s--", color="tab:red")
    ax2.set_ylabel("max ICP tracking error [m]", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_run_figures(outdir: str, name: str, log: GroundReferenceLog, sidecar: dict):
    paths = [plot_ground_reference(log, sidecar, os.path.join(outdir, f"{name}_ground_reference.png"))]
    p = plot_exploration(sidecar, os.path.join(outdir, f"{name}_exploration.png"))
    if p:
        paths.append(p)
    return paths
