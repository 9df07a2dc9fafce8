"""Figure rendering for simulation and sweep outputs (file-based, Agg)."""
from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import Pose3
from .selection import CandidateScore


def camera_centers(poses: Sequence[Pose3]) -> np.ndarray:
    """World positions of the camera for camera-from-world poses, (n, 3)."""
    return np.vstack([-p.rotation.T @ p.translation for p in poses])


def trajectory_figure(true_poses: Sequence[Pose3],
                      estimates: Mapping[str, Sequence[Pose3]]) -> plt.Figure:
    """Plan-view (x-z) overlay of the ground-truth path and estimates."""
    fig, ax = plt.subplots(figsize=(6, 6))
    gt = camera_centers(true_poses)
    ax.plot(gt[:, 0], gt[:, 2], "k--", linewidth=1.2, label="ground truth")
    for name, poses in estimates.items():
        c = camera_centers(poses)
        ax.plot(c[:, 0], c[:, 2], linewidth=1.0, label=name)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def selection_figure(reports: Sequence[Sequence[CandidateScore]]) -> plt.Figure:
    """Per-frame selection counts and the score distribution."""
    fig, (ax_counts, ax_hist) = plt.subplots(1, 2, figsize=(10, 4))
    frames = np.arange(len(reports))
    n_candidates = np.array([len(r) for r in reports])
    n_selected = np.array([sum(s.selected for s in r) for r in reports])
    ax_counts.plot(frames, n_candidates, label="candidates", linewidth=1.0)
    ax_counts.plot(frames, n_selected, label="selected", linewidth=1.0)
    ax_counts.set_xlabel("frame")
    ax_counts.set_ylabel("features")
    ax_counts.legend(fontsize=8)
    ax_counts.grid(True, alpha=0.3)

    kept = [s.delta_h_bits for r in reports for s in r if s.selected]
    dropped = [s.delta_h_bits for r in reports for s in r
               if not s.selected and s.rejection_reason is not None
               and s.rejection_reason.value == "below-threshold"]
    bins = 40
    if kept or dropped:
        ax_hist.hist([dropped, kept], bins=bins, stacked=False,
                     label=["rejected (threshold)", "selected"])
    ax_hist.set_xlabel("information gain minus class entropy [bits]")
    ax_hist.set_ylabel("count")
    ax_hist.legend(fontsize=8)
    ax_hist.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def sweep_figure(rows: Sequence[dict]) -> plt.Figure:
    """Map reduction against translation error for each sweep cell."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for row in rows:
        if row.get("status") != "ok" or row.get("map_reduction_percent") is None:
            continue
        x = row["map_reduction_percent"]
        y = row["translation_error_percent"]
        ax.scatter(x, y, s=28)
        ax.annotate(row["label"], (x, y), fontsize=7,
                    textcoords="offset points", xytext=(4, 3))
    ax.set_xlabel("map reduction [%]")
    ax.set_ylabel("translation error [%]")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def save_figure(fig: plt.Figure, path) -> None:
    fig.savefig(path, dpi=130)
    plt.close(fig)
