"""Trajectory/semantics file formats and odometry accuracy metrics.

Poses on disk follow the KITTI odometry convention: one pose per line as
12 space-separated reals, the row-major upper 3x4 of a homogeneous
world-from-camera transform.  All text is UTF-8 with newline endings and
locale-independent number formatting.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .geometry import Pose3
from .infotheory import InvalidDistribution
from .selection import CandidateScore
from .semantics import TAXONOMY, SemanticBelief, aggregate_mc

_DEFAULT_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)


class MalformedLine(ValueError):
    def __init__(self, line_number: int, why: str):
        super().__init__(f"line {line_number}: {why}")
        self.line_number = line_number


class NonRigidRotation(ValueError):
    """Rotation block drifted too far from orthonormal to trust."""


class InconsistentC(ValueError):
    """Semantics rows disagree with the header on the number of classes."""


class NoOverlap(ValueError):
    """Trajectories share no frames."""


class ZeroBaseline(ValueError):
    """Map reduction against an empty baseline is undefined."""


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Frame-indexed world-from-camera poses."""

    frames: tuple[int, ...]
    poses: tuple[Pose3, ...]

    def __post_init__(self):
        if len(self.frames) != len(self.poses):
            raise ValueError("frame/pose count mismatch")
        if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
            raise ValueError("frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class ErrorReport:
    """Subsequence odometry errors plus optional map-point accounting.

    ``per_length`` maps each evaluated subsequence length in metres to its
    (translation %, rotation deg/m) averages; the headline numbers average
    those entries.  Lengths the trajectory was too short for are listed in
    ``skipped_lengths``.
    """

    translation_error_percent: float
    rotation_error_deg_per_m: float
    per_length: dict[int, tuple[float, float]] = field(default_factory=dict)
    skipped_lengths: tuple[int, ...] = ()
    map_points_baseline: Optional[int] = None
    map_points_test: Optional[int] = None
    map_reduction_percent: Optional[float] = None


def parse_kitti_poses(text: str) -> TrajectoryRecord:
    """Parse newline-separated 3x4 pose rows; line k becomes frame k.

    Rotation blocks with orthonormality drift beyond 1e-3 raise
    NonRigidRotation; drift beyond 1e-6 is repaired by projection onto the
    nearest rotation and flagged with a warning (smaller drift is snapped
    silently).
    """
    frames: list[int] = []
    poses: list[Pose3] = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 12:
            raise MalformedLine(lineno + 1, f"expected 12 numbers, found {len(parts)}")
        try:
            vals = np.array([float(p) for p in parts])
        except ValueError as err:
            raise MalformedLine(lineno + 1, str(err)) from err
        if not np.all(np.isfinite(vals)):
            raise MalformedLine(lineno + 1, "non-finite value")
        mat = vals.reshape(3, 4)
        rot, trans = mat[:, :3], mat[:, 3]
        drift = float(np.abs(rot @ rot.T - np.eye(3)).max())
        if drift > 1e-3:
            raise NonRigidRotation(f"line {lineno + 1}: orthonormality drift {drift:.2e}")
        if drift > 1e-9:
            if drift > 1e-6:
                warnings.warn(f"line {lineno + 1}: re-orthonormalized rotation "
                              f"(drift {drift:.2e})", stacklevel=2)
            u, _, vt = np.linalg.svd(rot)
            rot = u @ vt
            if np.linalg.det(rot) < 0:
                u[:, -1] = -u[:, -1]
                rot = u @ vt
        frames.append(len(frames))
        poses.append(Pose3(rot, trans))
    return TrajectoryRecord(tuple(frames), tuple(poses))


def write_kitti_poses(poses: Sequence[Pose3]) -> str:
    """Serialize world-from-camera poses; inverse of parse_kitti_poses."""
    lines = []
    for pose in poses:
        mat = np.hstack([pose.rotation, pose.translation[:, None]])
        lines.append(" ".join(f"{v:.12e}" for v in mat.ravel()))
    return "\n".join(lines) + "\n"


def parse_semantics_csv(text: str) -> dict[tuple[int, int], SemanticBelief]:
    """Group per-sample class probabilities into per-feature beliefs.

    Expected header: ``frame,feature,sample,p_0,...,p_{C-1}``.  Rows for
    the same (frame, feature) are aggregated regardless of gaps in the
    sample index — samples form a set, not a sequence.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InconsistentC("empty file") from None
    n_classes = len(header) - 3
    if header[:3] != ["frame", "feature", "sample"] or n_classes < 2:
        raise InconsistentC(f"unexpected header {header[:4]}...")
    if n_classes != len(TAXONOMY):
        raise InconsistentC(f"{n_classes} probability columns, taxonomy has {len(TAXONOMY)}")
    grouped: dict[tuple[int, int], list[np.ndarray]] = {}
    for row_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3 + n_classes:
            raise InconsistentC(f"row {row_number}: {len(row) - 3} probability columns")
        key = (int(row[0]), int(row[1]))
        probs = np.array([float(v) for v in row[3:]])
        grouped.setdefault(key, []).append(probs)
    beliefs = {}
    for key, samples in grouped.items():
        try:
            beliefs[key] = aggregate_mc(samples)
        except InvalidDistribution as err:
            raise InvalidDistribution(f"feature {key}: {err}") from err
    return beliefs


def _common_poses(gt: TrajectoryRecord, est: TrajectoryRecord) -> tuple[list[Pose3], list[Pose3]]:
    by_frame = dict(zip(est.frames, est.poses))
    gt_poses, est_poses = [], []
    for frame, pose in zip(gt.frames, gt.poses):
        if frame in by_frame:
            gt_poses.append(pose)
            est_poses.append(by_frame[frame])
    if len(gt_poses) < 2:
        raise NoOverlap(f"only {len(gt_poses)} common frames")
    return gt_poses, est_poses


def kitti_errors(gt: TrajectoryRecord, est: TrajectoryRecord,
                 lengths: Sequence[int] = _DEFAULT_LENGTHS,
                 stride: int = 1) -> ErrorReport:
    """Average relative-pose errors over fixed-length subsequences.

    For every start frame (strided) and every subsequence length, the
    first frame at least that far along the ground-truth path closes a
    relative-pose pair; the error transform between the ground-truth and
    estimated relative poses contributes translation (as a fraction of
    the length, in percent) and rotation (degrees per metre).  Errors are
    averaged within each length, then across lengths — so both metrics
    are invariant to any global rigid transform of either trajectory.
    """
    gt_poses, est_poses = _common_poses(gt, est)
    centers = np.vstack([p.translation for p in gt_poses])
    dist = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(centers, axis=0), axis=1))])
    per_length_acc: dict[int, list[tuple[float, float]]] = {length: [] for length in lengths}
    n = len(gt_poses)
    for start in range(0, n, stride):
        for length in lengths:
            # First frame at least `length` metres further along the path.
            end = int(np.searchsorted(dist, dist[start] + length))
            if end >= n:
                continue
            gt_rel = geometry.compose(geometry.inverse(gt_poses[start]), gt_poses[end])
            est_rel = geometry.compose(geometry.inverse(est_poses[start]), est_poses[end])
            err = geometry.compose(geometry.inverse(gt_rel), est_rel)
            t_err = float(np.linalg.norm(err.translation)) / length * 100.0
            r_err = float(np.degrees(geometry.rotation_angle(err.rotation))) / length
            per_length_acc[length].append((t_err, r_err))
    per_length: dict[int, tuple[float, float]] = {}
    skipped = []
    for length in lengths:
        samples = per_length_acc[length]
        if samples:
            arr = np.asarray(samples)
            per_length[int(length)] = (float(arr[:, 0].mean()), float(arr[:, 1].mean()))
        else:
            skipped.append(int(length))
    if per_length:
        trans = float(np.mean([v[0] for v in per_length.values()]))
        rot = float(np.mean([v[1] for v in per_length.values()]))
    else:
        trans = rot = float("nan")
    return ErrorReport(translation_error_percent=trans, rotation_error_deg_per_m=rot,
                       per_length=per_length, skipped_lengths=tuple(skipped))


def map_reduction(baseline: int, test: int) -> float:
    """Percent decrease in retained map points relative to a baseline."""
    if baseline <= 0:
        raise ZeroBaseline("baseline map-point count must be positive")
    return 100.0 * (1.0 - test / baseline)


_REPORT_HEADER = ["frame", "candidate", "mi_bits", "entropy_bits",
                  "delta_h_bits", "verdict", "reason"]


def write_selection_report(reports: Sequence[Sequence[CandidateScore]]) -> str:
    """Per-frame selection decisions as CSV, one row per candidate."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_REPORT_HEADER)
    for frame, scores in enumerate(reports):
        for s in scores:
            writer.writerow([
                frame, s.candidate_id,
                f"{s.mutual_information_bits:.9g}",
                f"{s.classification_entropy_bits:.9g}",
                f"{s.delta_h_bits:.9g}",
                "selected" if s.selected else "rejected",
                "" if s.rejection_reason is None else s.rejection_reason.value,
            ])
    return out.getvalue()


def count_selected_map_points(text: str) -> int:
    """Unique selected candidate ids in a selection report CSV."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != _REPORT_HEADER:
        raise ValueError(f"unexpected selection report header: {header}")
    chosen = {int(row[1]) for row in reader if row and row[5] == "selected"}
    return len(chosen)


def error_report_to_json(report: ErrorReport) -> str:
    """Stable JSON rendering of an ErrorReport."""
    payload = {
        "translation_error_percent": report.translation_error_percent,
        "rotation_error_deg_per_m": report.rotation_error_deg_per_m,
        "per_length": {str(k): {"translation_percent": v[0], "rotation_deg_per_m": v[1]}
                       for k, v in sorted(report.per_length.items())},
        "skipped_lengths": list(report.skipped_lengths),
        "map_points_baseline": report.map_points_baseline,
        "map_points_test": report.map_points_test,
        "map_reduction_percent": report.map_reduction_percent,
    }
    return json.dumps(payload, indent=2, allow_nan=True) + "\n"
