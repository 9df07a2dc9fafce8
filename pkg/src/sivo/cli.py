"""Command-line experiments: simulate, evaluate, and sweep.

Every run directory receives a manifest holding the fully resolved
configuration, seeds, and timings, sufficient to reproduce the run
bit-identically; all inputs arrive via flags and files, never ambient
state.  Run labels follow the BS{samples}E{threshold} convention, e.g.
``BS6E4`` for 6 MC samples at a 4-bit threshold.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plots
from .geometry import Pose3, inverse as pose_inverse
from .io_eval import (
    TrajectoryRecord,
    count_selected_map_points,
    error_report_to_json,
    kitti_errors,
    map_reduction,
    parse_kitti_poses,
    write_kitti_poses,
    write_selection_report,
)
from .selection import SelectionConfig, Strategy
from .sim import (
    EstimatorDiverged,
    Scenario,
    generate_trajectory,
    generate_world,
    load_scenario,
    run_sequence,
)

# `sivo` on the command line means the batch variant.
_STRATEGY_ALIASES = {"sivo": "sivo-batch"}
_STRATEGY_CHOICES = ["all", "mi", "sivo", "sivo-batch", "sivo-greedy"]


def _parse_strategy(name: str) -> Strategy:
    return Strategy(_STRATEGY_ALIASES.get(name, name))


def _label(mc_samples: int, threshold_bits: float) -> str:
    return f"BS{mc_samples}E{threshold_bits:g}"


def _jsonify(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonify(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _write_manifest(path: Path, manifest: dict) -> None:
    path.write_text(json.dumps(_jsonify(manifest), indent=2) + "\n", encoding="utf-8")


def _world_from_camera_record(poses_cw) -> TrajectoryRecord:
    wc = tuple(pose_inverse(p) for p in poses_cw)
    return TrajectoryRecord(tuple(range(len(wc))), wc)


def _resolve(scenario: Scenario, args) -> tuple[Scenario, int]:
    """Apply flag overrides to a loaded scenario."""
    seed = scenario.seed if args.seed is None else int(args.seed)
    world = scenario.world if args.seed is None else dataclasses.replace(
        scenario.world, seed=seed)
    dropout = scenario.dropout
    if getattr(args, "mc_samples", None) is not None:
        dropout = dataclasses.replace(dropout, samples=args.mc_samples)
    selection = dataclasses.replace(scenario.selection, mc_samples=dropout.samples)
    if getattr(args, "threshold_bits", None) is not None:
        selection = dataclasses.replace(selection, threshold_bits=args.threshold_bits)
    strategies = scenario.strategies
    if getattr(args, "strategy", None) is not None:
        strategies = (_parse_strategy(args.strategy),)
    return dataclasses.replace(scenario, world=world, dropout=dropout,
                               selection=selection, strategies=strategies,
                               seed=seed), seed


def cmd_simulate(args) -> int:
    try:
        scenario, seed = _resolve(load_scenario(args.scenario), args)
    except (OSError, ValueError, KeyError, TypeError) as err:
        print(f"error: bad scenario: {err}", file=sys.stderr)
        return 1
    label = _label(scenario.dropout.samples, scenario.selection.threshold_bits)
    outdir = Path(args.out) / label
    outdir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "version": __version__,
        "status": "running",
        "label": label,
        "seed": seed,
        "scenario_path": str(args.scenario),
        "config": scenario,
        "strategies": [s.value for s in scenario.strategies],
        "outputs": {},
        "map_points": {},
        "timings_s": {},
    }
    _write_manifest(outdir / "manifest.json", manifest)

    world = generate_world(scenario.world)
    gt_poses = generate_trajectory(scenario.trajectory)
    gt_path = outdir / "trajectory_gt.txt"
    gt_path.write_text(write_kitti_poses([pose_inverse(p) for p in gt_poses]),
                       encoding="utf-8")
    manifest["outputs"]["ground_truth"] = str(gt_path)

    estimates = {}
    for strategy in scenario.strategies:
        sel = dataclasses.replace(scenario.selection, strategy=strategy)
        started = time.perf_counter()
        try:
            result = run_sequence(world, scenario.trajectory, scenario.rig, sel,
                                  scenario.noise, seed, scenario.dropout)
        except EstimatorDiverged as err:
            manifest["status"] = "diverged"
            manifest["diverged_frame"] = err.frame
            _write_manifest(outdir / "manifest.json", manifest)
            print(f"error: {err}", file=sys.stderr)
            return 2
        elapsed = time.perf_counter() - started

        traj_path = outdir / f"{strategy.value}_trajectory.txt"
        traj_path.write_text(
            write_kitti_poses([pose_inverse(p) for p in result.poses]), encoding="utf-8")
        report_path = outdir / f"{strategy.value}_selection.csv"
        report_path.write_text(write_selection_report(result.reports), encoding="utf-8")
        fig_path = outdir / f"{strategy.value}_selection.png"
        plots.save_figure(plots.selection_figure(result.reports), fig_path)

        estimates[strategy.value] = result.poses
        manifest["outputs"][strategy.value] = {
            "trajectory": str(traj_path),
            "selection_report": str(report_path),
            "selection_figure": str(fig_path),
        }
        manifest["map_points"][strategy.value] = result.map_points
        manifest["timings_s"][strategy.value] = round(elapsed, 3)
        print(f"{label} {strategy.value}: {result.map_points} map points, "
              f"{elapsed:.1f} s")

    overlay_path = outdir / "trajectory.png"
    plots.save_figure(plots.trajectory_figure(gt_poses, estimates), overlay_path)
    manifest["outputs"]["trajectory_figure"] = str(overlay_path)
    manifest["status"] = "complete"
    _write_manifest(outdir / "manifest.json", manifest)
    print(f"outputs in {outdir}")
    return 0


def cmd_evaluate(args) -> int:
    if (args.baseline_report is None) != (args.test_report is None):
        print("error: --baseline-report and --test-report come together",
              file=sys.stderr)
        return 1
    try:
        gt = parse_kitti_poses(Path(args.gt).read_text(encoding="utf-8"))
        est = parse_kitti_poses(Path(args.est).read_text(encoding="utf-8"))
        report = kitti_errors(gt, est)
        if args.baseline_report is not None:
            baseline = count_selected_map_points(
                Path(args.baseline_report).read_text(encoding="utf-8"))
            test = count_selected_map_points(
                Path(args.test_report).read_text(encoding="utf-8"))
            report = dataclasses.replace(
                report, map_points_baseline=baseline, map_points_test=test,
                map_reduction_percent=map_reduction(baseline, test))
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    text = error_report_to_json(report)
    sys.stdout.write(text)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    return 0


_SUMMARY_COLUMNS = ["label", "strategy", "mc_samples", "threshold_bits",
                    "translation_error_percent", "rotation_error_deg_per_m",
                    "map_points", "map_reduction_percent", "status"]


def cmd_sweep(args) -> int:
    try:
        scenario, seed = _resolve(load_scenario(args.scenario), args)
        thresholds = [float(v) for v in args.thresholds.split(",") if v.strip()]
        samples = [int(v) for v in args.samples.split(",") if v.strip()]
        if not thresholds or not samples:
            raise ValueError("threshold and sample lists must be non-empty")
    except (OSError, ValueError, KeyError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    sivo_strategy = (scenario.selection.strategy
                     if scenario.selection.strategy in
                     (Strategy.KAESS_BATCH, Strategy.DAVISON_GREEDY)
                     else Strategy.KAESS_BATCH)
    manifest = {
        "version": __version__,
        "status": "running",
        "seed": seed,
        "scenario_path": str(args.scenario),
        "config": scenario,
        "strategy": sivo_strategy.value,
        "thresholds_bits": thresholds,
        "mc_samples": samples,
        "timings_s": {},
    }
    _write_manifest(outdir / "manifest.json", manifest)

    world = generate_world(scenario.world)
    gt_record = _world_from_camera_record(generate_trajectory(scenario.trajectory))

    started = time.perf_counter()
    base_sel = dataclasses.replace(scenario.selection,
                                   strategy=Strategy.ALL_FEATURES)
    # The baseline keeps every projectable feature; class beliefs play no
    # part in it, so the MC simulation is skipped.
    base = run_sequence(world, scenario.trajectory, scenario.rig, base_sel,
                        scenario.noise, seed, dropout=None)
    manifest["timings_s"]["baseline"] = round(time.perf_counter() - started, 3)
    base_errors = kitti_errors(gt_record, _world_from_camera_record(base.poses))
    rows = [{
        "label": "ALL", "strategy": Strategy.ALL_FEATURES.value,
        "mc_samples": "", "threshold_bits": "",
        "translation_error_percent": base_errors.translation_error_percent,
        "rotation_error_deg_per_m": base_errors.rotation_error_deg_per_m,
        "map_points": base.map_points, "map_reduction_percent": 0.0,
        "status": "ok",
    }]

    failures = 0
    for n in samples:
        for t in thresholds:
            label = _label(n, t)
            sel = dataclasses.replace(scenario.selection, threshold_bits=t,
                                      mc_samples=n, strategy=sivo_strategy)
            dropout = dataclasses.replace(scenario.dropout, samples=n)
            cell_started = time.perf_counter()
            try:
                result = run_sequence(world, scenario.trajectory, scenario.rig,
                                      sel, scenario.noise, seed, dropout)
                errors = kitti_errors(gt_record,
                                      _world_from_camera_record(result.poses))
                rows.append({
                    "label": label, "strategy": sivo_strategy.value,
                    "mc_samples": n, "threshold_bits": t,
                    "translation_error_percent": errors.translation_error_percent,
                    "rotation_error_deg_per_m": errors.rotation_error_deg_per_m,
                    "map_points": result.map_points,
                    "map_reduction_percent": map_reduction(base.map_points,
                                                           result.map_points),
                    "status": "ok",
                })
            except EstimatorDiverged as err:
                failures += 1
                rows.append({
                    "label": label, "strategy": sivo_strategy.value,
                    "mc_samples": n, "threshold_bits": t,
                    "translation_error_percent": "", "rotation_error_deg_per_m": "",
                    "map_points": "", "map_reduction_percent": None,
                    "status": f"diverged@{err.frame}",
                })
            manifest["timings_s"][label] = round(time.perf_counter() - cell_started, 3)

    summary_path = outdir / "summary.csv"
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SUMMARY_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            out = dict(row)
            if out["map_reduction_percent"] is None:
                out["map_reduction_percent"] = ""
            writer.writerow(out)
    plots.save_figure(plots.sweep_figure(rows), outdir / "sweep.png")
    manifest["status"] = "complete" if failures == 0 else f"{failures} cells failed"
    manifest["summary"] = str(summary_path)
    _write_manifest(outdir / "manifest.json", manifest)

    for row in rows:
        print(f"{row['label']:>10}  map_points={row['map_points']!s:>6} "
              f"trans%={row['translation_error_percent']!s:>8} "
              f"status={row['status']}")
    print(f"summary in {summary_path}")
    return 2 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sivo",
        description="Uncertainty-aware feature selection for stereo visual "
                    "odometry: simulated runs, evaluation, and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the simulated VO loop on a scenario")
    sim.add_argument("--scenario", required=True, help="TOML scenario file")
    sim.add_argument("--strategy", choices=_STRATEGY_CHOICES, default=None,
                     help="override the scenario's strategy list with one strategy")
    sim.add_argument("--threshold-bits", type=float, default=None,
                     help="selection threshold in bits")
    sim.add_argument("--mc-samples", type=int, default=None,
                     help="MC dropout samples per feature")
    sim.add_argument("--seed", type=int, default=None, help="master seed override")
    sim.add_argument("--out", default="runs", help="output root directory")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="compare an estimate against ground truth")
    ev.add_argument("--gt", required=True, help="ground-truth pose file")
    ev.add_argument("--est", required=True, help="estimated pose file")
    ev.add_argument("--baseline-report", default=None,
                    help="selection report CSV of the keep-everything baseline")
    ev.add_argument("--test-report", default=None,
                    help="selection report CSV of the run under test")
    ev.add_argument("--out", default=None, help="also write the JSON report here")
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="grid of thresholds x sample counts")
    sw.add_argument("--scenario", required=True, help="TOML scenario file")
    sw.add_argument("--thresholds", required=True,
                    help="comma-separated thresholds in bits, e.g. 2,3,4")
    sw.add_argument("--samples", required=True,
                    help="comma-separated MC sample counts, e.g. 2,6,12")
    sw.add_argument("--seed", type=int, default=None, help="master seed override")
    sw.add_argument("--out", default="runs/sweep", help="output directory")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
