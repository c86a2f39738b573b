"""Command-line interface.

Subcommands mirror the pipeline stages:

    flightdae ingest    raw records -> cleaned labeled trajectories
    flightdae attack    clean trajectories -> per-dataset evaluation suites
    flightdae train     window records -> model checkpoint
    flightdae calibrate checkpoint + training records -> thresholds
    flightdae detect    checkpoint + records -> per-window verdict CSV
    flightdae eval      verdict CSVs -> report
    flightdae pipeline  everything end to end into one output directory
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .attacks import SuiteConfig, build_eval_suite, load_labeled_trajectories, save_labeled_trajectories
from .dae import DaeModel, ModelConfig, TrainConfig, calibrate_thresholds, detect, load_model, save_model, train
from .dataset import read_records, windows_from_trajectory, write_records
from .eval import Contingency, EvalReport
from .ingest import filter_outliers, load_airports_sidecar, load_trajectories, resample
from .phase import label_phases
from .pipeline import ALL_DETECTORS, PipelineConfig, run_pipeline

logger = logging.getLogger(__name__)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as e:  # surface errors as exit codes, not tracebacks
        logger.error("%s", e)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flightdae")
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("ingest", help="load, resample and filter raw records")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    p.add_argument("--airports", help="icao->lat/lon sidecar file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--period", type=float, default=2.0)
    p.add_argument("--max-gap", type=float, default=30.0)
    p.add_argument("--max-jump", type=float, default=20.0)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("attack", help="build evaluation suites from clean trajectories")
    p.add_argument("--input", required=True, help="trajectories.jsonl from ingest")
    p.add_argument("--suite-config", help="JSON file with SuiteConfig fields")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--window-len", type=int, default=30)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("train", help="train a model on window records")
    p.add_argument("--records", required=True, nargs="+")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--detector", default="dae", choices=["dae", "lstm-ae"])
    p.add_argument("--config", help="JSON file with model/train config fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score-variant", default="mse", choices=["mse", "eq1"])
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("calibrate", help="compute per-decoder thresholds")
    p.add_argument("--model", required=True)
    p.add_argument("--records", required=True, nargs="+", help="training records")
    p.add_argument("--out", help="defaults to overwriting --model")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("detect", help="score records against a calibrated model")
    p.add_argument("--model", required=True)
    p.add_argument("--records", required=True, nargs="+")
    p.add_argument("--out", required=True, help="verdict CSV path")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="aggregate verdict CSVs into a report")
    p.add_argument("--verdicts", required=True, nargs="+", metavar="DATASET=CSV")
    p.add_argument("--detector-name", default="dae")
    p.add_argument("--out", help="directory for report.json/report.csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config", help="JSON file with PipelineConfig fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--detectors", help="comma-separated subset of " + ",".join(ALL_DETECTORS))
    p.add_argument("--score-variant", choices=["mse", "eq1"])
    p.set_defaults(func=_cmd_pipeline)
    return parser


def _cmd_ingest(args) -> int:
    airports = load_airports_sidecar(args.airports) if args.airports else None
    result = load_trajectories(args.input, args.format, airports)
    cleaned = []
    for traj in result.trajectories:
        traj = resample(traj, args.period, args.max_gap)
        cleaned.append(filter_outliers(traj, args.max_jump))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_labeled_trajectories(
        [(t, [0] * len(t.points)) for t in cleaned], out / "trajectories.jsonl"
    )
    print(
        f"{len(cleaned)} trajectories written to {out / 'trajectories.jsonl'} "
        f"({result.dropped_rows} rows dropped)"
    )
    return 0


def _cmd_attack(args) -> int:
    entries = load_labeled_trajectories(args.input)
    trajectories = [t for t, _ in entries]
    cfg = SuiteConfig()
    if args.suite_config:
        cfg = SuiteConfig.from_dict(json.loads(Path(args.suite_config).read_text()))
    suites, manifest = build_eval_suite(trajectories, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for dataset, suite_entries in suites.items():
        save_labeled_trajectories(suite_entries, out / f"{dataset}.trajectories.jsonl")
        windows = []
        for traj, labels in suite_entries:
            phases = label_phases(traj)
            windows.extend(
                windows_from_trajectory(traj, phases, labels, args.window_len, args.stride)
            )
        write_records(windows, out / f"{dataset}.jsonl")
        print(f"{dataset}: {len(windows)} windows")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return 0


def _read_many(paths) -> list:
    windows = []
    for p in paths:
        windows.extend(read_records(p))
    return windows


def _cmd_train(args) -> int:
    windows = _read_many(args.records)
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
    model_cfg = ModelConfig(
        discriminate=args.detector == "dae",
        score_variant=args.score_variant,
        **overrides.get("model", {}),
    )
    train_cfg = TrainConfig(seed=args.seed, **overrides.get("train", {}))
    model = DaeModel(model_cfg, seed=args.seed)
    result = train(model, windows, train_cfg)
    save_model(model, args.out)
    print(
        f"trained {args.detector} for {result.epochs_run} epochs "
        f"(best epoch {result.best_epoch}, val loss {min(result.val_losses):.6f}); "
        f"checkpoint: {args.out}"
    )
    return 0


def _cmd_calibrate(args) -> int:
    model = load_model(args.model)
    windows = _read_many(args.records)
    thresholds = calibrate_thresholds(model, windows)
    save_model(model, args.out or args.model)
    for key, tau in thresholds.items():
        print(f"{key}: tau = {tau:.6f}")
    return 0


def _cmd_detect(args) -> int:
    model = load_model(args.model)
    windows = _read_many(args.records)
    verdicts = detect(model, windows)
    lines = ["flight_id,start_timestamp,phase,score,threshold,flagged,label"]
    lines += [
        f"{v.flight_id},{v.start_timestamp!r},{v.phase.value},{v.score!r},"
        f"{v.threshold_used!r},{int(v.flagged)},{w.label}"
        for v, w in zip(verdicts, windows)
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    flagged = sum(v.flagged for v in verdicts)
    print(f"{flagged}/{len(verdicts)} windows flagged -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    contingencies = {}
    for spec_arg in args.verdicts:
        dataset, _, path = spec_arg.partition("=")
        if not path:
            raise SystemExit(f"--verdicts entries must be DATASET=CSV, got {spec_arg!r}")
        flags, labels = [], []
        for line in Path(path).read_text().splitlines()[1:]:
            cols = line.split(",")
            flags.append(cols[5] == "1")
            labels.append(int(cols[6]))
        contingencies[(dataset, args.detector_name)] = Contingency.from_pairs(flags, labels)
    report = EvalReport.from_contingencies(contingencies)
    print(report.to_csv(), end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report.to_csv())
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = PipelineConfig()
    if args.config:
        cfg = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.detectors:
        cfg = dataclasses.replace(cfg, detectors=tuple(args.detectors.split(",")))
    if args.score_variant:
        cfg = dataclasses.replace(
            cfg, model=dataclasses.replace(cfg.model, score_variant=args.score_variant)
        )
    report = run_pipeline(cfg, args.out)
    print(report.to_csv(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
