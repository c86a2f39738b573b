"""End-to-end orchestration: corpus -> windows -> train -> attack -> report.

Every artifact (records, checkpoints, suites, traces, report) lands under
one output directory, and identical config + seed produce byte-identical
reports. Stage failures are re-raised as PipelineStageError carrying the
stage name.

Output layout:

    manifest.json                 config echo + corpus/suite bookkeeping
    records/train-{k}-of-{n}.jsonl   training windows
    suites/{DATASET}.jsonl        labeled evaluation windows
    suites/{DATASET}.trajectories.jsonl  altered flights with point labels
    models/{detector}.npz         checkpoints (incl. thresholds)
    losses.csv                    per-epoch train/val loss per model
    traces/{DATASET}/{flight}.csv per-window score/threshold series
    report.json, report.csv       contingency counts + metrics
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .attacks import SuiteConfig, build_eval_suite, save_labeled_trajectories
from .dae import (
    AnomalyVerdict,
    DaeModel,
    ModelConfig,
    TrainConfig,
    calibrate_thresholds,
    detect,
    save_model,
    train,
)
from .dataset import FeatureWindow, windows_from_trajectory, write_records
from .errors import PipelineStageError
from .eval import (
    Contingency,
    EvalReport,
    IFOREST_SUBSAMPLE,
    IFOREST_TREES,
    contingency_from_verdicts,
    flatten_windows,
    iforest_verdicts,
)
from .iforest import IsolationForest
from .ingest import Trajectory, filter_outliers, load_airports_sidecar, load_trajectories, resample
from .phase import PhaseConfig, label_phases
from .synth import SynthConfig, generate_corpus

logger = logging.getLogger(__name__)

DETECTOR_DAE = "dae"
DETECTOR_LSTM_AE = "lstm-ae"
DETECTOR_IFOREST = "iforest"
ALL_DETECTORS = (DETECTOR_DAE, DETECTOR_LSTM_AE, DETECTOR_IFOREST)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one run needs; JSON-serializable for the CLI --config."""

    seed: int = 0
    # corpus: either a raw input file or the synthetic generator
    input_path: str | None = None
    input_format: str = "csv"
    airports_path: str | None = None
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_flights=24))
    eval_flights: int = 6
    # ingest
    period_s: float = 2.0
    max_gap_s: float = 30.0
    max_jump_km: float = 20.0
    # windows
    window_len: int = 30
    train_stride: int = 5
    eval_stride: int = 1
    record_shards: int = 4
    # phase labeling
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    # model / training
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # attacks
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    # detectors
    detectors: tuple[str, ...] = ALL_DETECTORS
    iforest_trees: int = IFOREST_TREES
    iforest_subsample: int = IFOREST_SUBSAMPLE

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"] = dataclasses.asdict(self.synth)
        d["suite"] = self.suite.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "synth" in d:
            s = dict(d["synth"])
            for key in ("cruise_levels_ft", "climb_rate_ftmin", "descent_rate_ftmin", "cruise_speed_kt"):
                if key in s:
                    s[key] = tuple(s[key])
            d["synth"] = SynthConfig(**s)
        if "phase" in d:
            d["phase"] = PhaseConfig(**d["phase"])
        if "model" in d:
            d["model"] = ModelConfig(**d["model"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if "suite" in d:
            d["suite"] = SuiteConfig.from_dict(d["suite"])
        if "detectors" in d:
            d["detectors"] = tuple(d["detectors"])
        return cls(**d)


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n")


def run_pipeline(config: PipelineConfig, out_dir: str | Path) -> EvalReport:
    """Execute all stages and write the artifact tree; returns the report."""
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    (out / "suites").mkdir(exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)

    manifest: dict = {"package": {"name": "flightdae", "version": __version__},
                      "config": config.to_dict()}

    flights = _run_stage("corpus", _load_corpus, config)
    if config.eval_flights >= len(flights):
        raise PipelineStageError(
            "corpus", ValueError(f"eval_flights={config.eval_flights} but corpus has {len(flights)}")
        )
    train_flights = flights[: len(flights) - config.eval_flights]
    eval_flights = flights[len(flights) - config.eval_flights:]
    manifest["corpus"] = {
        "flights": len(flights),
        "train_flights": len(train_flights),
        "eval_flights": len(eval_flights),
    }

    train_windows = _run_stage("windows", _training_windows, config, train_flights)
    _run_stage(
        "windows", write_records, train_windows, out / "records" / "train.jsonl",
        config.record_shards,
    )
    manifest["train_windows"] = len(train_windows)

    suites, suite_manifest = _run_stage("attacks", _build_suites, config, eval_flights, out)
    manifest["suite"] = suite_manifest
    manifest["eval_windows"] = {ds: len(ws) for ds, ws in suites.items()}

    models, losses = _run_stage("train", _train_detectors, config, train_windows, out)
    _run_stage("calibrate", _calibrate_detectors, config, models, train_windows, out)

    contingencies, traces = _run_stage("detect", _detect_all, config, models, suites)
    _run_stage("report", _write_artifacts, out, contingencies, traces, losses, manifest)
    return EvalReport.from_contingencies(contingencies)


def _run_stage(name: str, fn, *args):
    try:
        return fn(*args)
    except PipelineStageError:
        raise
    except Exception as e:
        raise PipelineStageError(name, e) from e


def _load_corpus(config: PipelineConfig) -> list[Trajectory]:
    if config.input_path:
        airports = (
            load_airports_sidecar(config.airports_path) if config.airports_path else None
        )
        raw = load_trajectories(config.input_path, config.input_format, airports).trajectories
    else:
        synth_cfg = dataclasses.replace(config.synth, seed=config.seed, period_s=config.period_s)
        raw = generate_corpus(synth_cfg)
    flights = []
    for traj in raw:
        traj = resample(traj, config.period_s, config.max_gap_s)
        traj = filter_outliers(traj, config.max_jump_km)
        if len(traj.points) >= config.window_len:
            flights.append(traj)
    return flights


def _training_windows(config: PipelineConfig, flights: Sequence[Trajectory]) -> list[FeatureWindow]:
    windows: list[FeatureWindow] = []
    for traj in flights:
        phases = label_phases(traj, config.phase)
        windows.extend(
            windows_from_trajectory(traj, phases, None, config.window_len, config.train_stride)
        )
    return windows


def _build_suites(config: PipelineConfig, eval_flights: Sequence[Trajectory], out: Path):
    entries_by_dataset, suite_manifest = build_eval_suite(eval_flights, config.suite)
    suites: dict[str, list[FeatureWindow]] = {}
    for dataset, entries in entries_by_dataset.items():
        save_labeled_trajectories(entries, out / "suites" / f"{dataset}.trajectories.jsonl")
        windows: list[FeatureWindow] = []
        for traj, labels in entries:
            phases = label_phases(traj, config.phase)
            windows.extend(
                windows_from_trajectory(traj, phases, labels, config.window_len, config.eval_stride)
            )
        write_records(windows, out / "suites" / f"{dataset}.jsonl")
        suites[dataset] = windows
    return suites, suite_manifest


def _train_detectors(config: PipelineConfig, train_windows, out: Path):
    models: dict[str, object] = {}
    losses: list[tuple[str, int, float, float]] = []
    for name in config.detectors:
        if name == DETECTOR_DAE:
            model = DaeModel(dataclasses.replace(config.model, discriminate=True), seed=config.seed)
        elif name == DETECTOR_LSTM_AE:
            model = DaeModel(dataclasses.replace(config.model, discriminate=False), seed=config.seed)
        elif name == DETECTOR_IFOREST:
            forest = IsolationForest(config.iforest_trees, config.iforest_subsample, config.seed)
            forest.fit(flatten_windows(train_windows))
            models[name] = forest
            continue
        else:
            raise ValueError(f"unknown detector {name!r}")
        result = train(model, train_windows, config.train)
        losses.extend(
            (name, epoch, tl, vl)
            for epoch, (tl, vl) in enumerate(zip(result.train_losses, result.val_losses))
        )
        models[name] = model
    return models, losses


def _calibrate_detectors(config: PipelineConfig, models: dict, train_windows, out: Path):
    for name, model in models.items():
        if isinstance(model, IsolationForest):
            model.calibrate(flatten_windows(train_windows))
            model.save(out / "models" / f"{name}.npz")
        else:
            calibrate_thresholds(model, train_windows)
            save_model(model, out / "models" / f"{name}.npz")


def _detect_all(config: PipelineConfig, models: dict, suites: dict):
    contingencies: dict[tuple[str, str], Contingency] = {}
    traces: dict[str, dict[str, list[tuple]]] = {ds: {} for ds in suites}
    for dataset, windows in suites.items():
        for name, model in models.items():
            if isinstance(model, IsolationForest):
                verdicts = iforest_verdicts(model, windows)
            else:
                verdicts = detect(model, windows)
            contingencies[(dataset, name)] = contingency_from_verdicts(verdicts, windows)
            _collect_traces(traces[dataset], name, verdicts, windows)
    return contingencies, traces


def _collect_traces(per_flight: dict, detector: str, verdicts: Sequence[AnomalyVerdict], windows):
    for v, w in zip(verdicts, windows):
        per_flight.setdefault(v.flight_id, []).append(
            (detector, v.start_timestamp, v.phase.value, v.score, v.threshold_used,
             int(v.flagged), int(w.label))
        )


def _write_artifacts(out: Path, contingencies, traces, losses, manifest) -> None:
    report = EvalReport.from_contingencies(contingencies)
    _write_json(out / "report.json", report.to_dict())
    (out / "report.csv").write_text(report.to_csv())

    loss_lines = ["detector,epoch,train_loss,val_loss"]
    loss_lines += [f"{d},{e},{tl!r},{vl!r}" for d, e, tl, vl in losses]
    (out / "losses.csv").write_text("\n".join(loss_lines) + "\n")

    for dataset, flights in traces.items():
        ds_dir = out / "traces" / dataset
        ds_dir.mkdir(parents=True, exist_ok=True)
        for flight_id, rows in flights.items():
            lines = ["detector,start_timestamp,phase,score,threshold,flagged,label"]
            lines += [
                f"{d},{ts!r},{ph},{sc!r},{th!r},{fl},{lb}"
                for d, ts, ph, sc, th, fl, lb in rows
            ]
            (ds_dir / f"{flight_id}.csv").write_text("\n".join(lines) + "\n")

    _write_json(out / "manifest.json", manifest)
