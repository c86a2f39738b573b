"""Anomaly detection for ADS-B flight trajectories.

A shared recurrent encoder feeds one reconstruction decoder per flight
phase; each decoder gets its own 3-sigma threshold, so phase-atypical
behaviour (a dive judged by the cruise decoder, say) stands out even when
it would look ordinary to a single global model.
"""

__version__ = "0.1.0"

from .attacks import AttackScenario, SuiteConfig, apply_crash, apply_drift, apply_offset, build_eval_suite
from .dae import (
    AnomalyVerdict,
    DaeModel,
    ModelConfig,
    TrainConfig,
    anomaly_score,
    calibrate_thresholds,
    detect,
    load_model,
    save_model,
    train,
)
from .dataset import (
    FeatureWindow,
    FeatureVector,
    Standardizer,
    apply_standardizer,
    extract_features,
    fit_standardizer,
    make_windows,
    read_records,
    restore_order,
    sort_into_minibatches,
    windows_from_trajectory,
    write_records,
)
from .eval import Contingency, EvalReport, compute_metrics, isolation_forest, lstm_ae_baseline
from .geo import GeoPoint, consecutive_delta, initial_bearing, tracking_delta, vincenty_distance
from .iforest import IsolationForest
from .ingest import Airport, Trajectory, TrajectoryPoint, filter_outliers, load_trajectories, resample
from .phase import Phase, PhaseConfig, apply_cruise_override, label_phases, segment_phases
from .pipeline import PipelineConfig, run_pipeline
from .synth import SynthConfig, generate_corpus
