"""Metrics, report assembly and the baseline detectors.

All detectors are judged the same way: per-window verdicts against
per-window ground-truth labels of the evaluation records, accumulated into a
2x2 contingency table per (dataset, detector) plus a Total row per detector.

Division-by-zero conventions follow the no-positives case: Recall = NaN and
F1 = 0 when there are no actual positives, FPR = 0 when there are no actual
negatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dae import (
    AnomalyVerdict,
    DaeModel,
    ModelConfig,
    TrainConfig,
    TrainResult,
    calibrate_thresholds,
    detect,
    train,
)
from .dataset import FeatureWindow
from .errors import ContractError
from .iforest import IsolationForest
from .phase import Phase

IFOREST_TREES = 100
IFOREST_SUBSAMPLE = 256


@dataclass(frozen=True)
class Contingency:
    """2x2 confusion counts over evaluated windows."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_pairs(cls, flagged: Sequence[bool], labels: Sequence[int]) -> "Contingency":
        if len(flagged) != len(labels):
            raise ContractError("flagged/labels length mismatch")
        tp = fp = fn = tn = 0
        for f, y in zip(flagged, labels):
            if y:
                tp, fn = (tp + 1, fn) if f else (tp, fn + 1)
            else:
                fp, tn = (fp + 1, tn) if f else (fp, tn + 1)
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)

    def __add__(self, other: "Contingency") -> "Contingency":
        return Contingency(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    recall: float
    fpr: float
    f1: float


def compute_metrics(c: Contingency) -> Metrics:
    """Accuracy, Recall, FPR and F1 from contingency counts.

    Recall is NaN (and F1 is 0) when there are no actual positives; FPR is 0
    when there are no actual negatives.
    """
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ContractError("negative contingency counts")
    total = c.total
    accuracy = (c.tp + c.tn) / total if total else float("nan")
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else float("nan")
    fpr = c.fp / (c.fp + c.tn) if (c.fp + c.tn) else 0.0
    denom = 2 * c.tp + c.fp + c.fn
    f1 = 2 * c.tp / denom if denom else 0.0
    return Metrics(accuracy=accuracy, recall=recall, fpr=fpr, f1=f1)


TOTAL_DATASET = "Total"


@dataclass
class ReportRow:
    dataset: str
    detector: str
    contingency: Contingency
    metrics: Metrics


@dataclass
class EvalReport:
    """Per-dataset rows plus one Total row per detector."""

    rows: list[ReportRow]

    @classmethod
    def from_contingencies(cls, per_dataset: dict[tuple[str, str], Contingency]) -> "EvalReport":
        rows = [
            ReportRow(ds, det, c, compute_metrics(c))
            for (ds, det), c in per_dataset.items()
        ]
        detectors = list(dict.fromkeys(det for _, det in per_dataset))
        for det in detectors:
            total = Contingency()
            for (ds, d), c in per_dataset.items():
                if d == det:
                    total = total + c
            rows.append(ReportRow(TOTAL_DATASET, det, total, compute_metrics(total)))
        return cls(rows)

    def row(self, dataset: str, detector: str) -> ReportRow:
        for r in self.rows:
            if r.dataset == dataset and r.detector == detector:
                return r
        raise KeyError((dataset, detector))

    def to_dict(self) -> dict:
        def clean(x: float):
            return None if math.isnan(x) else x

        return {
            "rows": [
                {
                    "dataset": r.dataset,
                    "detector": r.detector,
                    "tp": r.contingency.tp,
                    "fp": r.contingency.fp,
                    "fn": r.contingency.fn,
                    "tn": r.contingency.tn,
                    "accuracy": clean(r.metrics.accuracy),
                    "recall": clean(r.metrics.recall),
                    "fpr": clean(r.metrics.fpr),
                    "f1": clean(r.metrics.f1),
                }
                for r in self.rows
            ]
        }

    def to_csv(self) -> str:
        lines = ["dataset,detector,TP,FP,FN,TN,acc,recall,fpr,f1"]
        for r in self.rows:
            lines.append(
                f"{r.dataset},{r.detector},{r.contingency.tp},{r.contingency.fp},"
                f"{r.contingency.fn},{r.contingency.tn},{r.metrics.accuracy!r},"
                f"{r.metrics.recall!r},{r.metrics.fpr!r},{r.metrics.f1!r}"
            )
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Baseline detectors
# ---------------------------------------------------------------------------


def lstm_ae_baseline(
    training_records: Sequence[FeatureWindow],
    eval_records: Sequence[FeatureWindow],
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    seed: int = 0,
) -> list[AnomalyVerdict]:
    """Single-decoder auto-encoder with one global 3-sigma threshold.

    Identical architecture and pipeline as the multi-decoder model except
    that every window is routed to the same decoder.
    """
    cfg = model_config or ModelConfig()
    cfg = ModelConfig(**{**cfg.__dict__, "discriminate": False})
    model = DaeModel(cfg, seed=seed)
    train(model, training_records, train_config)
    calibrate_thresholds(model, training_records)
    return detect(model, eval_records)


def flatten_windows(windows: Sequence[FeatureWindow]) -> np.ndarray:
    """Row-major flattening of each (T+1) x M window to one vector."""
    return np.stack([w.values.reshape(-1) for w in windows])


def iforest_verdicts(
    forest: IsolationForest, windows: Sequence[FeatureWindow]
) -> list[AnomalyVerdict]:
    """Verdicts from a fitted, calibrated forest (strict score > threshold)."""
    if forest.threshold is None:
        raise ContractError("forest not calibrated")
    scores = forest.score(flatten_windows(windows))
    return [
        AnomalyVerdict(
            flight_id=w.flight_id,
            start_timestamp=w.start_timestamp,
            phase=Phase(w.phase),
            score=float(s),
            threshold_used=forest.threshold,
            flagged=bool(s > forest.threshold),
        )
        for w, s in zip(windows, scores)
    ]


def isolation_forest(
    training_records: Sequence[FeatureWindow],
    eval_records: Sequence[FeatureWindow],
    trees: int = IFOREST_TREES,
    subsample: int = IFOREST_SUBSAMPLE,
    seed: int = 0,
) -> list[AnomalyVerdict]:
    """Isolation-forest baseline on flattened windows, 3-sigma threshold."""
    forest = IsolationForest(n_trees=trees, subsample=subsample, seed=seed)
    x_train = flatten_windows(training_records)
    forest.fit(x_train)
    forest.calibrate(x_train)
    return iforest_verdicts(forest, eval_records)


def contingency_from_verdicts(
    verdicts: Sequence[AnomalyVerdict], windows: Sequence[FeatureWindow]
) -> Contingency:
    """Pair verdicts with their windows' ground-truth labels."""
    if len(verdicts) != len(windows):
        raise ContractError("verdict/window count mismatch")
    return Contingency.from_pairs([v.flagged for v in verdicts], [w.label for w in windows])
