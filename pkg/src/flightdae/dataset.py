"""Feature windows: extraction, standardization, batching and serialization.

Each trajectory point yields M = 5 features, in this fixed order:

    altitude [ft], consecutive_delta [km], tracking_delta [deg],
    vertical_rate [ft/min], groundspeed [kt]

Latitude/longitude enter only through the two derived deltas, which keeps
the models area-agnostic. Windows are (T+1) x M slices of one flight tagged
with the phase of their most recent observation.

Records are serialized as JSON-lines, one window per line:

    {"flight_id": ..., "start_timestamp": ..., "phase": "CRUISE",
     "label": 0, "values": [[...5 floats...] x window length]}

and may be sharded into ``name-{k}-of-{n}.jsonl`` files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, TypeVar

import numpy as np

from .errors import ContractError, DegenerateFeatureError, RecordParseError, UndefinedBearingError
from .geo import consecutive_delta, initial_bearing, tracking_delta
from .ingest import Trajectory
from .phase import PHASES, Phase

FEATURE_NAMES = (
    "altitude",
    "consecutive_delta",
    "tracking_delta",
    "vertical_rate",
    "groundspeed",
)
NUM_FEATURES = len(FEATURE_NAMES)
DEFAULT_WINDOW_LEN = 30

T = TypeVar("T")


class FeatureVector(NamedTuple):
    """One observation's model features, fixed order as FEATURE_NAMES."""

    altitude: float
    consecutive_delta: float
    tracking_delta: float
    vertical_rate: float
    groundspeed: float


@dataclass
class FeatureWindow:
    """A (T+1) x M feature slice of one flight.

    values: float64 array, rows are consecutive resampled observations.
    phase: phase of the LAST observation (verdicts apply to the most
        recent instant).
    label: 1 if any constituent message was altered by an attack.
    """

    values: np.ndarray
    phase: Phase
    label: int
    flight_id: str
    start_timestamp: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != NUM_FEATURES:
            raise ContractError(f"window values must be (T+1)x{NUM_FEATURES}, got {self.values.shape}")


def extract_features(traj: Trajectory, phases: Sequence[Phase]) -> list[tuple[FeatureVector, Phase]]:
    """Compute the per-point feature vectors of a resampled, labeled flight."""
    if len(phases) != len(traj.points):
        raise ContractError(f"{len(phases)} phases for {len(traj.points)} points")
    deltas = consecutive_delta(traj)
    arrival = traj.arrival.position
    out = []
    last_bearing = 0.0
    for point, delta, phase in zip(traj.points, deltas, phases):
        try:
            last_bearing = initial_bearing(point.position, arrival)
        except UndefinedBearingError:
            pass  # sitting on the arrival airport: keep the previous bearing
        out.append(
            (
                FeatureVector(
                    altitude=point.altitude,
                    consecutive_delta=delta,
                    tracking_delta=tracking_delta(point.track, last_bearing),
                    vertical_rate=point.vertical_rate,
                    groundspeed=point.groundspeed,
                ),
                phase,
            )
        )
    return out


def make_windows(
    features: Sequence[tuple[FeatureVector, Phase]],
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = 1,
    *,
    flight_id: str = "",
    timestamps: Sequence[float] | None = None,
    labels: Sequence[int] | None = None,
) -> list[FeatureWindow]:
    """Slide a window of `window_len` rows over one flight's features.

    Returns an empty list when there are fewer than `window_len` rows.
    The window is tagged with the phase of its last row and labeled 1 if
    any row's message label is 1.
    """
    if stride < 1:
        raise ContractError(f"stride must be >= 1, got {stride}")
    n = len(features)
    if n < window_len:
        return []
    if timestamps is not None and len(timestamps) != n:
        raise ContractError("timestamps length mismatch")
    if labels is not None and len(labels) != n:
        raise ContractError("labels length mismatch")

    matrix = np.array([fv for fv, _ in features], dtype=np.float64)
    label_arr = np.asarray(labels if labels is not None else np.zeros(n), dtype=np.int64)
    windows = []
    for start in range(0, n - window_len + 1, stride):
        end = start + window_len
        windows.append(
            FeatureWindow(
                values=matrix[start:end].copy(),
                phase=features[end - 1][1],
                label=int(label_arr[start:end].any()),
                flight_id=flight_id,
                start_timestamp=float(timestamps[start]) if timestamps is not None else float(start),
            )
        )
    return windows


def windows_from_trajectory(
    traj: Trajectory,
    phases: Sequence[Phase],
    labels: Sequence[int] | None = None,
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = 1,
) -> list[FeatureWindow]:
    """extract_features + make_windows for one flight."""
    feats = extract_features(traj, phases)
    return make_windows(
        feats,
        window_len,
        stride,
        flight_id=traj.flight_id,
        timestamps=[p.timestamp for p in traj.points],
        labels=labels,
    )


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score statistics fitted on training windows."""

    mean: np.ndarray  # (M,)
    std: np.ndarray  # (M,)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_standardizer(windows: Sequence[FeatureWindow]) -> Standardizer:
    """Fit per-feature mean/std over all rows of the training windows.

    Raises:
        DegenerateFeatureError: a feature is constant (std = 0).
    """
    if not windows:
        raise ContractError("cannot fit a standardizer on zero windows")
    rows = np.concatenate([w.values for w in windows], axis=0)
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    for name, s in zip(FEATURE_NAMES, std):
        if s <= 0.0 or not math.isfinite(s):
            raise DegenerateFeatureError(name)
    return Standardizer(mean=mean, std=std)


def apply_standardizer(standardizer: Standardizer, windows: Sequence[FeatureWindow]) -> list[FeatureWindow]:
    """Z-score every window with the (training) statistics; returns new windows."""
    return [replace(w, values=standardizer.transform(w.values)) for w in windows]


# ---------------------------------------------------------------------------
# Discriminant sorting
# ---------------------------------------------------------------------------


def sort_into_minibatches(
    batch: Sequence[FeatureWindow],
) -> tuple[dict[Phase, list[FeatureWindow]], dict[Phase, list[int]]]:
    """Split a batch into per-phase mini-batches plus a permutation record.

    Every phase is present in the result (possibly as an empty list). The
    record maps each phase to the original indices of its windows, which is
    enough for restore_order to rebuild the input order exactly.
    """
    groups: dict[Phase, list[FeatureWindow]] = {p: [] for p in PHASES}
    record: dict[Phase, list[int]] = {p: [] for p in PHASES}
    for i, w in enumerate(batch):
        groups[Phase(w.phase)].append(w)
        record[Phase(w.phase)].append(i)
    return groups, record


def restore_order(outputs: dict, record: dict) -> list:
    """Invert sort_into_minibatches: place per-group outputs at their indices.

    Works for any per-group payload (windows, arrays, scores) as long as the
    group sizes match the permutation record.

    Raises:
        ContractError: group keys or sizes disagree with the record.
    """
    if set(outputs) != set(record):
        raise ContractError(f"output keys {set(outputs)} != record keys {set(record)}")
    total = sum(len(v) for v in record.values())
    restored: list = [None] * total
    for key, indices in record.items():
        group = outputs[key]
        if len(group) != len(indices):
            raise ContractError(
                f"group {key}: {len(group)} outputs for {len(indices)} recorded indices"
            )
        for idx, item in zip(indices, group):
            restored[idx] = item
    return restored


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def shard_paths(path: str | Path, shards: int) -> list[Path]:
    """Shard file names: base.jsonl -> base-{k}-of-{n}.jsonl."""
    path = Path(path)
    if shards == 1:
        return [path]
    return [path.with_name(f"{path.stem}-{k}-of-{shards}{path.suffix}") for k in range(shards)]


def write_records(windows: Sequence[FeatureWindow], path: str | Path, shards: int = 1) -> list[Path]:
    """Write windows as JSON-lines, optionally sharded round-robin-free.

    Windows are split into `shards` contiguous runs so that concatenating
    the shards in k-order reproduces the original order. Returns the paths
    written.
    """
    if shards < 1:
        raise ContractError(f"shards must be >= 1, got {shards}")
    paths = shard_paths(path, shards)
    per = math.ceil(len(windows) / shards) if windows else 0
    for k, shard_file in enumerate(paths):
        chunk = windows[k * per: (k + 1) * per] if per else []
        with open(shard_file, "w") as fh:
            for w in chunk:
                fh.write(
                    json.dumps(
                        {
                            "flight_id": w.flight_id,
                            "start_timestamp": w.start_timestamp,
                            "phase": w.phase.value,
                            "label": int(w.label),
                            "values": w.values.tolist(),
                        }
                    )
                )
                fh.write("\n")
    return paths


def read_records(path: str | Path | Iterable[str | Path]) -> list[FeatureWindow]:
    """Read windows from one file, a list of files, or a sharded base name.

    A base name whose shards exist (``base-0-of-4.jsonl``...) is expanded and
    read in shard order.

    Raises:
        RecordParseError: corrupt/truncated record, carrying its index.
    """
    if isinstance(path, (str, Path)):
        paths = _resolve_shards(Path(path))
    else:
        paths = [Path(p) for p in path]

    windows: list[FeatureWindow] = []
    index = 0
    for p in paths:
        with open(p) as fh:
            for line in fh:
                if not line.strip():
                    continue
                windows.append(_parse_record(line, index, p))
                index += 1
    return windows


def _resolve_shards(path: Path) -> list[Path]:
    if path.exists():
        return [path]
    found = sorted(path.parent.glob(f"{path.stem}-*-of-*{path.suffix}"))
    if not found:
        raise FileNotFoundError(f"no record file or shards found for {path}")

    def shard_key(p: Path) -> int:
        return int(p.stem[len(path.stem) + 1:].split("-of-")[0])

    return sorted(found, key=shard_key)


def _parse_record(line: str, index: int, path: Path) -> FeatureWindow:
    try:
        obj = json.loads(line)
        values = np.asarray(obj["values"], dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != NUM_FEATURES:
            raise ValueError(f"values shape {values.shape} is not (T+1)x{NUM_FEATURES}")
        return FeatureWindow(
            values=values,
            phase=Phase(obj["phase"]),
            label=int(obj["label"]),
            flight_id=str(obj["flight_id"]),
            start_timestamp=float(obj["start_timestamp"]),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise RecordParseError(index, path, str(e)) from e
