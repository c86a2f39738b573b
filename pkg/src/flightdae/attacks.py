"""Synthesis of false-data-injection scenarios on clean trajectories.

Three alteration kinds are supported, each confined to a message index range
[start_index, end_index) and returning per-message 0/1 labels:

  DRIFT   target feature (altitude or groundspeed) shifted by a growing
          multiple of step_magnitude: message k gets (k - start + 1) * step.
  OFFSET  constant additive shift of latitude and longitude, producing a
          parallel ghost trajectory.
  CRASH   from start_index the aircraft dives: altitude follows a constant
          negative vertical rate, groundspeed decays linearly (clamped at 0)
          and positions continue along the frozen track at the decayed
          speed; the signal stops when the altitude reaches the ground.

Derived features (deltas) are NOT touched here: they are recomputed from the
altered points by the feature-extraction stage, exactly like for real data.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import ContractError
from .geo import spherical_step
from .ingest import Trajectory, TrajectoryPoint

logger = logging.getLogger(__name__)

DRIFT = "DRIFT"
OFFSET = "OFFSET"
CRASH = "CRASH"

DEFAULT_DRIFT_STEP_FT = -25.0
DEFAULT_CRASH_VERTICAL_RATE = -3000.0  # ft/min
DEFAULT_CRASH_GS_DECAY = 2.0  # kt per message
DEFAULT_CRASH_GROUND_FT = 0.0


@dataclass(frozen=True)
class AttackScenario:
    """Declarative description of one alteration."""

    kind: str  # DRIFT | OFFSET | CRASH
    start_index: int
    end_index: int
    target_feature: str = "altitude"  # DRIFT: altitude | groundspeed
    step_magnitude: float = DEFAULT_DRIFT_STEP_FT  # DRIFT: units per message
    offset_degrees: float = 1.0  # OFFSET: added to both latitude and longitude
    crash_vertical_rate: float = DEFAULT_CRASH_VERTICAL_RATE
    crash_gs_decay: float = DEFAULT_CRASH_GS_DECAY
    crash_ground_altitude: float = DEFAULT_CRASH_GROUND_FT

    def validate(self, n_points: int) -> None:
        if self.kind not in (DRIFT, OFFSET, CRASH):
            raise ContractError(f"unknown attack kind {self.kind!r}")
        if not (0 <= self.start_index < self.end_index <= n_points):
            raise ContractError(
                f"attack range [{self.start_index}, {self.end_index}) invalid "
                f"for {n_points} points"
            )
        if not all(
            math.isfinite(v)
            for v in (self.step_magnitude, self.offset_degrees, self.crash_vertical_rate)
        ):
            raise ContractError("attack magnitudes must be finite")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "start_index": self.start_index,
            "end_index": self.end_index,
            "target_feature": self.target_feature,
            "step_magnitude": self.step_magnitude,
            "offset_degrees": self.offset_degrees,
            "crash_vertical_rate": self.crash_vertical_rate,
            "crash_gs_decay": self.crash_gs_decay,
            "crash_ground_altitude": self.crash_ground_altitude,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackScenario":
        return cls(**d)


def apply_drift(traj: Trajectory, scenario: AttackScenario) -> tuple[Trajectory, list[int]]:
    """Shift the target feature by a growing multiple of step_magnitude."""
    scenario.validate(len(traj.points))
    if scenario.target_feature not in ("altitude", "groundspeed"):
        raise ContractError(f"drift target {scenario.target_feature!r} unsupported")
    points = list(traj.points)
    labels = [0] * len(points)
    for k in range(scenario.start_index, scenario.end_index):
        shift = (k - scenario.start_index + 1) * scenario.step_magnitude
        p = points[k]
        if scenario.target_feature == "altitude":
            p = replace(p, altitude=p.altitude + shift)
        else:
            p = replace(p, groundspeed=max(0.0, p.groundspeed + shift))
        points[k] = p
        labels[k] = 1
    return _with_points(traj, points), labels


def apply_offset(traj: Trajectory, scenario: AttackScenario) -> tuple[Trajectory, list[int]]:
    """Add a constant lat/lon offset inside the range (parallel trajectory)."""
    scenario.validate(len(traj.points))
    points = list(traj.points)
    labels = [0] * len(points)
    off = scenario.offset_degrees
    for k in range(scenario.start_index, scenario.end_index):
        p = points[k]
        lat = p.latitude + off
        lon = p.longitude + off
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise ContractError(
                f"offset pushes point {k} out of coordinate range ({lat}, {lon})"
            )
        points[k] = replace(p, latitude=lat, longitude=lon)
        labels[k] = 1
    return _with_points(traj, points), labels


def apply_crash(traj: Trajectory, scenario: AttackScenario) -> tuple[Trajectory, list[int]]:
    """Dive from start_index until the ground is reached, then stop the signal.

    Altitude, vertical rate and groundspeed stay mutually consistent per
    2-second step; the track is held at its value at the crash start and the
    positions continue along it at the decaying groundspeed. If the ground is
    not reached before the recording ends, a warning is logged and every
    message from start_index on is still labeled 1.
    """
    scenario.validate(len(traj.points))
    start = scenario.start_index
    period_s = _cadence(traj)
    points = list(traj.points[:start])
    labels = [0] * start

    p = traj.points[start]
    altitude = p.altitude
    groundspeed = p.groundspeed
    track = p.track
    lat, lon = p.latitude, p.longitude
    vr = scenario.crash_vertical_rate
    alt_step = vr * period_s / 60.0  # ft per message
    reached_ground = False

    for k in range(start, len(traj.points)):
        t = traj.points[k].timestamp
        points.append(
            TrajectoryPoint(
                timestamp=t,
                latitude=lat,
                longitude=lon,
                altitude=altitude,
                groundspeed=groundspeed,
                vertical_rate=vr,
                track=track,
            )
        )
        labels.append(1)
        if altitude + alt_step <= scenario.crash_ground_altitude:
            reached_ground = True
            break
        altitude += alt_step
        step_km = groundspeed * 1.852 * period_s / 3600.0
        lat, lon = spherical_step(lat, lon, track, step_km)
        groundspeed = max(0.0, groundspeed - scenario.crash_gs_decay)

    if not reached_ground:
        logger.warning(
            "flight %s: crash from index %d never reaches %.0f ft before the "
            "recording ends", traj.flight_id, start, scenario.crash_ground_altitude,
        )
    return _with_points(traj, points), labels


def apply_attack(traj: Trajectory, scenario: AttackScenario) -> tuple[Trajectory, list[int]]:
    """Dispatch on scenario.kind."""
    if scenario.kind == DRIFT:
        return apply_drift(traj, scenario)
    if scenario.kind == OFFSET:
        return apply_offset(traj, scenario)
    if scenario.kind == CRASH:
        return apply_crash(traj, scenario)
    raise ContractError(f"unknown attack kind {scenario.kind!r}")


def _with_points(traj: Trajectory, points: list[TrajectoryPoint]) -> Trajectory:
    return replace(traj, points=points)


def _cadence(traj: Trajectory) -> float:
    if len(traj.points) < 2:
        return 2.0
    return traj.points[1].timestamp - traj.points[0].timestamp


# ---------------------------------------------------------------------------
# Evaluation suites
# ---------------------------------------------------------------------------

WORLD = "WORLD"
SUITE_DATASETS = (WORLD, DRIFT, OFFSET, CRASH)


@dataclass(frozen=True)
class SuiteConfig:
    """How to attack the clean evaluation flights, per dataset.

    Ranges are fractions of each flight's length so one config applies to
    flights of different durations. ``imports`` maps extra dataset names to
    externally labeled trajectory files (JSON-lines as written by
    flightdae.ingest serialization, each point carrying a ``label``), e.g.
    real recorded incidents.
    """

    drift_step: float = DEFAULT_DRIFT_STEP_FT
    drift_feature: str = "altitude"
    drift_range: tuple[float, float] = (0.30, 0.70)
    offset_degrees: float = 1.0
    offset_range: tuple[float, float] = (0.35, 0.65)
    crash_start: float = 0.45
    crash_vertical_rate: float = DEFAULT_CRASH_VERTICAL_RATE
    crash_gs_decay: float = DEFAULT_CRASH_GS_DECAY
    crash_ground_altitude: float = DEFAULT_CRASH_GROUND_FT
    datasets: tuple[str, ...] = SUITE_DATASETS
    imports: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "drift_step": self.drift_step,
            "drift_feature": self.drift_feature,
            "drift_range": list(self.drift_range),
            "offset_degrees": self.offset_degrees,
            "offset_range": list(self.offset_range),
            "crash_start": self.crash_start,
            "crash_vertical_rate": self.crash_vertical_rate,
            "crash_gs_decay": self.crash_gs_decay,
            "crash_ground_altitude": self.crash_ground_altitude,
            "datasets": list(self.datasets),
            "imports": dict(self.imports),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        if "drift_range" in d:
            d["drift_range"] = tuple(d["drift_range"])
        if "offset_range" in d:
            d["offset_range"] = tuple(d["offset_range"])
        if "datasets" in d:
            d["datasets"] = tuple(d["datasets"])
        return cls(**d)


def scenario_for(traj: Trajectory, dataset: str, cfg: SuiteConfig) -> AttackScenario | None:
    """Concrete scenario for one flight, or None for the untouched dataset."""
    n = len(traj.points)
    if dataset == WORLD:
        return None
    if dataset == DRIFT:
        return AttackScenario(
            kind=DRIFT,
            start_index=int(n * cfg.drift_range[0]),
            end_index=int(n * cfg.drift_range[1]),
            target_feature=cfg.drift_feature,
            step_magnitude=cfg.drift_step,
        )
    if dataset == OFFSET:
        return AttackScenario(
            kind=OFFSET,
            start_index=int(n * cfg.offset_range[0]),
            end_index=int(n * cfg.offset_range[1]),
            offset_degrees=cfg.offset_degrees,
        )
    if dataset == CRASH:
        return AttackScenario(
            kind=CRASH,
            start_index=int(n * cfg.crash_start),
            end_index=n,
            crash_vertical_rate=cfg.crash_vertical_rate,
            crash_gs_decay=cfg.crash_gs_decay,
            crash_ground_altitude=cfg.crash_ground_altitude,
        )
    raise ContractError(f"unknown dataset {dataset!r}")


def build_eval_suite(
    trajectories: Sequence[Trajectory], cfg: SuiteConfig
) -> tuple[dict[str, list[tuple[Trajectory, list[int]]]], dict]:
    """Attacked copies of the clean flights, one list per dataset, plus a manifest.

    WORLD keeps the flights untouched (labels all 0); every other dataset
    applies its scenario to a copy of each flight. The manifest records the
    per-flight scenario parameters so a suite can be replayed exactly.
    """
    suites: dict[str, list[tuple[Trajectory, list[int]]]] = {}
    manifest: dict = {"config": cfg.to_dict(), "datasets": {}}
    for dataset in cfg.datasets:
        entries = []
        scen_log = []
        for traj in trajectories:
            scenario = scenario_for(traj, dataset, cfg)
            if scenario is None:
                entries.append((traj, [0] * len(traj.points)))
                scen_log.append({"flight_id": traj.flight_id, "scenario": None})
            else:
                altered, labels = apply_attack(traj, scenario)
                entries.append((altered, labels))
                scen_log.append({"flight_id": traj.flight_id, "scenario": scenario.to_dict()})
        suites[dataset] = entries
        manifest["datasets"][dataset] = scen_log
    for name, path in cfg.imports.items():
        entries = load_labeled_trajectories(path)
        suites[name] = entries
        manifest["datasets"][name] = [
            {"flight_id": t.flight_id, "scenario": {"imported_from": str(path)}}
            for t, _ in entries
        ]
    return suites, manifest


# -- labeled-trajectory serialization (imports + pipeline artifacts) --------


def save_labeled_trajectories(
    entries: Sequence[tuple[Trajectory, Sequence[int]]], path: str | Path
) -> None:
    """One JSON object per line: flight plus per-point 0/1 labels."""
    with open(path, "w") as fh:
        for traj, labels in entries:
            fh.write(json.dumps({
                "flight_id": traj.flight_id,
                "callsign": traj.callsign,
                "icao24": traj.icao24,
                "departure": {"icao": traj.departure.icao_code,
                              "lat": traj.departure.latitude,
                              "lon": traj.departure.longitude},
                "arrival": {"icao": traj.arrival.icao_code,
                            "lat": traj.arrival.latitude,
                            "lon": traj.arrival.longitude},
                "points": [
                    [p.timestamp, p.latitude, p.longitude, p.altitude,
                     p.groundspeed, p.vertical_rate, p.track, int(label)]
                    for p, label in zip(traj.points, labels)
                ],
            }))
            fh.write("\n")


def load_labeled_trajectories(path: str | Path) -> list[tuple[Trajectory, list[int]]]:
    """Inverse of save_labeled_trajectories."""
    from .ingest import Airport  # local import to avoid a cycle at module load

    entries = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            points = []
            labels = []
            for row in obj["points"]:
                points.append(TrajectoryPoint(*row[:7]))
                labels.append(int(row[7]) if len(row) > 7 else 0)
            traj = Trajectory(
                flight_id=obj["flight_id"],
                points=points,
                departure=Airport(obj["departure"]["icao"], obj["departure"]["lat"],
                                  obj["departure"]["lon"]),
                arrival=Airport(obj["arrival"]["icao"], obj["arrival"]["lat"],
                                obj["arrival"]["lon"]),
                callsign=obj.get("callsign", ""),
                icao24=obj.get("icao24", ""),
            )
            entries.append((traj, labels))
    return entries
