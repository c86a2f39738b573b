"""Loading, resampling and outlier filtering of raw trajectory records.

Input is one record per received message, either delimiter-separated text
(CSV with a header) or JSON-lines. Mandatory columns:

    timestamp, icao24, callsign, latitude, longitude, altitude, groundspeed,
    vertical_rate, track, departure_icao, arrival_icao,
    departure_lat, departure_lon, arrival_lat, arrival_lon

An optional ``flight_id`` column overrides the default flight key of
``{icao24}_{callsign}``. Airport coordinates may instead come from a sidecar
file mapping ICAO code to lat/lon, in which case only ``departure_icao`` and
``arrival_icao`` are required for the airports.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ContractError, EmptyInputError
from .geo import GeoPoint, vincenty_distance

logger = logging.getLogger(__name__)

DEFAULT_PERIOD_S = 2.0
DEFAULT_MAX_GAP_S = 30.0
DEFAULT_MAX_JUMP_KM = 20.0

_MANDATORY_FIELDS = (
    "timestamp",
    "icao24",
    "callsign",
    "latitude",
    "longitude",
    "altitude",
    "groundspeed",
    "vertical_rate",
    "track",
)


@dataclass(frozen=True)
class TrajectoryPoint:
    """One decoded surveillance observation."""

    timestamp: float  # seconds since epoch
    latitude: float  # degrees, [-90, 90]
    longitude: float  # degrees, [-180, 180]
    altitude: float  # feet
    groundspeed: float  # knots
    vertical_rate: float  # feet/minute
    track: float  # degrees, [0, 360)

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        if not 0.0 <= self.track < 360.0:
            raise ValueError(f"track {self.track} out of [0, 360)")

    @property
    def position(self) -> GeoPoint:
        return GeoPoint(self.latitude, self.longitude)


@dataclass(frozen=True)
class Airport:
    """Airport identity and position."""

    icao_code: str
    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")

    @property
    def position(self) -> GeoPoint:
        return GeoPoint(self.latitude, self.longitude)


@dataclass
class Trajectory:
    """An ordered flight track between two airports."""

    flight_id: str
    points: list[TrajectoryPoint]
    departure: Airport
    arrival: Airport
    callsign: str = ""
    icao24: str = ""

    def __post_init__(self):
        if not self.points:
            raise EmptyInputError(f"trajectory {self.flight_id} has no points")
        ts = [p.timestamp for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ContractError(f"trajectory {self.flight_id}: timestamps not strictly increasing")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class LoadResult:
    """Outcome of loading a raw record file."""

    trajectories: list[Trajectory]
    dropped_rows: int = 0
    row_count: int = 0


def load_airports_sidecar(path: str | Path) -> dict[str, Airport]:
    """Read an ``icao,lat,lon`` sidecar (CSV with header or JSON mapping)."""
    path = Path(path)
    text = path.read_text()
    airports: dict[str, Airport] = {}
    if text.lstrip().startswith("{"):
        for code, coords in json.loads(text).items():
            airports[code] = Airport(code, float(coords["lat"]), float(coords["lon"]))
        return airports
    for row in csv.DictReader(text.splitlines()):
        code = row["icao"].strip()
        airports[code] = Airport(code, float(row["lat"]), float(row["lon"]))
    return airports


def load_trajectories(
    path: str | Path,
    format: str = "csv",
    airports: dict[str, Airport] | None = None,
) -> LoadResult:
    """Load raw records into one Trajectory per flight.

    Rows missing a mandatory field (or with out-of-range values) are dropped
    and counted in ``LoadResult.dropped_rows``. Points are sorted by
    timestamp within each flight; duplicate timestamps keep the first row.

    Args:
        path: record file.
        format: ``"csv"`` or ``"jsonl"``.
        airports: optional icao -> Airport map replacing the inline
            ``departure_lat``/.../``arrival_lon`` columns.

    Raises:
        OSError: unreadable file.
        EmptyInputError: no valid rows.
        ContractError: unknown format tag.
    """
    path = Path(path)
    if format == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    elif format == "jsonl":
        with open(path) as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    else:
        raise ContractError(f"unknown input format {format!r}")

    flights: dict[str, dict] = {}
    dropped = 0
    for row in rows:
        parsed = _parse_row(row, airports)
        if parsed is None:
            dropped += 1
            continue
        flight_id, point, dep, arr, callsign, icao24 = parsed
        bucket = flights.setdefault(
            flight_id,
            {"points": [], "departure": dep, "arrival": arr, "callsign": callsign, "icao24": icao24},
        )
        bucket["points"].append(point)

    trajectories = []
    for flight_id, bucket in flights.items():
        points = sorted(bucket["points"], key=lambda p: p.timestamp)
        deduped = [points[0]]
        for p in points[1:]:
            if p.timestamp > deduped[-1].timestamp:
                deduped.append(p)
        dropped += len(points) - len(deduped)
        trajectories.append(
            Trajectory(
                flight_id=flight_id,
                points=deduped,
                departure=bucket["departure"],
                arrival=bucket["arrival"],
                callsign=bucket["callsign"],
                icao24=bucket["icao24"],
            )
        )

    if dropped:
        logger.info("dropped %d invalid rows from %s", dropped, path)
    if not trajectories:
        raise EmptyInputError(f"no valid rows in {path}")
    return LoadResult(trajectories, dropped_rows=dropped, row_count=len(rows))


def _parse_row(row: dict, airports: dict[str, Airport] | None):
    """Parse one raw record; None if any mandatory field is missing/invalid."""
    try:
        values = {k: float(row[k]) for k in _MANDATORY_FIELDS if k not in ("icao24", "callsign")}
        icao24 = str(row["icao24"]).strip()
        callsign = str(row["callsign"]).strip()
        if not icao24:
            return None
        if airports is not None:
            dep = airports[str(row["departure_icao"]).strip()]
            arr = airports[str(row["arrival_icao"]).strip()]
        else:
            dep = Airport(
                str(row["departure_icao"]).strip(),
                float(row["departure_lat"]),
                float(row["departure_lon"]),
            )
            arr = Airport(
                str(row["arrival_icao"]).strip(),
                float(row["arrival_lat"]),
                float(row["arrival_lon"]),
            )
        point = TrajectoryPoint(
            timestamp=values["timestamp"],
            latitude=values["latitude"],
            longitude=values["longitude"],
            altitude=values["altitude"],
            groundspeed=values["groundspeed"],
            vertical_rate=values["vertical_rate"],
            track=values["track"] % 360.0,
        )
    except (KeyError, TypeError, ValueError):
        return None
    if any(not math.isfinite(v) for v in values.values()):
        return None
    flight_id = str(row.get("flight_id") or f"{icao24}_{callsign}")
    return flight_id, point, dep, arr, callsign, icao24


def resample(
    traj: Trajectory,
    period: float = DEFAULT_PERIOD_S,
    max_gap: float = DEFAULT_MAX_GAP_S,
) -> Trajectory:
    """Resample a trajectory to a uniform cadence of one point per `period`.

    Output timestamps form the arithmetic grid t0, t0+period, ... and each
    output point carries the last observation at or before its grid time
    (last-observation-carried-forward; no positions are fabricated). Raw
    gaps longer than `max_gap` split the track; only the longest segment
    (earliest on ties) is kept, so downstream windows never span a coverage
    hole. Idempotent on already-resampled input.

    Raises:
        EmptyInputError: the longest segment has fewer than two points.
    """
    if period <= 0:
        raise ContractError(f"period must be positive, got {period}")

    segments: list[list[TrajectoryPoint]] = [[traj.points[0]]]
    for prev, cur in zip(traj.points, traj.points[1:]):
        if cur.timestamp - prev.timestamp > max_gap:
            segments.append([])
        segments[-1].append(cur)
    best = max(segments, key=len)  # max() keeps the earliest on ties

    if len(best) < 2:
        raise EmptyInputError(
            f"trajectory {traj.flight_id}: no segment with >= 2 points after gap split"
        )

    t0 = best[0].timestamp
    t_end = best[-1].timestamp
    out: list[TrajectoryPoint] = []
    idx = 0
    steps = int(math.floor((t_end - t0) / period + 1e-9))
    for k in range(steps + 1):
        t = t0 + k * period
        while idx + 1 < len(best) and best[idx + 1].timestamp <= t + 1e-9:
            idx += 1
        out.append(replace(best[idx], timestamp=t))

    return replace(traj, points=out)


def filter_outliers(traj: Trajectory, max_jump: float = DEFAULT_MAX_JUMP_KM) -> Trajectory:
    """Drop points reachable only by a physically impossible leap.

    Walks the resampled track keeping an anchor at the last retained point;
    any point farther than `max_jump` from the anchor is dropped. This
    removes isolated teleports (the successor is still close to the anchor,
    so it survives) and also strands of consecutive corrupt points, guaranteeing
    every surviving consecutive pair is within `max_jump`. A corrupt FIRST
    point is detected separately: if point 0 disagrees with points 1 and 2
    (which agree with each other), point 0 is dropped instead.

    Never reorders and never adds points.
    """
    points = traj.points
    if len(points) < 2:
        return traj

    def dist(p, q) -> float:
        return vincenty_distance(p.position, q.position)

    start = 0
    while (
        len(points) - start >= 3
        and dist(points[start], points[start + 1]) > max_jump
        and dist(points[start + 1], points[start + 2]) <= max_jump
    ):
        start += 1

    kept = [points[start]]
    for p in points[start + 1:]:
        if dist(kept[-1], p) <= max_jump:
            kept.append(p)

    if len(kept) != len(points):
        logger.info(
            "flight %s: removed %d outlier points (max_jump=%.1f km)",
            traj.flight_id, len(points) - len(kept), max_jump,
        )
    return replace(traj, points=kept)
