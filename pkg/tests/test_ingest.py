import csv
import json
import math

import pytest

from flightdae.errors import ContractError, EmptyInputError
from flightdae.geo import GeoPoint, spherical_step, vincenty_distance
from flightdae.ingest import (
    Airport,
    TrajectoryPoint,
    filter_outliers,
    load_airports_sidecar,
    load_trajectories,
    resample,
)

from conftest import make_point, make_trajectory

COLUMNS = [
    "timestamp", "icao24", "callsign", "latitude", "longitude", "altitude",
    "groundspeed", "vertical_rate", "track", "departure_icao", "arrival_icao",
    "departure_lat", "departure_lon", "arrival_lat", "arrival_lon",
]


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def base_row(t, icao="abc001", callsign="FLT1", lat=50.0, lon=10.0):
    return {
        "timestamp": t, "icao24": icao, "callsign": callsign,
        "latitude": lat, "longitude": lon, "altitude": 30000, "groundspeed": 450,
        "vertical_rate": 0, "track": 40, "departure_icao": "ZDEP",
        "arrival_icao": "ZARR", "departure_lat": 47.0, "departure_lon": 7.0,
        "arrival_lat": 54.0, "arrival_lon": 17.0,
    }


class TestLoadTrajectories:
    def test_two_flights(self, tmp_path):
        rows = [base_row(t) for t in range(100)]
        rows += [base_row(t, icao="def002", callsign="FLT2") for t in range(100)]
        path = tmp_path / "raw.csv"
        write_csv(path, rows)
        result = load_trajectories(path, "csv")
        assert len(result.trajectories) == 2
        assert sorted(len(t.points) for t in result.trajectories) == [100, 100]
        assert result.dropped_rows == 0

    def test_missing_latitude_dropped_and_counted(self, tmp_path):
        rows = [base_row(t) for t in range(5)]
        rows[2]["latitude"] = ""
        path = tmp_path / "raw.csv"
        write_csv(path, rows)
        result = load_trajectories(path, "csv")
        assert result.dropped_rows == 1
        assert len(result.trajectories[0].points) == 4

    def test_shuffled_timestamps_sorted(self, tmp_path):
        times = [8, 2, 6, 0, 4]
        rows = [base_row(t) for t in times]
        path = tmp_path / "raw.csv"
        write_csv(path, rows)
        result = load_trajectories(path, "csv")
        got = [p.timestamp for p in result.trajectories[0].points]
        assert got == sorted(float(t) for t in times)

    def test_jsonl_format(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        with open(path, "w") as fh:
            for t in range(3):
                fh.write(json.dumps(base_row(t)) + "\n")
        result = load_trajectories(path, "jsonl")
        assert len(result.trajectories[0].points) == 3

    def test_airports_sidecar(self, tmp_path):
        sidecar = tmp_path / "airports.csv"
        sidecar.write_text("icao,lat,lon\nZDEP,47.0,7.0\nZARR,54.0,17.0\n")
        airports = load_airports_sidecar(sidecar)
        rows = [base_row(t) for t in range(3)]
        for row in rows:  # inline airport columns absent
            for k in ("departure_lat", "departure_lon", "arrival_lat", "arrival_lon"):
                del row[k]
        path = tmp_path / "raw.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        result = load_trajectories(path, "csv", airports)
        assert result.trajectories[0].arrival == Airport("ZARR", 54.0, 17.0)

    def test_zero_valid_rows_raises(self, tmp_path):
        rows = [base_row(0)]
        rows[0]["longitude"] = "not-a-number"
        path = tmp_path / "raw.csv"
        write_csv(path, rows)
        with pytest.raises(EmptyInputError):
            load_trajectories(path, "csv")

    def test_unreadable_file_raises(self, tmp_path):
        with pytest.raises(OSError):
            load_trajectories(tmp_path / "missing.csv", "csv")

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "raw.csv"
        write_csv(path, [base_row(0)])
        with pytest.raises(ContractError):
            load_trajectories(path, "parquet")


class TestResample:
    def test_downsampling(self):
        traj = make_trajectory([make_point(t=t) for t in (0.0, 0.5, 1.0, 2.0)])
        out = resample(traj, period=2.0)
        assert [p.timestamp for p in out.points] == [0.0, 2.0]

    def test_identity_on_grid(self):
        traj = make_trajectory([make_point(t=t, lon=10 + t) for t in (0.0, 2.0, 4.0)])
        out = resample(traj, period=2.0)
        assert out.points == traj.points

    def test_idempotent(self):
        traj = make_trajectory(
            [make_point(t=t, lon=10 + 0.1 * t) for t in (0.0, 0.7, 2.0, 3.1, 4.0, 6.5, 8.0)]
        )
        once = resample(traj)
        twice = resample(once)
        assert once.points == twice.points

    def test_gap_split_keeps_longest_segment(self):
        traj = make_trajectory([make_point(t=t) for t in (0.0, 2.0, 50.0, 52.0)])
        out = resample(traj, period=2.0, max_gap=30.0)
        # segments are {0, 2} and {50, 52}: equally long, earliest kept
        assert [p.timestamp for p in out.points] == [0.0, 2.0]

    def test_longest_segment_wins(self):
        times = [0.0, 2.0, 100.0, 102.0, 104.0, 106.0]
        traj = make_trajectory([make_point(t=t) for t in times])
        out = resample(traj, period=2.0, max_gap=30.0)
        assert [p.timestamp for p in out.points] == [100.0, 102.0, 104.0, 106.0]

    def test_locf_carries_last_observation(self):
        traj = make_trajectory(
            [make_point(t=0.0, alt=1000.0), make_point(t=3.0, alt=2000.0), make_point(t=4.0, alt=3000.0)]
        )
        out = resample(traj, period=2.0)
        assert [p.timestamp for p in out.points] == [0.0, 2.0, 4.0]
        assert [p.altitude for p in out.points] == [1000.0, 1000.0, 3000.0]

    def test_all_gap_raises(self):
        traj = make_trajectory([make_point(t=t) for t in (0.0, 100.0, 200.0)])
        with pytest.raises(EmptyInputError):
            resample(traj, period=2.0, max_gap=30.0)

    def test_uniform_cadence_invariant(self):
        traj = make_trajectory(
            [make_point(t=t, lon=10 + 0.01 * t) for t in
             (0.0, 1.0, 2.5, 4.0, 5.0, 7.5, 9.0, 11.0, 12.0)]
        )
        out = resample(traj, period=2.0)
        steps = [b.timestamp - a.timestamp for a, b in zip(out.points, out.points[1:])]
        assert all(s == pytest.approx(2.0) for s in steps)


def _fly(points_spec):
    """points_spec: list of (lat, lon); timestamps 2 s apart."""
    return make_trajectory(
        [make_point(t=2.0 * i, lat=lat, lon=lon) for i, (lat, lon) in enumerate(points_spec)]
    )


class TestFilterOutliers:
    def test_constant_position_unchanged(self):
        traj = make_trajectory([make_point(t=2.0 * i) for i in range(10)])
        out = filter_outliers(traj, max_jump=20.0)
        assert out.points == traj.points

    def test_isolated_teleport_removed(self):
        # one point displaced ~500 km; its neighbors are mutually consistent
        good = [(50.0, 10.0 + 0.005 * i) for i in range(6)]
        spec = good[:3] + [(54.5, 10.0)] + good[3:]
        traj = _fly(spec)
        displaced = traj.points[3]
        before = traj.points[2]
        after = traj.points[4]
        assert vincenty_distance(before.position, displaced.position) > 50.0
        assert vincenty_distance(before.position, after.position) <= 50.0
        out = filter_outliers(traj, max_jump=50.0)
        assert len(out.points) == len(traj.points) - 1
        assert displaced not in out.points

    def test_genuine_cruise_unchanged(self):
        # 500 kt is ~0.51 km per 2 s step: far below the 50 km jump limit
        step_km = 500.0 * 1.852 * 2.0 / 3600.0
        pts = [(50.0, 10.0)]
        for _ in range(20):
            pts.append(spherical_step(pts[-1][0], pts[-1][1], 40.0, step_km))
        traj = _fly(pts)
        out = filter_outliers(traj, max_jump=50.0)
        assert out.points == traj.points

    def test_corrupt_first_point_dropped(self):
        pts = [(60.0, 20.0)] + [(50.0, 10.0 + 0.005 * i) for i in range(5)]
        out = filter_outliers(_fly(pts), max_jump=20.0)
        assert len(out.points) == 5
        assert out.points[0].latitude == 50.0

    def test_never_reorders_nor_adds(self, rng):
        pts = [(50.0 + rng.uniform(-1, 1), 10.0 + rng.uniform(-1, 1)) for _ in range(30)]
        traj = _fly(pts)
        out = filter_outliers(traj, max_jump=30.0)
        assert len(out.points) <= len(traj.points)
        kept_times = [p.timestamp for p in out.points]
        assert kept_times == sorted(kept_times)

    def test_surviving_pairs_within_max_jump(self, rng):
        pts = [(50.0, 10.0)]
        for _ in range(40):
            if rng.uniform() < 0.2:  # inject garbage teleports, some adjacent
                pts.append((50.0 + rng.uniform(-4, 4), 10.0 + rng.uniform(-4, 4)))
            else:
                pts.append(spherical_step(pts[-1][0], pts[-1][1], 40.0, 0.5))
        out = filter_outliers(_fly(pts), max_jump=20.0)
        for a, b in zip(out.points, out.points[1:]):
            assert vincenty_distance(a.position, b.position) <= 20.0


class TestTypes:
    def test_point_validation(self):
        with pytest.raises(ValueError):
            TrajectoryPoint(0, 91.0, 0, 0, 0, 0, 0)
        with pytest.raises(ValueError):
            TrajectoryPoint(0, 0, 0, 0, 0, 0, 360.0)

    def test_trajectory_requires_increasing_timestamps(self):
        with pytest.raises(ContractError):
            make_trajectory([make_point(t=2.0), make_point(t=2.0)])

    def test_trajectory_nonempty(self):
        with pytest.raises(EmptyInputError):
            make_trajectory([])
