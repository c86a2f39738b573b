import numpy as np
import pytest

from flightdae.ingest import Airport, Trajectory, TrajectoryPoint


def make_point(t=0.0, lat=50.0, lon=10.0, alt=36000.0, gs=460.0, vr=0.0, track=40.0):
    return TrajectoryPoint(
        timestamp=t, latitude=lat, longitude=lon, altitude=alt,
        groundspeed=gs, vertical_rate=vr, track=track,
    )


def make_trajectory(points, flight_id="TST0001",
                    departure=Airport("ZDEP", 47.0, 7.0),
                    arrival=Airport("ZARR", 54.0, 17.0)):
    return Trajectory(
        flight_id=flight_id, points=points, departure=departure, arrival=arrival,
        callsign=flight_id, icao24="abc123",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
