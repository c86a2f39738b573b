import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flightdae.errors import UndefinedBearingError
from flightdae.geo import (
    GeoPoint,
    consecutive_delta,
    initial_bearing,
    spherical_step,
    tracking_delta,
    vincenty_distance,
)

from conftest import make_point, make_trajectory
from geodesic_oracle import direct_geodesic, meridian_arc, sphere_bearing

EQUATOR_KM_PER_DEG = 111.3194907932736  # WGS84 a * pi / 180


class TestVincentyDistance:
    def test_coincident_points(self):
        p = GeoPoint(48.85, 2.35)
        assert vincenty_distance(p, p) == 0.0

    def test_one_degree_meridian(self):
        # published WGS84 meridian arc: ~110.574 km from equator to 1N
        d = vincenty_distance(GeoPoint(0.0, 0.0), GeoPoint(1.0, 0.0))
        assert d == pytest.approx(110.574, abs=1e-3)
        assert d == pytest.approx(meridian_arc(1.0) / 1000.0, abs=1e-3)

    def test_european_one_one_offset(self):
        # +1 deg lat, +1 deg lon at a mid-European point is ~132 km
        d = vincenty_distance(GeoPoint(50.0, 10.0), GeoPoint(51.0, 11.0))
        assert d == pytest.approx(132.0, abs=2.0)

    def test_symmetry(self, rng):
        for _ in range(200):
            a = GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180))
            b = GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180))
            assert vincenty_distance(a, b) == pytest.approx(
                vincenty_distance(b, a), abs=1e-9
            )

    def test_against_ode_oracle(self, rng):
        for _ in range(100):
            lat = rng.uniform(-70.0, 70.0)
            lon = rng.uniform(-179.0, 179.0)
            az = rng.uniform(0.0, 360.0)
            s_km = rng.uniform(1.0, 9000.0)
            lat2, lon2 = direct_geodesic(lat, lon, az, s_km * 1000.0)
            d = vincenty_distance(GeoPoint(lat, lon), GeoPoint(lat2, lon2))
            assert d == pytest.approx(s_km, abs=1e-3)

    def test_triangle_inequality(self, rng):
        for _ in range(200):
            pts = [
                GeoPoint(rng.uniform(-60, 60), rng.uniform(-90, 90))
                for _ in range(3)
            ]
            ab = vincenty_distance(pts[0], pts[1])
            bc = vincenty_distance(pts[1], pts[2])
            ac = vincenty_distance(pts[0], pts[2])
            assert ac <= ab + bc + 1e-6

    def test_near_antipodal_falls_back(self):
        # Vincenty famously fails to converge near the antipode; the fallback
        # must still produce a sane half-circumference-scale distance.
        d = vincenty_distance(GeoPoint(0.0, 0.0), GeoPoint(0.5, 179.7))
        assert 19000.0 < d < 20100.0


class TestInitialBearing:
    def test_due_north(self):
        assert initial_bearing(GeoPoint(0, 0), GeoPoint(1, 0)) == pytest.approx(0.0)

    def test_due_east_on_equator(self):
        assert initial_bearing(GeoPoint(0, 0), GeoPoint(0, 1)) == pytest.approx(90.0)

    def test_paris_to_moscow_vs_oracle(self):
        got = initial_bearing(GeoPoint(48.8566, 2.3522), GeoPoint(55.7558, 37.6173))
        want = sphere_bearing(48.8566, 2.3522, 55.7558, 37.6173)
        assert got == pytest.approx(want, abs=0.1)

    def test_coincident_raises(self):
        with pytest.raises(UndefinedBearingError):
            initial_bearing(GeoPoint(10, 10), GeoPoint(10, 10))

    def test_range(self, rng):
        for _ in range(100):
            b = initial_bearing(
                GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180)),
                GeoPoint(rng.uniform(-80, 80), rng.uniform(-180, 180)),
            )
            assert 0.0 <= b < 360.0


class TestTrackingDelta:
    def test_identical(self):
        assert tracking_delta(270.0, 270.0) == 0.0

    def test_wrap_around(self):
        assert tracking_delta(350.0, 10.0) == 20.0

    def test_antipodal_heading_is_plus_180(self):
        assert tracking_delta(0.0, 180.0) == 180.0

    @given(st.floats(0, 359.999), st.floats(0, 359.999))
    def test_bounded_and_zero_on_equal(self, track, ideal):
        d = tracking_delta(track, ideal)
        assert -180.0 < d <= 180.0
        assert tracking_delta(track, track) == 0.0

    @given(st.floats(0, 359.999), st.floats(0, 359.999), st.integers(-3, 3))
    def test_wrap_invariance(self, track, ideal, k):
        base = tracking_delta(track, ideal)
        wrapped = tracking_delta((track + 360.0 * k) % 360.0, ideal)
        assert wrapped == pytest.approx(base, abs=1e-9)


class TestConsecutiveDelta:
    def test_stationary(self):
        traj = make_trajectory([make_point(t=2.0 * i) for i in range(5)])
        assert consecutive_delta(traj) == [0.0] * 5

    def test_collinear_equator_points(self):
        traj = make_trajectory(
            [make_point(t=2.0 * i, lat=0.0, lon=float(i)) for i in range(3)]
        )
        deltas = consecutive_delta(traj)
        want = vincenty_distance(GeoPoint(0, 0), GeoPoint(0, 1))
        assert deltas[0] == 0.0
        assert deltas[1] == pytest.approx(want, abs=1e-9)
        assert deltas[2] == pytest.approx(want, abs=1e-9)

    def test_cruise_speed_conversion(self):
        # 480 kt for 2 s is 480 * 1.852 * 2 / 3600 km
        want = 480.0 * 1.852 * 2.0 / 3600.0
        step_deg = want / EQUATOR_KM_PER_DEG
        traj = make_trajectory(
            [make_point(t=2.0 * i, lat=0.0, lon=i * step_deg) for i in range(4)]
        )
        deltas = consecutive_delta(traj)
        assert deltas[1:] == pytest.approx([want] * 3, abs=1e-3)

    def test_length_matches_point_count(self):
        traj = make_trajectory([make_point(t=2.0 * i, lon=10 + 0.01 * i) for i in range(7)])
        assert len(consecutive_delta(traj)) == 7


class TestSphericalStep:
    def test_roundtrip_against_vincenty(self):
        lat2, lon2 = spherical_step(50.0, 10.0, 40.0, 1.0)
        d = vincenty_distance(GeoPoint(50.0, 10.0), GeoPoint(lat2, lon2))
        assert d == pytest.approx(1.0, rel=5e-3)

    def test_zero_distance(self):
        assert spherical_step(50.0, 10.0, 40.0, 0.0) == (50.0, 10.0)
