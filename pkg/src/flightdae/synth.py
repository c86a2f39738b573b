"""Synthetic flight generator with kinematically consistent features.

Flights fly between fixed airport pairs on a 2-second cadence through three
regimes: a climb at ~2200 ft/min, a cruise at a per-flight flight level, and
a descent timed to arrive near the destination. Altitude integrates the
vertical rate, positions integrate the groundspeed along the track, and the
track steers toward the arrival with a slowly meandering offset, so all five
model features stay mutually consistent up to small measurement noise.

The default routes run roughly southwest to northeast. That orientation is
deliberate: a +1/+1 degree position offset at these latitudes displaces a
trajectory mostly along its own direction of flight, which is what makes the
constant-offset scenario hard to tell apart from the genuine track (the
bearing to the arrival barely changes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import GeoPoint, initial_bearing, spherical_step, vincenty_distance
from .ingest import Airport, Trajectory, TrajectoryPoint

DEFAULT_ROUTES = (
    (Airport("ZASW", 46.2, 5.8), Airport("ZANE", 53.9, 15.7)),
    (Airport("ZBSW", 47.1, 8.6), Airport("ZBNE", 54.4, 18.9)),
    (Airport("ZCSW", 45.6, 7.4), Airport("ZCNE", 52.4, 16.2)),
    (Airport("ZDSW", 48.0, 6.5), Airport("ZDNE", 55.2, 17.4)),
)


@dataclass(frozen=True)
class SynthConfig:
    """Corpus size, cadence and noise levels."""

    n_flights: int = 240
    seed: int = 0
    period_s: float = 2.0
    both_directions: bool = True
    start_altitude_ft: float = 2000.0
    end_altitude_ft: float = 1600.0
    cruise_levels_ft: tuple[float, ...] = (30000.0, 32000.0, 34000.0, 36000.0, 38000.0)
    climb_rate_ftmin: tuple[float, float] = (1900.0, 2500.0)
    descent_rate_ftmin: tuple[float, float] = (1900.0, 2500.0)
    cruise_speed_kt: tuple[float, float] = (430.0, 480.0)
    initial_speed_kt: float = 175.0
    noise_altitude_ft: float = 20.0
    noise_speed_kt: float = 1.0
    noise_vertical_rate: float = 40.0
    noise_track_deg: float = 0.4
    max_steps: int = 4500
    base_epoch: float = 1_700_000_000.0


def generate_flight(
    flight_index: int,
    departure: Airport,
    arrival: Airport,
    cfg: SynthConfig,
) -> Trajectory:
    """One deterministic flight (seeded by the corpus seed and flight index)."""
    rng = np.random.default_rng([cfg.seed, flight_index])
    period = cfg.period_s

    cruise_alt = float(rng.choice(cfg.cruise_levels_ft))
    climb_rate = rng.uniform(*cfg.climb_rate_ftmin)
    descent_rate = rng.uniform(*cfg.descent_rate_ftmin)
    cruise_gs = rng.uniform(*cfg.cruise_speed_kt)

    # start airborne a little along the route, already moving
    route_bearing = initial_bearing(departure.position, arrival.position)
    lat, lon = spherical_step(
        departure.latitude, departure.longitude, route_bearing, rng.uniform(6.0, 14.0)
    )
    alt = cfg.start_altitude_ft
    gs = cfg.initial_speed_kt + rng.uniform(0.0, 10.0)
    vr = climb_rate * 0.6
    track = initial_bearing(GeoPoint(lat, lon), arrival.position)
    meander = 0.0
    regime = "climb"

    points: list[TrajectoryPoint] = []
    t0 = cfg.base_epoch + flight_index * 10_000.0
    for step in range(cfg.max_steps):
        arr_pos = arrival.position
        pos = GeoPoint(lat, lon)
        remaining_km = vincenty_distance(pos, arr_pos)
        if remaining_km < 12.0 or (regime == "descent" and alt <= cfg.end_altitude_ft):
            break

        # regime switching
        if regime == "climb" and alt >= cruise_alt:
            regime = "cruise"
        if regime != "descent":
            descend_min = (alt - cfg.end_altitude_ft) / descent_rate
            descend_km = gs * 1.852 * descend_min / 60.0
            if remaining_km <= descend_km + 15.0:
                regime = "descent"

        # taper floors keep |vr| far from the level dead-band until the
        # regime actually ends, so fuzzy phase labels stay decisive
        if regime == "climb":
            vr_target = climb_rate * min(1.0, max(0.35, (cruise_alt - alt) / 3000.0))
        elif regime == "descent":
            vr_target = -descent_rate * min(1.0, max(0.35, (alt - cfg.end_altitude_ft) / 2500.0))
        else:
            vr_target = 0.0
        vr += (vr_target - vr) * 0.15 + rng.normal(0.0, 45.0)

        frac = min(1.0, max(0.0, (alt - cfg.start_altitude_ft) / (cruise_alt - cfg.start_altitude_ft)))
        gs_target = cfg.initial_speed_kt + (cruise_gs - cfg.initial_speed_kt) * frac ** 0.7
        gs += (gs_target - gs) * 0.1 + rng.normal(0.0, 1.2)

        meander += -meander / 120.0 + rng.normal(0.0, 0.35)
        desired = (initial_bearing(pos, arr_pos) + meander) % 360.0
        turn = (desired - track + 180.0) % 360.0 - 180.0
        track = (track + float(np.clip(turn, -2.5, 2.5))) % 360.0

        points.append(
            TrajectoryPoint(
                timestamp=t0 + step * period,
                latitude=lat,
                longitude=lon,
                altitude=alt + rng.normal(0.0, cfg.noise_altitude_ft),
                groundspeed=max(0.0, gs + rng.normal(0.0, cfg.noise_speed_kt)),
                vertical_rate=vr + rng.normal(0.0, cfg.noise_vertical_rate),
                track=(track + rng.normal(0.0, cfg.noise_track_deg)) % 360.0,
            )
        )

        alt += vr * period / 60.0
        lat, lon = spherical_step(lat, lon, track, gs * 1.852 * period / 3600.0)

    return Trajectory(
        flight_id=f"SYN{flight_index:04d}",
        points=points,
        departure=departure,
        arrival=arrival,
        callsign=f"SYN{flight_index:04d}",
        icao24=f"{flight_index:06x}",
    )


def generate_corpus(cfg: SynthConfig | None = None) -> list[Trajectory]:
    """Deterministic corpus over the default routes, alternating directions."""
    cfg = cfg or SynthConfig()
    flights = []
    for idx in range(cfg.n_flights):
        dep, arr = DEFAULT_ROUTES[idx % len(DEFAULT_ROUTES)]
        if cfg.both_directions and (idx // len(DEFAULT_ROUTES)) % 2 == 1:
            dep, arr = arr, dep
        flights.append(generate_flight(idx, dep, arr, cfg))
    return flights
