"""Geodesic primitives on the WGS84 ellipsoid.

Distances use Vincenty's inverse solution; bearings use the great-circle
forward azimuth (the sub-0.2 degree ellipsoidal correction is immaterial for a
heading-deviation feature). Angles are degrees, distances kilometers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import NumericError, UndefinedBearingError

if TYPE_CHECKING:
    from .ingest import Trajectory

# WGS84 ellipsoid
WGS84_A = 6378137.0  # semi-major axis, meters
WGS84_F = 1.0 / 298.257223563  # flattening
WGS84_B = WGS84_A * (1.0 - WGS84_F)  # semi-minor axis, meters

VINCENTY_TOL = 1e-12  # convergence tolerance on lambda, radians
VINCENTY_MAX_ITER = 200


@dataclass(frozen=True)
class GeoPoint:
    """A latitude/longitude pair in degrees."""

    latitude: float
    longitude: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of [-180, 180]")


def vincenty_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Inverse geodesic distance between two points, in kilometers.

    Iterates Vincenty's inverse formulae to 1e-12 rad (max 200 iterations).
    Near-antipodal pairs where the iteration does not converge fall back to
    Lambert's flattening-corrected great-circle formula, accurate to ~10 m
    for such geometries.

    Raises:
        NumericError: the fallback itself produced a non-finite value.
    """
    if a.latitude == b.latitude and a.longitude == b.longitude:
        return 0.0

    lam = _vincenty_inverse(a, b)
    if lam is None:
        lam = _lambert_distance(a, b)
    if not math.isfinite(lam):
        raise NumericError(f"geodesic distance failed for {a} -> {b}")
    return lam


def _vincenty_inverse(a: GeoPoint, b: GeoPoint) -> float | None:
    """Vincenty iteration; returns km, or None if it fails to converge."""
    u1 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(a.latitude)))
    u2 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(b.latitude)))
    big_l = math.radians(b.longitude - a.longitude)
    sin_u1, cos_u1 = math.sin(u1), math.cos(u1)
    sin_u2, cos_u2 = math.sin(u2), math.cos(u2)

    lam = big_l
    for _ in range(VINCENTY_MAX_ITER):
        sin_lam, cos_lam = math.sin(lam), math.cos(lam)
        sin_sigma = math.hypot(
            cos_u2 * sin_lam, cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lam
        )
        if sin_sigma == 0.0:
            return 0.0  # coincident after reduction
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lam
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cos_u1 * cos_u2 * sin_lam / sin_sigma
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha
        if cos_sq_alpha == 0.0:
            cos_2sigma_m = 0.0  # equatorial geodesic
        else:
            cos_2sigma_m = cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha
        c = WGS84_F / 16.0 * cos_sq_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos_sq_alpha))
        lam_prev = lam
        lam = big_l + (1.0 - c) * WGS84_F * sin_alpha * (
            sigma
            + c
            * sin_sigma
            * (cos_2sigma_m + c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m**2))
        )
        if abs(lam - lam_prev) < VINCENTY_TOL:
            break
    else:
        return None  # no convergence (near-antipodal)

    u_sq = cos_sq_alpha * (WGS84_A**2 - WGS84_B**2) / WGS84_B**2
    big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)))
    big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)))
    delta_sigma = big_b * sin_sigma * (
        cos_2sigma_m
        + big_b
        / 4.0
        * (
            cos_sigma * (-1.0 + 2.0 * cos_2sigma_m**2)
            - big_b
            / 6.0
            * cos_2sigma_m
            * (-3.0 + 4.0 * sin_sigma**2)
            * (-3.0 + 4.0 * cos_2sigma_m**2)
        )
    )
    return WGS84_B * big_a * (sigma - delta_sigma) / 1000.0


def _lambert_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Lambert's flattening-corrected great-circle distance, km."""
    phi1 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(a.latitude)))
    phi2 = math.atan((1.0 - WGS84_F) * math.tan(math.radians(b.latitude)))
    dlon = math.radians(b.longitude - a.longitude)
    central = math.acos(
        min(1.0, max(-1.0, math.sin(phi1) * math.sin(phi2)
                     + math.cos(phi1) * math.cos(phi2) * math.cos(dlon)))
    )
    if central == 0.0:
        return 0.0
    p = (phi1 + phi2) / 2.0
    q = (phi2 - phi1) / 2.0
    x = (central - math.sin(central)) * math.sin(p) ** 2 * math.cos(q) ** 2 / math.cos(central / 2.0) ** 2
    y = (central + math.sin(central)) * math.cos(p) ** 2 * math.sin(q) ** 2 / math.sin(central / 2.0) ** 2
    return WGS84_A * (central - WGS84_F / 2.0 * (x + y)) / 1000.0


def spherical_step(lat: float, lon: float, bearing_deg: float, dist_km: float) -> tuple[float, float]:
    """Move dist_km along a bearing on the mean sphere; returns (lat, lon).

    Generation-side primitive (synthetic flights, crash resimulation): the
    sub-0.5% spherical-vs-ellipsoidal error is irrelevant there because the
    produced points are re-measured with vincenty_distance downstream.
    """
    if dist_km <= 0.0:
        return lat, lon
    delta = dist_km / (WGS84_A / 1000.0)
    phi = math.radians(lat)
    theta = math.radians(bearing_deg)
    phi2 = math.asin(
        math.sin(phi) * math.cos(delta) + math.cos(phi) * math.sin(delta) * math.cos(theta)
    )
    dlon = math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi),
        math.cos(delta) - math.sin(phi) * math.sin(phi2),
    )
    lon2 = (lon + math.degrees(dlon) + 180.0) % 360.0 - 180.0
    return math.degrees(phi2), lon2


def initial_bearing(origin: GeoPoint, target: GeoPoint) -> float:
    """Great-circle forward azimuth at `origin` toward `target`, degrees [0, 360).

    Raises:
        UndefinedBearingError: the points coincide.
    """
    if origin.latitude == target.latitude and origin.longitude == target.longitude:
        raise UndefinedBearingError(f"bearing undefined for coincident point {origin}")
    phi1 = math.radians(origin.latitude)
    phi2 = math.radians(target.latitude)
    dlon = math.radians(target.longitude - origin.longitude)
    x = math.sin(dlon) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlon)
    return math.degrees(math.atan2(x, y)) % 360.0


def tracking_delta(track: float, bearing_to_arrival: float) -> float:
    """Signed smallest angle from the broadcast track to the ideal bearing.

    Both inputs in degrees; result in (-180, 180], positive when the ideal
    bearing lies clockwise of the track. The antipodal case maps to +180.
    """
    delta = (bearing_to_arrival - track) % 360.0
    if delta > 180.0:
        delta -= 360.0
    return delta


def consecutive_delta(traj: "Trajectory") -> list[float]:
    """Per-point geodesic distance (km) to the previous point.

    Returns one value per point; the first point gets 0 so feature matrices
    stay aligned with the point count.
    """
    points = traj.points
    deltas = [0.0]
    for prev, cur in zip(points, points[1:]):
        deltas.append(
            vincenty_distance(
                GeoPoint(prev.latitude, prev.longitude),
                GeoPoint(cur.latitude, cur.longitude),
            )
        )
    return deltas
