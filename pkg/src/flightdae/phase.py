"""Flight-phase labeling used as the discriminant for decoder routing.

Per point, trapezoidal memberships over vertical rate, altitude and
groundspeed are aggregated into one score per phase and the best-scoring
phase wins. A 5-point majority filter removes single-point flicker at phase
boundaries. A separate rule forces CRUISE wherever the aircraft is more than
300 km away from both the departure and the arrival airport, so that e.g. a
mid-route dive is judged by the cruise decoder rather than blending into
ordinary descent traffic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .errors import ContractError
from .geo import vincenty_distance
from .ingest import Trajectory


class Phase(str, Enum):
    CLIMB = "CLIMB"
    CRUISE = "CRUISE"
    DESCENT = "DESCENT"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


PHASES = (Phase.CLIMB, Phase.CRUISE, Phase.DESCENT)


@dataclass(frozen=True)
class PhaseConfig:
    """Membership breakpoints (feet, ft/min, knots)."""

    alt_low_ft: float = 10_000.0  # full "low altitude" below this
    alt_high_ft: float = 25_000.0  # full "high altitude" above this
    vr_level_band: float = 300.0  # |vr| below this is fully "level"
    vr_full_scale: float = 1_000.0  # |vr| above this is fully climbing/descending
    gs_slow_kt: float = 150.0  # below: no cruise support from speed
    gs_fast_kt: float = 250.0  # above: full cruise support from speed
    cruise_override_km: float = 300.0
    smoothing_window: int = 5


def _ramp(x: float, lo: float, hi: float) -> float:
    """0 below lo, 1 above hi, linear in between."""
    if x <= lo:
        return 0.0
    if x >= hi:
        return 1.0
    return (x - lo) / (hi - lo)


def _phase_scores(altitude: float, vertical_rate: float, groundspeed: float,
                  cfg: PhaseConfig) -> dict[Phase, float]:
    climbing = _ramp(vertical_rate, cfg.vr_level_band, cfg.vr_full_scale)
    descending = _ramp(-vertical_rate, cfg.vr_level_band, cfg.vr_full_scale)
    level = 1.0 - max(climbing, descending)
    high = _ramp(altitude, cfg.alt_low_ft, cfg.alt_high_ft)
    fast = _ramp(groundspeed, cfg.gs_slow_kt, cfg.gs_fast_kt)
    return {
        Phase.CLIMB: climbing,
        # The 0.5 floor keeps level-but-low/slow points from scoring 0 in
        # every phase; without ground phases CRUISE is the least-wrong label.
        Phase.CRUISE: level * (0.5 + 0.5 * max(high, fast)),
        Phase.DESCENT: descending,
    }


def segment_phases(traj: Trajectory, config: PhaseConfig | None = None) -> list[Phase]:
    """Assign one phase per point via fuzzy scoring plus majority smoothing.

    Ties are resolved CRUISE > CLIMB > DESCENT (a tie means the vertical
    rate evidence is ambiguous, and level flight is the safer default).
    """
    cfg = config or PhaseConfig()
    raw: list[Phase] = []
    for p in traj.points:
        scores = _phase_scores(p.altitude, p.vertical_rate, p.groundspeed, cfg)
        best = max((Phase.CRUISE, Phase.CLIMB, Phase.DESCENT), key=lambda ph: scores[ph])
        raw.append(best)
    return _majority_smooth(raw, cfg.smoothing_window)


def _majority_smooth(labels: list[Phase], window: int) -> list[Phase]:
    """Majority vote over a centered window; the center label breaks ties."""
    if window <= 1 or len(labels) <= 2:
        return list(labels)
    half = window // 2
    out: list[Phase] = []
    for i in range(len(labels)):
        lo = max(0, i - half)
        hi = min(len(labels), i + half + 1)
        counts = Counter(labels[lo:hi])
        top = counts.most_common()
        best, best_n = top[0]
        if counts[labels[i]] == best_n:
            best = labels[i]
        out.append(best)
    return out


def apply_cruise_override(
    phases: list[Phase],
    traj: Trajectory,
    config: PhaseConfig | None = None,
) -> list[Phase]:
    """Force CRUISE at every point > 300 km from both route airports.

    Idempotent; points within range of either airport are left unchanged.
    """
    cfg = config or PhaseConfig()
    if len(phases) != len(traj.points):
        raise ContractError(
            f"phase list length {len(phases)} != trajectory length {len(traj.points)}"
        )
    dep = traj.departure.position
    arr = traj.arrival.position
    out = []
    for label, p in zip(phases, traj.points):
        pos = p.position
        if (
            vincenty_distance(pos, dep) > cfg.cruise_override_km
            and vincenty_distance(pos, arr) > cfg.cruise_override_km
        ):
            out.append(Phase.CRUISE)
        else:
            out.append(label)
    return out


def label_phases(traj: Trajectory, config: PhaseConfig | None = None) -> list[Phase]:
    """segment_phases followed by the cruise-distance override."""
    return apply_cruise_override(segment_phases(traj, config), traj, config)
