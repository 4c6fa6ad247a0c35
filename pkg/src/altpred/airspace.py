"""Geodesy and terminal-area geometry.

Distances are great-circle (haversine) on a sphere of radius
:data:`EARTH_RADIUS_NM`. The research circle (TRC) anchors labels, the
extended circle (TBX) bounds the entry annulus (TBE) used for entry speeds.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .track import ZONES, ArrivalRecord, Trajectory

EARTH_RADIUS_NM = 3440.065

TRC = "TRC"
TBX = "TBX"
INBOUND = "inbound"
OUTBOUND = "outbound"


def great_circle_nm(lat1, lon1, lat2, lon2):
    """Haversine distance in nautical miles; broadcasts over numpy arrays."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    d = 2 * EARTH_RADIUS_NM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def initial_bearing(lat1, lon1, lat2, lon2):
    """Initial course from point 1 to point 2, degrees in [0, 360)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    y = np.sin(dlmb) * np.cos(p2)
    x = np.cos(p1) * np.sin(p2) - np.sin(p1) * np.cos(p2) * np.cos(dlmb)
    b = np.degrees(np.arctan2(y, x)) % 360.0
    return float(b) if np.ndim(b) == 0 else b


def destination(lat: float, lon: float, bearing: float, dist_nm: float) -> tuple[float, float]:
    """Point reached from (lat, lon) after ``dist_nm`` along ``bearing``."""
    p1, l1 = math.radians(lat), math.radians(lon)
    th, dr = math.radians(bearing), dist_nm / EARTH_RADIUS_NM
    p2 = math.asin(math.sin(p1) * math.cos(dr) + math.cos(p1) * math.sin(dr) * math.cos(th))
    l2 = l1 + math.atan2(math.sin(th) * math.sin(dr) * math.cos(p1), math.cos(dr) - math.sin(p1) * math.sin(p2))
    return math.degrees(p2), (math.degrees(l2) + 540.0) % 360.0 - 180.0


@dataclass(frozen=True)
class AirspaceGeometry:
    center_lat: float = 1.3644
    center_lon: float = 103.9915
    trc_radius: float = 50.0
    tbx_radius: float = 60.0
    # lon_min, lon_max, lat_min, lat_max
    raster_bbox: tuple[float, float, float, float] = (103.0, 105.0, 0.5, 2.25)

    def __post_init__(self):
        if not 0 < self.trc_radius < self.tbx_radius:
            raise ConfigError(f"need 0 < trc_radius < tbx_radius, got {self.trc_radius}, {self.tbx_radius}")
        lon_min, lon_max, lat_min, lat_max = self.raster_bbox
        if not (lon_min < lon_max and lat_min < lat_max):
            raise ConfigError(f"degenerate raster bbox {self.raster_bbox}")
        lat_r = self.trc_radius / 60.0
        lon_r = lat_r / math.cos(math.radians(self.center_lat))
        if not (
            lon_min <= self.center_lon - lon_r and self.center_lon + lon_r <= lon_max
            and lat_min <= self.center_lat - lat_r and self.center_lat + lat_r <= lat_max
        ):
            raise ConfigError("raster bbox does not contain the TRC disc")

    def radius(self, boundary: str) -> float:
        if boundary == TRC:
            return self.trc_radius
        if boundary == TBX:
            return self.tbx_radius
        raise ValueError(f"unknown boundary {boundary!r}")

    def distance(self, lat, lon):
        return great_circle_nm(self.center_lat, self.center_lon, lat, lon)

    def bearing(self, lat, lon):
        return initial_bearing(self.center_lat, self.center_lon, lat, lon)

    def in_trc(self, lat, lon):
        return self.distance(lat, lon) <= self.trc_radius

    def in_tbe(self, lat, lon):
        d = self.distance(lat, lon)
        return (d > self.trc_radius) & (d <= self.tbx_radius)


# --------------------------------------------------------------------------
# runways


@dataclass(frozen=True)
class Threshold:
    name: str
    lat: float
    lon: float
    bearing: float
    capture_radius_nm: float = 0.5

    def __post_init__(self):
        if self.capture_radius_nm <= 0:
            raise ConfigError(f"threshold {self.name}: capture radius must be positive")


def reciprocal_name(name: str) -> str:
    """``"02L"`` -> ``"20R"``; the opposite end of the same pavement."""
    digits = "".join(ch for ch in name if ch.isdigit())
    side = name[len(digits):]
    if not digits:
        raise ConfigError(f"cannot parse runway designator {name!r}")
    number = (int(digits) + 18 - 1) % 36 + 1
    side = {"L": "R", "R": "L"}.get(side, side)
    return f"{number:02d}{side}"


def physical_runway(name: str) -> str:
    """Name of the pavement a threshold belongs to, lower designator first (``"02L20R"``)."""
    return "".join(sorted((name, reciprocal_name(name))))


@dataclass(frozen=True)
class RunwayLayout:
    thresholds: tuple[Threshold, ...]
    by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [t.name for t in self.thresholds]
        dup = [n for n, c in Counter(names).items() if c > 1]
        if dup:
            raise ConfigError(f"duplicate threshold names: {dup}")
        if not names:
            raise ConfigError("runway layout is empty")
        object.__setattr__(self, "by_name", {t.name: t for t in self.thresholds})

    @property
    def physical_runways(self) -> list[str]:
        """Distinct pavements in order of first appearance in the layout."""
        seen: dict[str, None] = {}
        for t in self.thresholds:
            seen.setdefault(physical_runway(t.name), None)
        return list(seen)

    def __getitem__(self, name: str) -> Threshold:
        return self.by_name[name]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "RunwayLayout":
        try:
            return cls(tuple(
                Threshold(str(r["name"]), float(r["lat"]), float(r["lon"]), float(r["bearing"]),
                          float(r.get("capture_radius_nm", 0.5)))
                for r in records
            ))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad runway record: {exc}") from exc

    def to_records(self) -> list[dict]:
        return [
            {"name": t.name, "lat": t.lat, "lon": t.lon, "bearing": t.bearing, "capture_radius_nm": t.capture_radius_nm}
            for t in self.thresholds
        ]


def load_runways(path: str | Path | None = None) -> RunwayLayout:
    """Read a runway layout JSON file; ``None`` loads the bundled default layout."""
    try:
        if path is None:
            text = resources.files("altpred.data").joinpath("runways_wsss.json").read_text()
        else:
            text = Path(path).read_text()
        records = json.loads(text)
    except OSError as exc:
        raise ConfigError(f"cannot read runway layout: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"runway layout is not valid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise ConfigError("runway layout must be a JSON list")
    return RunwayLayout.from_records(records)


# --------------------------------------------------------------------------
# boundary crossings


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def crossings(traj: Trajectory, geometry: AirspaceGeometry, boundary: str = TRC, direction: str = INBOUND) -> list[int]:
    """All crossing times of ``boundary`` in ``direction``, chronologically.

    The crossing time is interpolated linearly in distance between the two
    straddling fixes and rounded to the nearest second. A fix lying exactly on
    the boundary counts as the crossing at its own timestamp.
    """
    if len(traj) < 2:
        return []
    r = geometry.radius(boundary)
    d = geometry.distance(traj.lat, traj.lon)
    d0, d1 = d[:-1], d[1:]
    if direction == INBOUND:
        idx = np.flatnonzero((d0 > r) & (d1 <= r))
        frac = (d0[idx] - r) / (d0[idx] - d1[idx])
    elif direction == OUTBOUND:
        idx = np.flatnonzero((d0 <= r) & (d1 > r))
        frac = (r - d0[idx]) / (d1[idx] - d0[idx])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    t0 = traj.time[idx].astype(np.float64)
    dt = (traj.time[idx + 1] - traj.time[idx]).astype(np.float64)
    return [_round_half_up(t) for t in t0 + frac * dt]


def crossing_time(
    traj: Trajectory,
    geometry: AirspaceGeometry,
    boundary: str = TRC,
    direction: str = INBOUND,
    before: int | None = None,
) -> int | None:
    """Latest crossing (at or before ``before`` when given), or ``None``.

    Taking the latest crossing anchors the label at the entry immediately
    preceding the approach when a track leaves and re-enters the circle.
    """
    times = crossings(traj, geometry, boundary, direction)
    if before is not None:
        times = [t for t in times if t <= before]
    return times[-1] if times else None


def first_crossing_time(traj: Trajectory, geometry: AirspaceGeometry, boundary: str = TRC,
                        direction: str = INBOUND) -> int | None:
    times = crossings(traj, geometry, boundary, direction)
    return times[0] if times else None


def zone_of_bearing(bearing: float) -> str:
    """Quadrant centred on a cardinal direction; lower edges inclusive."""
    return ZONES[int(((bearing + 45.0) % 360.0) // 90.0)]


def entry_zone(traj: Trajectory, geometry: AirspaceGeometry, at: int | None = None) -> str:
    """Entry quadrant from the bearing of the inbound TRC crossing point.

    ``at`` selects a specific crossing time; by default the latest one is used.
    """
    t = crossing_time(traj, geometry, TRC, INBOUND) if at is None else at
    if t is None:
        raise ValueError(f"{traj.aircraft_id}: trajectory never crosses the TRC inbound")
    lat = float(np.interp(t, traj.time, traj.lat))
    lon = float(np.interp(t, traj.time, traj.lon))
    return zone_of_bearing(geometry.bearing(lat, lon))


# --------------------------------------------------------------------------
# threshold matching

ALT_GATE_FT = 1000.0
SPEED_GATE_KT = 200.0


def match_threshold(
    traj: Trajectory,
    runways: RunwayLayout,
    alt_gate: float = ALT_GATE_FT,
    speed_gate: float = SPEED_GATE_KT,
) -> tuple[str, int] | None:
    """Landing threshold and the time the aircraft passes it.

    A fix qualifies when it is inside a threshold's capture radius, below the
    altitude gate and below the speed gate. The first qualifying fix picks the
    threshold (nearest one on ties); the reported time is that of the closest
    fix within the same uninterrupted qualifying run, i.e. the moment the
    aircraft passes over the threshold rather than the moment it enters the
    capture disc.
    """
    if len(traj) == 0:
        return None
    names = [t.name for t in runways.thresholds]
    lat = np.array([t.lat for t in runways.thresholds])
    lon = np.array([t.lon for t in runways.thresholds])
    radius = np.array([t.capture_radius_nm for t in runways.thresholds])
    dist = great_circle_nm(traj.lat[:, None], traj.lon[:, None], lat[None, :], lon[None, :])
    gated = (traj.alt < alt_gate) & (traj.gs < speed_gate)
    ok = (dist <= radius[None, :]) & gated[:, None]
    hits = np.flatnonzero(ok.any(axis=1))
    if hits.size == 0:
        return None
    i = int(hits[0])
    candidates = np.flatnonzero(ok[i])
    j = int(candidates[np.argmin(dist[i, candidates])])
    end = i
    while end + 1 < len(traj) and ok[end + 1, j] and traj.time[end + 1] - traj.time[end] == 1:
        end += 1
    best = i + int(np.argmin(dist[i:end + 1, j]))
    return names[j], int(traj.time[best])


# --------------------------------------------------------------------------
# runway operations


@dataclass(frozen=True)
class RunwayOpsFeatures:
    arrivals_per_runway: dict[str, int]
    runway_change_label: int

    def counts(self, runways: Sequence[str]) -> list[int]:
        return [self.arrivals_per_runway.get(r, 0) for r in runways]


def runway_ops_features(
    arrivals: Iterable[ArrivalRecord], t_ref: int, delta: float, runways: Sequence[str] | None = None
) -> RunwayOpsFeatures:
    """Arrival counts per pavement with ``t_thr`` in ``[t_ref - delta, t_ref]``.

    The change label is 1 when some pavement was used from both ends inside
    the window.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    counts: dict[str, int] = {r: 0 for r in (runways or [])}
    ends: dict[str, set[str]] = {}
    for a in arrivals:
        if t_ref - delta <= a.t_thr <= t_ref:
            counts[a.runway] = counts.get(a.runway, 0) + 1
            ends.setdefault(a.runway, set()).add(a.threshold)
    change = int(any(len(v) > 1 for v in ends.values()))
    return RunwayOpsFeatures(counts, change)
