"""Holding detection and the holding feature vector.

A trajectory is flagged as holding when, inside the band between
``inner_nm`` and the TBX radius, its signed heading change accumulated over
some sliding window reaches a full turn. Normal approach turns never add up
to 360 degrees in that band; racetracks and orbits do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .airspace import AirspaceGeometry
from .track import ArrivalRecord, Trajectory

HOLD_WINDOW_S = 600
HOLD_DEGREES = 360.0
HOLD_INNER_NM = 20.0
MIN_TRACK_S = 60
# absorbs float round-off when a closed loop sums to exactly one full turn
_ANGLE_TOL = 1e-6


@dataclass(frozen=True)
class HoldingResult:
    holding: int
    intervals: tuple[tuple[int, int], ...]

    def __bool__(self) -> bool:
        return bool(self.holding)


def heading_steps(heading: np.ndarray) -> np.ndarray:
    """Successive heading changes wrapped to (-180, 180]."""
    d = np.diff(np.asarray(heading, dtype=np.float64))
    return 180.0 - (180.0 - d) % 360.0


def detect_holding(
    traj: Trajectory,
    geometry: AirspaceGeometry,
    window_s: int = HOLD_WINDOW_S,
    threshold_deg: float = HOLD_DEGREES,
    inner_nm: float = HOLD_INNER_NM,
) -> HoldingResult:
    """Flag a holding pattern and report the merged qualifying windows.

    Heading steps count only between two consecutive 1 Hz fixes that both lie
    in the band; the window sum at time ``t`` covers steps ending in
    ``(t - window_s, t]``.
    """
    if len(traj) < 2 or traj.end - traj.start < MIN_TRACK_S:
        return HoldingResult(0, ())
    d = geometry.distance(traj.lat, traj.lon)
    band = (d >= inner_nm) & (d <= geometry.tbx_radius)
    steps = heading_steps(traj.heading)
    valid = band[:-1] & band[1:] & (np.diff(traj.time) == 1)
    steps = np.where(valid, steps, 0.0)

    # lay the steps on a dense per-second grid so the window is in seconds
    t_end = traj.time[1:] - traj.start
    grid = np.zeros(int(t_end[-1]) + 1)
    np.add.at(grid, t_end, steps)
    csum = np.concatenate([[0.0], np.cumsum(grid)])
    hi = np.arange(1, grid.size + 1)
    lo = np.maximum(hi - window_s, 0)
    win = csum[hi] - csum[lo]
    hit = np.abs(win) >= threshold_deg - _ANGLE_TOL
    if not hit.any():
        return HoldingResult(0, ())

    intervals: list[list[int]] = []
    for end in np.flatnonzero(hit):
        start = max(int(end) - window_s + 1, 0)
        a, b = traj.start + start, traj.start + int(end)
        if intervals and a <= intervals[-1][1]:
            intervals[-1][1] = max(intervals[-1][1], b)
        else:
            intervals.append([a, b])
    return HoldingResult(1, tuple((a, b) for a, b in intervals))


def tbe_mean_speed(traj: Trajectory, geometry: AirspaceGeometry) -> float:
    """Mean ground speed over fixes inside the TBE annulus."""
    mask = geometry.in_tbe(traj.lat, traj.lon)
    if not mask.any():
        raise ValueError(f"{traj.aircraft_id}: no fixes inside the TBE annulus")
    return float(traj.gs[mask].mean())


def leading_aircraft(target: ArrivalRecord, arrivals: Iterable[ArrivalRecord]) -> ArrivalRecord | None:
    """Most recent earlier TRC entrant that is still airborne when the target enters.

    Ties on the crossing time go to the smaller aircraft id.
    """
    best = None
    for a in arrivals:
        if a.t_trc < target.t_trc and a.t_thr > target.t_trc:
            if best is None or a.t_trc > best.t_trc or (a.t_trc == best.t_trc and a.aircraft_id < best.aircraft_id):
                best = a
    return best


HOLDING_FIELDS = ("total_arrivals", "dt_trc", "dv_avg", "dv_lead", "lead_holding")


@dataclass(frozen=True)
class HoldingFeatures:
    leading_id: str | None
    dt_trc: float
    dv_avg: float
    dv_lead: float
    lead_holding: int
    total_arrivals: int

    def vector(self) -> np.ndarray:
        return np.array(
            [self.total_arrivals, self.dt_trc, self.dv_avg, self.dv_lead, self.lead_holding], dtype=np.float64
        )


class ArrivalIndex:
    """Arrivals sorted by TRC and landing time for fast window queries."""

    def __init__(self, arrivals: Sequence[ArrivalRecord]):
        self.arrivals = sorted(arrivals, key=lambda r: (r.t_trc, r.aircraft_id))
        self.t_trc = np.array([a.t_trc for a in self.arrivals], dtype=np.int64)
        self.t_thr_sorted = np.sort(np.array([a.t_thr for a in self.arrivals], dtype=np.int64))

    def landed_between(self, t0: float, t1: float) -> int:
        return int(np.searchsorted(self.t_thr_sorted, t1, "right") - np.searchsorted(self.t_thr_sorted, t0, "left"))

    def entered_between(self, t0: float, t1: float) -> list[ArrivalRecord]:
        lo = np.searchsorted(self.t_trc, t0, "left")
        hi = np.searchsorted(self.t_trc, t1, "right")
        return self.arrivals[lo:hi]

    def leading(self, target: ArrivalRecord) -> ArrivalRecord | None:
        hi = int(np.searchsorted(self.t_trc, target.t_trc, "left"))
        # walk back over earlier entrants; the first still airborne wins
        best = None
        for a in reversed(self.arrivals[:hi]):
            if best is not None and a.t_trc < best.t_trc:
                break
            if a.t_thr > target.t_trc and (best is None or a.aircraft_id < best.aircraft_id):
                best = a
        return best


def holding_features(
    target: ArrivalRecord,
    arrivals: Sequence[ArrivalRecord] | ArrivalIndex,
    speeds: Mapping[str, float],
    holdings: Mapping[str, int],
    delta: float,
) -> HoldingFeatures:
    """Holding feature vector of ``target`` from a snapshot of all arrivals.

    The fleet mean entry speed averages aircraft that entered the TRC within
    ``[t_trc - delta, t_trc]``. Aircraft without a known entry speed take that
    fleet mean, so their speed gaps are zero.
    """
    index = arrivals if isinstance(arrivals, ArrivalIndex) else ArrivalIndex(arrivals)
    t = target.t_trc
    window = [a.aircraft_id for a in index.entered_between(t - delta, t)]
    known = [speeds[i] for i in window if i in speeds]
    if target.aircraft_id in speeds and target.aircraft_id not in window:
        known.append(speeds[target.aircraft_id])
    fleet = float(np.mean(known)) if known else float("nan")
    v_j = speeds.get(target.aircraft_id, fleet)
    total = index.landed_between(t - delta, t)
    dv_avg = _gap(v_j, fleet)
    lead = index.leading(target)
    if lead is None:
        return HoldingFeatures(None, 0.0, dv_avg, 0.0, 0, total)
    v_lead = speeds.get(lead.aircraft_id, fleet)
    return HoldingFeatures(
        lead.aircraft_id, float(t - lead.t_trc), dv_avg, _gap(v_j, v_lead), int(holdings.get(lead.aircraft_id, 0)),
        total,
    )


def _gap(a: float, b: float) -> float:
    # no speed information at all -> neutral gap
    return 0.0 if np.isnan(a) or np.isnan(b) else float(a - b)
