"""Synthetic terminal-area arrival traffic with known ground truth.

Each aircraft spawns outside the TBX on an entry radial, flies inbound,
optionally flies racetrack holds at a fix inside the TRC, turns onto a
dog-leg route to the final approach fix and lands. Paths are built
analytically (straight legs joined by constant-radius arcs), sampled densely
in arc length, and converted to time through a piecewise speed profile, so
crossing and landing times are known exactly before any 1 Hz sampling.

Runway slots are assigned first-come-first-served per pavement with a fixed
separation. Required delay is absorbed by slowing down in the entry annulus,
by holding when arrival pressure is high, and by slowing down inside the
terminal area.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .airspace import AirspaceGeometry, RunwayLayout, physical_runway, zone_of_bearing
from .errors import ConfigError
from .ingest import write_adsb
from .track import ZONES, Trajectory

log = logging.getLogger(__name__)

ZONE_BEARING = {"N": 0.0, "E": 90.0, "S": 180.0, "W": 270.0}
FEET_PER_NM_GLIDE = 318.0
CRUISE_ALT_FT = 11000.0
ROLLOUT_NM = 1.2
ROLLOUT_END_KT = 60.0
FAF_NM = 10.0
DECEL_NM = 15.0
DS_NM = 0.02
MIN_TMA_KT = 160.0


@dataclass
class ScenarioConfig:
    seed: int = 0
    duration_h: float = 4.0
    rate_per_h: float = 30.0
    # sinusoidal modulation of the arrival rate; 0 gives a homogeneous Poisson stream
    wave_amplitude: float = 0.6
    wave_period_h: float = 1.5
    zone_weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    zone_jitter_deg: float = 35.0
    tbe_speed_kt: tuple[float, float] = (240.0, 290.0)
    final_speed_kt: float = 140.0
    tma_speed_factor: float = 0.9
    slow_kt_per_s: float = 0.25
    slow_cap_kt: float = 40.0
    hold_base: float = 0.0
    hold_gain: float = 0.25
    hold_pressure: int = 3
    hold_min_delay_s: float = 150.0
    hold_leg_s: float = 60.0
    hold_speed_kt: float = 210.0
    hold_fix_nm: float = 40.0
    hold_radius_nm: float = 1.2
    turn_radius_nm: float = 1.5
    separation_s: float = 100.0
    runway_change_h: tuple[float, ...] = (2.0,)
    recat_mix: tuple[float, ...] = (0.02, 0.15, 0.48, 0.08, 0.22, 0.05)
    unknown_type_rate: float = 0.0
    start_epoch: int = 1667260800
    spawn_nm: float = 65.0
    metar_interval_s: int = 1800

    def validate(self) -> None:
        if self.duration_h <= 0 or self.rate_per_h <= 0:
            raise ConfigError("duration and arrival rate must be positive")
        if not 0 <= self.wave_amplitude < 1:
            raise ConfigError("wave_amplitude must be in [0, 1)")
        for name in ("hold_base", "hold_gain", "unknown_type_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name, w, n in (("zone_weights", self.zone_weights, 4), ("recat_mix", self.recat_mix, 6)):
            if len(w) != n or min(w) < 0 or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError(f"{name} must hold {n} non-negative weights summing to 1")
        lo, hi = self.tbe_speed_kt
        if not 0 < lo <= hi:
            raise ConfigError("tbe_speed_kt must be an increasing positive range")
        if self.separation_s <= 0 or self.hold_leg_s <= 0:
            raise ConfigError("separation and hold leg time must be positive")

    def capacity_per_h(self, n_runways: int) -> float:
        return n_runways * 3600.0 / self.separation_s

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# local flat frame <-> sphere (azimuthal equidistant about the airport)


def local_to_latlon(geometry: AirspaceGeometry, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """East/north offsets in NM to lat/lon; the distance to the centre is preserved exactly."""
    from .airspace import EARTH_RADIUS_NM

    dist = np.hypot(x, y) / EARTH_RADIUS_NM
    brg = np.arctan2(x, y)
    p1, l1 = math.radians(geometry.center_lat), math.radians(geometry.center_lon)
    p2 = np.arcsin(np.sin(p1) * np.cos(dist) + np.cos(p1) * np.sin(dist) * np.cos(brg))
    l2 = l1 + np.arctan2(np.sin(brg) * np.sin(dist) * np.cos(p1), np.cos(dist) - np.sin(p1) * np.sin(p2))
    return np.degrees(p2), np.degrees(l2)


def latlon_to_local(geometry: AirspaceGeometry, lat: float, lon: float) -> np.ndarray:
    d = geometry.distance(lat, lon)
    b = math.radians(geometry.bearing(lat, lon))
    return np.array([d * math.sin(b), d * math.cos(b)])


def unit(course_deg: float) -> np.ndarray:
    c = math.radians(course_deg)
    return np.array([math.sin(c), math.cos(c)])


def course_of(v: np.ndarray) -> float:
    return math.degrees(math.atan2(v[0], v[1])) % 360.0


def wrap180(a: float) -> float:
    return (a + 180.0) % 360.0 - 180.0


# --------------------------------------------------------------------------
# path geometry


@dataclass
class PathSamples:
    x: np.ndarray
    y: np.ndarray
    course: np.ndarray  # unwrapped degrees
    s: np.ndarray
    hold: np.ndarray  # bool, inside a holding pattern
    s_threshold: float


class PathBuilder:
    """Accumulates straight legs and arcs, sampled every ``ds`` NM of arc length."""

    def __init__(self, start: np.ndarray, course: float, ds: float = DS_NM):
        self.ds = ds
        self.pos = np.asarray(start, dtype=np.float64)
        self.course = course
        self._x, self._y, self._c, self._h = [np.array([self.pos[0]])], [np.array([self.pos[1]])], [np.array([course])], [np.array([False])]
        self.length = 0.0

    def _append(self, x, y, c, hold: bool, seg_len: float):
        self._x.append(x)
        self._y.append(y)
        self._c.append(c)
        self._h.append(np.full(x.size, hold))
        self.length += seg_len

    def straight(self, length: float, hold: bool = False) -> None:
        if length <= 0:
            return
        n = max(1, int(math.ceil(length / self.ds)))
        f = np.arange(1, n + 1) / n * length
        u = unit(self.course)
        self._append(self.pos[0] + f * u[0], self.pos[1] + f * u[1], np.full(n, self.course), hold, length)
        self.pos = self.pos + length * u

    def arc(self, turn_deg: float, radius: float, hold: bool = False) -> None:
        if turn_deg == 0:
            return
        s = 1.0 if turn_deg > 0 else -1.0
        phi0 = math.radians(self.course)
        cx = self.pos[0] + s * radius * math.cos(phi0)
        cy = self.pos[1] - s * radius * math.sin(phi0)
        length = radius * math.radians(abs(turn_deg))
        n = max(1, int(math.ceil(length / self.ds)))
        phi = phi0 + np.radians(turn_deg) * np.arange(1, n + 1) / n
        x = cx - s * radius * np.cos(phi)
        y = cy + s * radius * np.sin(phi)
        self._append(x, y, np.degrees(phi), hold, length)
        self.pos = np.array([x[-1], y[-1]])
        self.course = self.course + turn_deg

    def go_to(self, target: np.ndarray, next_course: float | None, radius: float) -> None:
        """Fly to ``target``; if ``next_course`` is given, leave it on that course via a fillet arc."""
        leg = np.asarray(target) - self.pos
        dist = float(np.hypot(*leg))
        if dist < 1e-9:
            return
        self._turn_to(course_of(leg), radius)
        leg = np.asarray(target) - self.pos
        dist = float(np.hypot(*leg))
        if next_course is None:
            self.straight(dist)
            return
        theta = wrap180(next_course - self.course)
        lead = radius * math.tan(math.radians(abs(theta)) / 2.0)
        lead = min(lead, 0.9 * dist)
        eff_r = lead / math.tan(math.radians(abs(theta)) / 2.0) if abs(theta) > 1e-9 else radius
        self.straight(dist - lead)
        self.arc(theta, eff_r)

    def _turn_to(self, course: float, radius: float) -> None:
        theta = wrap180(course - self.course)
        if abs(theta) > 1e-9:
            self.arc(theta, radius)

    def racetrack(self, orbits: int, radius: float, leg_nm: float) -> None:
        for _ in range(orbits):
            self.arc(180.0, radius, hold=True)
            self.straight(leg_nm, hold=True)
            self.arc(180.0, radius, hold=True)
            self.straight(leg_nm, hold=True)

    def samples(self, s_threshold: float) -> PathSamples:
        x, y, c, h = (np.concatenate(p) for p in (self._x, self._y, self._c, self._h))
        seg = np.hypot(np.diff(x), np.diff(y))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return PathSamples(x, y, c, s, h, s_threshold)


@dataclass
class RoutePlan:
    spawn_bearing: float
    threshold_xy: np.ndarray
    runway_course: float
    orbits: int = 0


def build_path(plan: RoutePlan, cfg: ScenarioConfig) -> PathSamples:
    beta = plan.spawn_bearing
    inbound = (beta + 180.0) % 360.0
    start = cfg.spawn_nm * unit(beta)
    pb = PathBuilder(start, inbound)
    rho = plan.runway_course
    thr = plan.threshold_xy
    faf = thr - FAF_NM * unit(rho)

    if plan.orbits:
        pb.straight(cfg.spawn_nm - cfg.hold_fix_nm)
        leg = cfg.hold_speed_kt * cfg.hold_leg_s / 3600.0
        pb.racetrack(plan.orbits, cfg.hold_radius_nm, leg)

    w1 = 30.0 * unit(beta)
    far_side = abs(wrap180(beta - (rho + 180.0))) > 90.0
    if far_side:
        side = 1.0 if math.sin(math.radians(beta - rho)) >= 0 else -1.0
        normal = side * np.array([math.cos(math.radians(rho)), -math.sin(math.radians(rho))])
        route = [w1, thr + 12.0 * normal, faf + 10.0 * normal, faf, thr]
    else:
        route = [w1, faf, thr]
    r = cfg.turn_radius_nm
    for i, wp in enumerate(route):
        if i + 1 < len(route):
            nxt = route[i + 1] - wp
            pb.go_to(wp, course_of(nxt), r)
        else:
            pb.go_to(wp, None, r)
    s_thr = pb.length
    # keep the rollout exactly on the runway course
    pb.course = rho
    pb.straight(ROLLOUT_NM)
    return pb.samples(s_thr)


# --------------------------------------------------------------------------
# speed / time profile


@dataclass
class Kinematics:
    t: np.ndarray  # seconds since spawn at each path sample
    v: np.ndarray
    alt: np.ndarray
    r: np.ndarray  # distance to the airport centre, NM


def kinematics(path: PathSamples, v_tbe: float, v_tma: float, v_final: float, cfg: ScenarioConfig,
               trc_nm: float) -> Kinematics:
    r = np.hypot(path.x, path.y)
    remaining = path.s_threshold - path.s
    inside = np.flatnonzero(r <= trc_nm)
    first_in = int(inside[0]) if inside.size else r.size
    v = np.full(r.size, v_tma)
    v[:first_in] = v_tbe
    v[path.hold] = cfg.hold_speed_kt
    blend = (remaining >= 0) & (remaining < DECEL_NM)
    v[blend] = v_final + (v_tma - v_final) * remaining[blend] / DECEL_NM
    roll = remaining < 0
    v[roll] = v_final + (ROLLOUT_END_KT - v_final) * np.clip(-remaining[roll] / ROLLOUT_NM, 0, 1)
    inv = 3600.0 / v
    dt = 0.5 * (inv[1:] + inv[:-1]) * np.diff(path.s)
    t = np.concatenate([[0.0], np.cumsum(dt)])
    alt = np.clip(FEET_PER_NM_GLIDE * remaining, 0.0, CRUISE_ALT_FT)
    return Kinematics(t, v, alt, r)


def crossing_offset(kin: Kinematics, radius: float) -> float:
    """Seconds after spawn at which the path first comes within ``radius`` of the centre."""
    idx = np.flatnonzero((kin.r[:-1] > radius) & (kin.r[1:] <= radius))
    if idx.size == 0:
        raise ValueError("path never enters the circle")
    i = int(idx[0])
    f = (kin.r[i] - radius) / (kin.r[i] - kin.r[i + 1])
    return float(kin.t[i] + f * (kin.t[i + 1] - kin.t[i]))


def threshold_offset(kin: Kinematics, path: PathSamples) -> float:
    return float(np.interp(path.s_threshold, path.s, kin.t))


# --------------------------------------------------------------------------
# scenario


@dataclass
class TruthRow:
    aircraft_id: str
    actype: str
    recat: int
    entry_zone: str
    spawn_bearing: float
    runway: str
    threshold: str
    t_spawn: float
    t_trc: float
    t_thr: float
    label_s: float
    label_nohold_s: float
    hold_orbits: int
    tbe_speed_kt: float
    delay_s: float


TRUTH_COLUMNS = tuple(f.name for f in fields(TruthRow))
METAR_COLUMNS = ("time", "drct", "sknt", "gust", "vsby", "skyl1", "skyc1")


@dataclass
class Scenario:
    config: ScenarioConfig
    geometry: AirspaceGeometry
    runways: RunwayLayout
    trajectories: list[Trajectory]
    truth: list[TruthRow]
    metar: list[dict]
    flight_plans: list[tuple[str, str]]

    def truth_by_id(self) -> dict[str, TruthRow]:
        return {t.aircraft_id: t for t in self.truth}

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write ``adsb.csv, metar.csv, fpl.csv, truth.csv, runways.json, scenario.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / v for k, v in (
            ("adsb", "adsb.csv"), ("metar", "metar.csv"), ("fpl", "fpl.csv"), ("truth", "truth.csv"),
            ("runways", "runways.json"), ("scenario", "scenario.json"),
        )}
        write_adsb(self.trajectories, paths["adsb"])
        with open(paths["metar"], "w", newline="") as fh:
            w = csv.DictWriter(fh, METAR_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(self.metar)
        with open(paths["fpl"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("aircraft_id", "actype"))
            w.writerows(self.flight_plans)
        with open(paths["truth"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRUTH_COLUMNS)
            for row in self.truth:
                w.writerow([_fmt(getattr(row, c)) for c in TRUTH_COLUMNS])
        paths["runways"].write_text(json.dumps(self.runways.to_records(), indent=2) + "\n")
        paths["scenario"].write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n")
        return paths


def _fmt(v):
    return f"{v:.3f}" if isinstance(v, float) else v


def read_truth(path: str | Path) -> list[TruthRow]:
    types = {f.name: f.type for f in fields(TruthRow)}
    conv = {"str": str, "int": int, "float": float}
    with open(path, newline="") as fh:
        return [TruthRow(**{k: conv[types[k]](v) for k, v in row.items()}) for row in csv.DictReader(fh)]


def recat_types(path: str | Path | None = None) -> dict[str, int]:
    """Aircraft type designator -> wake category from the mapping CSV (bundled default when ``path`` is None)."""
    if path is None:
        text = resources.files("altpred.data").joinpath("recat_types.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(text.splitlines())
    return {r["actype"].strip().upper(): int(r["recat_code"]) for r in rows}


class _RunwayState:
    def __init__(self, runways: RunwayLayout, geometry: AirspaceGeometry, cfg: ScenarioConfig):
        self.pavements = runways.physical_runways
        self.ends: dict[str, list] = {p: [] for p in self.pavements}
        for t in runways.thresholds:
            self.ends[physical_runway(t.name)].append(t)
        self.primary = runways.thresholds[0].bearing
        self.flips = sorted(cfg.start_epoch + h * 3600.0 for h in cfg.runway_change_h)
        self.last = {p: -math.inf for p in self.pavements}
        self.geometry = geometry

    def course_at(self, t: float) -> float:
        n = sum(1 for f in self.flips if f <= t)
        return (self.primary + 180.0 * (n % 2)) % 360.0

    def threshold(self, pavement: str, course: float):
        return min(self.ends[pavement], key=lambda th: abs(wrap180(th.bearing - course)))


def _arrival_times(rng: np.random.Generator, cfg: ScenarioConfig) -> np.ndarray:
    """Non-homogeneous Poisson spawn times (seconds from start) by thinning."""
    horizon = cfg.duration_h * 3600.0
    peak = cfg.rate_per_h * (1.0 + cfg.wave_amplitude) / 3600.0
    times, t = [], 0.0
    while True:
        t += rng.exponential(1.0 / peak)
        if t >= horizon:
            break
        rate = cfg.rate_per_h / 3600.0 * (1.0 + cfg.wave_amplitude * math.sin(2 * math.pi * t / (cfg.wave_period_h * 3600.0)))
        if rng.random() < rate / (peak):
            times.append(t)
    return np.array(times)


def _metar_series(rng: np.random.Generator, cfg: ScenarioConfig, t0: int, t1: int) -> list[dict]:
    rows = []
    drct = float(rng.integers(0, 36) * 10)
    for t in range(t0, t1 + 1, cfg.metar_interval_s):
        drct = (drct + 10.0 * rng.integers(-2, 3)) % 360.0
        sknt = int(rng.integers(3, 22))
        gust = str(sknt + int(rng.integers(6, 14))) if sknt >= 14 and rng.random() < 0.5 else ""
        vsby = 10.0 if rng.random() < 0.8 else float(rng.integers(3, 10))
        cover = rng.choice(["FEW", "SCT", "BKN", "OVC"], p=[0.35, 0.35, 0.2, 0.1])
        skyl1 = int(rng.integers(12, 45)) * 100
        rows.append({"time": t, "drct": int(drct), "sknt": sknt, "gust": gust, "vsby": vsby, "skyl1": skyl1,
                     "skyc1": str(cover)})
    return rows


def _wind_at(metar: list[dict], t: float) -> tuple[float, float]:
    times = [r["time"] for r in metar]
    i = max(0, int(np.searchsorted(times, t, "right")) - 1)
    return float(metar[i]["drct"]), float(metar[i]["sknt"])


def sample_track(ident: str, t_spawn: float, path: PathSamples, kin: Kinematics,
                 geometry: AirspaceGeometry) -> Trajectory:
    """1 Hz fixes at integer epoch seconds along the path."""
    t_abs = t_spawn + kin.t
    times = np.arange(math.ceil(t_abs[0]), math.floor(t_abs[-1]) + 1, dtype=np.int64)
    x = np.interp(times, t_abs, path.x)
    y = np.interp(times, t_abs, path.y)
    lat, lon = local_to_latlon(geometry, x, y)
    gs = np.interp(times, t_abs, kin.v)
    alt = np.interp(times, t_abs, kin.alt)
    hdg = np.interp(times, t_abs, path.course) % 360.0
    return Trajectory(ident, times, lat, lon, alt, gs, hdg)


def generate(cfg: ScenarioConfig, geometry: AirspaceGeometry | None = None,
             runways: RunwayLayout | None = None) -> Scenario:
    """Simulate one scenario; fully determined by ``cfg`` (including its seed)."""
    from .airspace import load_runways

    cfg.validate()
    geometry = geometry or AirspaceGeometry()
    runways = runways or load_runways()
    state = _RunwayState(runways, geometry, cfg)
    peak = cfg.rate_per_h * (1.0 + cfg.wave_amplitude)
    capacity = cfg.capacity_per_h(len(state.pavements))
    if peak > capacity:
        raise ConfigError(
            f"peak arrival rate {peak:.1f}/h exceeds runway capacity {capacity:.1f}/h "
            f"({len(state.pavements)} runways, {cfg.separation_s:.0f} s separation)"
        )
    rng = np.random.default_rng(cfg.seed)
    types = recat_types()
    by_class: dict[int, list[str]] = {}
    for actype, code in sorted(types.items()):
        by_class.setdefault(code, []).append(actype)

    spawn = cfg.start_epoch + _arrival_times(rng, cfg)
    end_epoch = int(cfg.start_epoch + cfg.duration_h * 3600 + 7200)
    metar = _metar_series(rng, cfg, cfg.start_epoch - 7200, end_epoch)

    # per-aircraft draws happen up front so that the stream is independent of scheduling
    n = spawn.size
    zones = rng.choice(4, size=n, p=list(cfg.zone_weights))
    jitter = rng.uniform(-cfg.zone_jitter_deg, cfg.zone_jitter_deg, size=n)
    v_nom = rng.uniform(*cfg.tbe_speed_kt, size=n)
    recats = rng.choice(6, size=n, p=list(cfg.recat_mix))
    type_pick = rng.random(size=n)
    unknown = rng.random(size=n) < cfg.unknown_type_rate
    hold_draw = rng.random(size=n)

    thr_xy = {t.name: latlon_to_local(geometry, t.lat, t.lon) for t in runways.thresholds}
    plans = []
    for i in range(n):
        beta = (ZONE_BEARING[ZONES[zones[i]]] + jitter[i]) % 360.0
        wind_dir, wind_kt = _wind_at(metar, spawn[i] + 1200)
        course = state.course_at(spawn[i] + 1200)
        headwind = wind_kt * math.cos(math.radians(wind_dir - course))
        v_final = cfg.final_speed_kt + 3.0 * recats[i] - 0.5 * headwind
        plans.append((beta, course, v_final))

    # unimpeded landing estimate on the first pavement; pavements share geometry closely
    def unimpeded(i: int, pavement: str):
        beta, course, v_final = plans[i]
        th = state.threshold(pavement, course)
        plan = RoutePlan(beta, thr_xy[th.name], th.bearing)
        path = build_path(plan, cfg)
        v_tma = cfg.tma_speed_factor * v_nom[i]
        kin = kinematics(path, v_nom[i], v_tma, v_final, cfg, geometry.trc_radius)
        return th, path, kin

    estimates = []
    for i in range(n):
        th, path, kin = unimpeded(i, state.pavements[0])
        estimates.append(spawn[i] + threshold_offset(kin, path))
    order = np.argsort(np.array(estimates), kind="stable")

    airborne: list[tuple[float, float]] = []  # (t_trc, t_thr) of scheduled aircraft
    trajectories, truth, fpl = [], [], []
    for i in map(int, order):
        ident = f"A{i:05d}"
        beta, course, v_final = plans[i]
        # pick the pavement offering the earliest slot
        best = None
        for pav in state.pavements:
            th, path, kin = unimpeded(i, pav)
            eta = spawn[i] + threshold_offset(kin, path)
            slot = max(eta, state.last[pav] + cfg.separation_s)
            if best is None or slot < best[0] - 1e-9:
                best = (slot, pav, th, eta, path, kin)
        slot, pav, th, eta, path0, kin0 = best
        delay = slot - eta
        t_trc0 = spawn[i] + crossing_offset(kin0, geometry.trc_radius)
        pressure = sum(1 for a, b in airborne if a <= t_trc0 < b)

        v_tbe = v_nom[i] - min(cfg.slow_cap_kt, cfg.slow_kt_per_s * delay)
        p_hold = min(1.0, max(0.0, cfg.hold_base + cfg.hold_gain * max(0, pressure - cfg.hold_pressure)))
        orbits = 0
        plan = RoutePlan(beta, thr_xy[th.name], th.bearing)
        path = path0
        v_tma = cfg.tma_speed_factor * v_nom[i]
        kin = kinematics(path, v_tbe, v_tma, v_final, cfg, geometry.trc_radius)
        remaining = slot - (spawn[i] + threshold_offset(kin, path))
        if delay >= cfg.hold_min_delay_s and hold_draw[i] < p_hold and remaining > 0:
            leg = cfg.hold_speed_kt * cfg.hold_leg_s / 3600.0
            orbit_s = (2 * math.pi * cfg.hold_radius_nm + 2 * leg) / cfg.hold_speed_kt * 3600.0
            orbits = max(1, int(round(remaining / orbit_s)))
            plan = RoutePlan(beta, thr_xy[th.name], th.bearing, orbits)
            path = build_path(plan, cfg)
            kin = kinematics(path, v_tbe, v_tma, v_final, cfg, geometry.trc_radius)
            remaining = slot - (spawn[i] + threshold_offset(kin, path))
        if remaining > 0:
            # stretch the terminal-area leg by flying it slower
            tma_len = float(np.sum(np.diff(path.s)[(kin.r[1:] <= geometry.trc_radius)
                                                   & ~path.hold[1:] & (path.s_threshold - path.s[1:] >= DECEL_NM)]))
            if tma_len > 0:
                t_now = tma_len / v_tma * 3600.0
                v_tma = max(MIN_TMA_KT, tma_len / ((t_now + remaining) / 3600.0))
                kin = kinematics(path, v_tbe, v_tma, v_final, cfg, geometry.trc_radius)

        t_trc = spawn[i] + crossing_offset(kin, geometry.trc_radius)
        t_thr = spawn[i] + threshold_offset(kin, path)
        if orbits:
            nohold = build_path(RoutePlan(beta, thr_xy[th.name], th.bearing), cfg)
            kin_nh = kinematics(nohold, v_tbe, v_tma, v_final, cfg, geometry.trc_radius)
            label_nohold = threshold_offset(kin_nh, nohold) - crossing_offset(kin_nh, geometry.trc_radius)
        else:
            label_nohold = t_thr - t_trc
        state.last[pav] = max(state.last[pav], t_thr)
        airborne.append((t_trc, t_thr))

        if unknown[i]:
            actype = "ZZZZ"
        else:
            pool = by_class[int(recats[i])]
            actype = pool[int(type_pick[i] * len(pool))]
        trajectories.append(sample_track(ident, spawn[i], path, kin, geometry))
        fpl.append((ident, actype))
        truth.append(TruthRow(
            ident, actype, int(recats[i]), zone_of_bearing(beta), round(beta, 3), pav, th.name, float(spawn[i]),
            float(t_trc), float(t_thr), float(t_thr - t_trc), float(label_nohold), orbits, float(v_tbe),
            float(delay),
        ))

    trajectories.sort(key=lambda tr: tr.aircraft_id)
    truth.sort(key=lambda r: r.aircraft_id)
    fpl.sort()
    log.info("simulated %d arrivals, %d holding", len(truth), sum(1 for r in truth if r.hold_orbits))
    return Scenario(cfg, geometry, runways, trajectories, truth, metar, fpl)


def inject_gaps(trajs: Sequence[Trajectory], rate: float, seed: int = 0) -> list[Trajectory]:
    """Delete each interior fix independently with probability ``rate``; endpoints are kept."""
    if not 0.0 <= rate <= 0.2:
        raise ConfigError("gap rate must be in [0, 0.2]")
    rng = np.random.default_rng(seed)
    out = []
    for tr in trajs:
        keep = rng.random(len(tr)) >= rate
        keep[0] = keep[-1] = True
        out.append(tr.slice(keep))
    return out


def inject_gaps_csv(src: str | Path, dest: str | Path, rate: float, seed: int = 0) -> None:
    """File-level :func:`inject_gaps`: rows of the input CSV are dropped, never rewritten."""
    if not 0.0 <= rate <= 0.2:
        raise ConfigError("gap rate must be in [0, 0.2]")
    rng = np.random.default_rng(seed)
    with open(src, newline="") as fh:
        lines = fh.read().splitlines(keepends=True)
    if not lines:
        Path(dest).write_text("")
        return
    header, body = lines[0], lines[1:]
    ids = [ln.split(",", 1)[0] for ln in body]
    keep = rng.random(len(body)) >= rate
    for i in range(len(body)):
        first = i == 0 or ids[i - 1] != ids[i]
        last = i == len(body) - 1 or ids[i + 1] != ids[i]
        if first or last:
            keep[i] = True
    with open(dest, "w", newline="") as fh:
        fh.write(header)
        fh.writelines(ln for ln, k in zip(body, keep) if k)
