"""Trajectory containers shared by ingest, airspace, holding and raster."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdsbPoint:
    aircraft_id: str
    timestamp: int
    lat: float
    lon: float
    alt: float
    ground_speed: float
    heading: float
    imputed: bool = False

    def is_valid(self) -> bool:
        return (
            -90.0 <= self.lat <= 90.0
            and -180.0 <= self.lon <= 180.0
            and self.ground_speed >= 0.0
            and bool(np.isfinite([self.lat, self.lon, self.alt, self.ground_speed, self.heading]).all())
        )


@dataclass(eq=False)
class Trajectory:
    """Time-ordered track of one aircraft stored column-wise.

    ``time`` is integer epoch seconds; after assembly consecutive entries are
    exactly one second apart.
    """

    aircraft_id: str
    time: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    gs: np.ndarray
    heading: np.ndarray
    imputed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=np.int64)
        for name in ("lat", "lon", "alt", "gs", "heading"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.imputed is None:
            self.imputed = np.zeros(self.time.size, dtype=bool)
        self.imputed = np.asarray(self.imputed, dtype=bool)
        n = self.time.size
        for name in ("lat", "lon", "alt", "gs", "heading", "imputed"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"trajectory {self.aircraft_id}: column {name} has wrong length")

    def __len__(self) -> int:
        return int(self.time.size)

    @property
    def start(self) -> int:
        return int(self.time[0])

    @property
    def end(self) -> int:
        return int(self.time[-1])

    @property
    def points(self) -> list[AdsbPoint]:
        return [self.point(i) for i in range(len(self))]

    def point(self, i: int) -> AdsbPoint:
        return AdsbPoint(
            self.aircraft_id, int(self.time[i]), float(self.lat[i]), float(self.lon[i]), float(self.alt[i]),
            float(self.gs[i]), float(self.heading[i]), bool(self.imputed[i]),
        )

    def slice(self, mask_or_slice) -> "Trajectory":
        return Trajectory(
            self.aircraft_id, self.time[mask_or_slice], self.lat[mask_or_slice], self.lon[mask_or_slice],
            self.alt[mask_or_slice], self.gs[mask_or_slice], self.heading[mask_or_slice],
            self.imputed[mask_or_slice],
        )

    def between(self, t0: float, t1: float) -> "Trajectory":
        """Points with ``t0 <= time <= t1``."""
        return self.slice((self.time >= t0) & (self.time <= t1))

    def index_of(self, t: int) -> int | None:
        i = int(np.searchsorted(self.time, t))
        if i < len(self) and self.time[i] == t:
            return i
        return None

    @classmethod
    def from_points(cls, points) -> "Trajectory":
        points = list(points)
        if not points:
            raise ValueError("a trajectory needs at least one point")
        return cls(
            points[0].aircraft_id,
            [p.timestamp for p in points], [p.lat for p in points], [p.lon for p in points],
            [p.alt for p in points], [p.ground_speed for p in points], [p.heading for p in points],
            [p.imputed for p in points],
        )

    def equals(self, other: "Trajectory") -> bool:
        return (
            self.aircraft_id == other.aircraft_id
            and len(self) == len(other)
            and all(
                np.array_equal(getattr(self, c), getattr(other, c))
                for c in ("time", "lat", "lon", "alt", "gs", "heading", "imputed")
            )
        )


ZONES = ("N", "E", "S", "W")


@dataclass(frozen=True)
class ArrivalRecord:
    aircraft_id: str
    runway: str
    threshold: str
    t_trc: int
    t_thr: int
    entry_zone: str
    recat: int = 2

    def __post_init__(self):
        if self.t_thr <= self.t_trc:
            raise ValueError(f"{self.aircraft_id}: landing time {self.t_thr} not after TRC crossing {self.t_trc}")
        if self.entry_zone not in ZONES:
            raise ValueError(f"unknown entry zone {self.entry_zone!r}")
        if not 0 <= self.recat <= 5:
            raise ValueError(f"recat code {self.recat} outside 0..5")

    @property
    def label_seconds(self) -> int:
        return self.t_thr - self.t_trc
