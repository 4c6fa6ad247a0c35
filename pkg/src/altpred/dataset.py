"""Labeled samples: tabular and holding vectors, trajectory images, splits and manifests."""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from .airspace import AirspaceGeometry, RunwayLayout, runway_ops_features
from .errors import DataError, SchemaError
from .holding import HOLD_DEGREES, HOLD_WINDOW_S, ArrivalIndex, detect_holding, holding_features, tbe_mean_speed
from .raster import decode_png, encode_png, image_file_name, ink, render
from .track import ArrivalRecord, Trajectory

log = logging.getLogger(__name__)

TABULAR_FIELDS = (
    "arrivals_runway_1", "arrivals_runway_2", "runway_change", "drct", "sknt", "gust", "vsby", "skyl1", "skyc1",
    "is_peakhour", "is_weekday", "recat",
)

WEATHER_FIELDS = ("drct", "sknt", "gust", "vsby", "skyl1", "skyc1")
METAR_MAX_AGE_S = 7200
DEFAULT_TZ_OFFSET_H = 8.0
UNKNOWN_RECAT = 2
PEAK_HOURS = ((7, 10), (17, 21))
SIGNIFICANT_COVER = {"BKN", "OVC", "VV"}


# --------------------------------------------------------------------------
# weather


def _cover_flag(value: str) -> float:
    v = value.strip().upper()
    if not v:
        return 0.0
    try:
        return 1.0 if float(v) >= 0.5 else 0.0
    except ValueError:
        return 1.0 if v[:3] in SIGNIFICANT_COVER or v[:2] in SIGNIFICANT_COVER else 0.0


def _num(value: str, default: float | None) -> float:
    v = value.strip() if value is not None else ""
    if v in ("", "M", "NA", "nan"):
        if default is None:
            raise ValueError("missing value")
        return default
    return float(v)


# fill values for fields a report may legitimately omit
WEATHER_DEFAULTS = {"drct": 0.0, "sknt": 0.0, "gust": 0.0, "vsby": 10.0, "skyl1": 0.0}


@dataclass
class MetarTable:
    """Weather reports sorted by time; ``values`` columns follow :data:`WEATHER_FIELDS`."""

    time: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return int(self.time.size)

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[str, object]]) -> "MetarTable":
        times, vals = [], []
        for r in rows:
            try:
                times.append(int(float(r["time"])))
                vals.append([
                    *(_num(str(r.get(k, "")), WEATHER_DEFAULTS[k]) for k in ("drct", "sknt", "gust", "vsby", "skyl1")),
                    _cover_flag(str(r.get("skyc1", ""))),
                ])
            except (KeyError, ValueError) as exc:
                raise SchemaError(f"bad METAR row {dict(r)}: {exc}") from exc
        order = np.argsort(np.array(times, dtype=np.int64), kind="stable")
        return cls(np.array(times, dtype=np.int64)[order], np.array(vals, dtype=np.float64).reshape(-1, 6)[order])

    @classmethod
    def read_csv(cls, path: str | Path) -> "MetarTable":
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = {"time", *WEATHER_FIELDS} - set(reader.fieldnames or ())
                if missing:
                    raise SchemaError(f"METAR file is missing columns: {sorted(missing)}")
                return cls.from_rows(list(reader))
        except OSError as exc:
            raise DataError(f"cannot read METAR file: {exc}") from exc


def join_weather(t_ref: int, metar: MetarTable, max_age_s: int = METAR_MAX_AGE_S) -> np.ndarray:
    """Latest report at or before ``t_ref``; no look-ahead."""
    i = int(np.searchsorted(metar.time, t_ref, side="right")) - 1
    if i < 0 or t_ref - metar.time[i] > max_age_s:
        raise DataError(f"no METAR report within {max_age_s} s before {t_ref}")
    return metar.values[i].copy()


def seasonality(t_ref: int, tz_offset: float = DEFAULT_TZ_OFFSET_H) -> tuple[int, int]:
    """``(is_peakhour, is_weekday)`` in local time."""
    local = dt.datetime.fromtimestamp(t_ref, dt.timezone(dt.timedelta(hours=tz_offset)))
    peak = any(lo <= local.hour < hi for lo, hi in PEAK_HOURS)
    return int(peak), int(local.weekday() < 5)


# --------------------------------------------------------------------------
# flight plans and wake categories


def read_flight_plans(path: str | Path) -> dict[str, str]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not {"aircraft_id", "actype"} <= set(reader.fieldnames or ()):
                raise SchemaError("flight-plan file needs columns aircraft_id,actype")
            return {r["aircraft_id"].strip(): r["actype"].strip().upper() for r in reader}
    except OSError as exc:
        raise DataError(f"cannot read flight plans: {exc}") from exc


def read_recat_map(path: str | Path | None = None) -> dict[str, int]:
    from .simgen import recat_types

    try:
        mapping = recat_types(path)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read RECAT mapping: {exc}") from exc
    bad = {k: v for k, v in mapping.items() if not 0 <= v <= 5}
    if bad:
        raise SchemaError(f"RECAT codes outside 0..5: {bad}")
    return mapping


def resolve_recat(actype: str | None, mapping: Mapping[str, int]) -> tuple[int, bool]:
    """Wake category for a type designator; unknown types fall back to code 2 and are flagged."""
    if actype:
        code = mapping.get(actype.strip().upper())
        if code is not None:
            return int(code), False
    return UNKNOWN_RECAT, True


# --------------------------------------------------------------------------
# samples


@dataclass
class ArrivalSample:
    aircraft_id: str
    t_ref: int
    tabular: np.ndarray
    holding: np.ndarray
    label_s: float
    image: np.ndarray | None = None  # uint8 (H, W, 3)
    image_ref: str | None = None
    recat_flag: bool = False
    holding_status: int = 0
    entry_zone: str = ""
    runway: str = ""

    def __post_init__(self):
        self.tabular = np.asarray(self.tabular, dtype=np.float64)
        self.holding = np.asarray(self.holding, dtype=np.float64)
        if self.tabular.shape != (12,):
            raise ValueError(f"tabular vector must have 12 values, got {self.tabular.shape}")
        if self.holding.shape != (5,):
            raise ValueError(f"holding vector must have 5 values, got {self.holding.shape}")
        if not self.label_s > 0:
            raise ValueError(f"{self.aircraft_id}: label must be positive, got {self.label_s}")

    @property
    def recat(self) -> int:
        return int(self.tabular[11])

    def pixels(self, base_dir: str | Path | None = None) -> np.ndarray:
        if self.image is not None:
            return self.image
        if self.image_ref is None:
            raise DataError(f"{self.aircraft_id}: sample has no image")
        path = Path(self.image_ref)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return decode_png(path)


@dataclass
class BuildReport:
    built: int = 0
    skipped: int = 0
    recat_flagged: int = 0
    errors: list[str] = field(default_factory=list)


class TrackIndex:
    """Trajectories grouped by aircraft with time-range queries."""

    def __init__(self, trajs: Sequence[Trajectory]):
        self.trajs = sorted(trajs, key=lambda t: (t.aircraft_id, t.start))
        self.start = np.array([t.start for t in self.trajs], dtype=np.int64)
        self.end = np.array([t.end for t in self.trajs], dtype=np.int64)
        self.by_id: dict[str, list[Trajectory]] = {}
        for t in self.trajs:
            self.by_id.setdefault(t.aircraft_id, []).append(t)

    def containing(self, aircraft_id: str, t: int) -> Trajectory | None:
        for tr in self.by_id.get(aircraft_id, ()):
            if tr.start <= t <= tr.end:
                return tr
        return None

    def active(self, t0: int, t1: int) -> list[Trajectory]:
        idx = np.flatnonzero((self.start <= t1) & (self.end >= t0))
        return [self.trajs[i] for i in idx]


def build_samples(
    arrivals: Sequence[ArrivalRecord],
    trajs: Sequence[Trajectory],
    metar: MetarTable,
    flight_plans: Mapping[str, str] | Iterable[tuple[str, str]],
    geometry: AirspaceGeometry,
    runways: RunwayLayout,
    tau: int,
    delta_s: float,
    image_size: int = 64,
    recat_map: Mapping[str, int] | None = None,
    tz_offset: float = DEFAULT_TZ_OFFSET_H,
    image_dir: str | Path | None = None,
    keep_pixels: bool = True,
    report: BuildReport | None = None,
    hold_window_s: int = HOLD_WINDOW_S,
    hold_deg: float = HOLD_DEGREES,
) -> list[ArrivalSample]:
    """Compose one :class:`ArrivalSample` per arrival.

    When ``image_dir`` is given every image is also written there as
    ``<id>_<t_ref>.png`` and the sample's ``image_ref`` is the file name.
    Arrivals that cannot be featurised are logged and skipped.
    """
    report = report if report is not None else BuildReport()
    recat_map = recat_map if recat_map is not None else read_recat_map()
    flight_plans = dict(flight_plans)
    tracks = TrackIndex(trajs)
    arrivals = sorted(arrivals, key=lambda r: (r.aircraft_id, r.t_trc))
    index = ArrivalIndex(arrivals)
    by_thr = sorted(arrivals, key=lambda r: r.t_thr)
    thr_times = np.array([a.t_thr for a in by_thr], dtype=np.int64)
    pavements = runways.physical_runways[:2]

    own_track = {a: tracks.containing(a.aircraft_id, a.t_trc) for a in arrivals}
    holdings: dict[str, int] = {}
    speeds: dict[str, float] = {}
    for a, tr in own_track.items():
        if tr is None:
            continue
        holdings[a.aircraft_id] = detect_holding(tr, geometry, hold_window_s, hold_deg).holding
        try:
            speeds[a.aircraft_id] = tbe_mean_speed(tr, geometry)
        except ValueError:
            pass

    if image_dir is not None:
        Path(image_dir).mkdir(parents=True, exist_ok=True)
    clip_cache: dict = {}
    samples = []
    for a in arrivals:
        try:
            tr = own_track[a]
            if tr is None:
                raise DataError("no trajectory covers the TRC crossing")
            t_ref = a.t_trc
            lo = np.searchsorted(thr_times, t_ref - delta_s, "left")
            hi = np.searchsorted(thr_times, t_ref, "right")
            ops = runway_ops_features(by_thr[lo:hi], t_ref, delta_s, pavements)
            counts = ops.counts(pavements) + [0] * (2 - len(pavements))
            weather = join_weather(t_ref, metar)
            peak, weekday = seasonality(t_ref, tz_offset)
            recat, flagged = resolve_recat(flight_plans.get(a.aircraft_id), recat_map)
            tabular = np.array([*counts, ops.runway_change_label, *weather, peak, weekday, recat], dtype=np.float64)
            hf = holding_features(a, index, speeds, holdings, delta_s)
            others = [o for o in tracks.active(t_ref - tau, t_ref) if o is not tr]
            img = render(tr, others, geometry, t_ref, tau, image_size, cache=clip_cache)
        except (DataError, ValueError) as exc:
            report.skipped += 1
            report.errors.append(f"{a.aircraft_id}@{a.t_trc}: {exc}")
            log.warning("skipping %s at %d: %s", a.aircraft_id, a.t_trc, exc)
            continue
        ref = None
        if image_dir is not None:
            ref = image_file_name(a.aircraft_id, t_ref)
            encode_png(img, Path(image_dir) / ref)
        report.recat_flagged += int(flagged)
        samples.append(ArrivalSample(
            a.aircraft_id, t_ref, tabular, hf.vector(), float(a.label_seconds),
            img.pixels if keep_pixels else None, ref, flagged, holdings.get(a.aircraft_id, 0), a.entry_zone,
            a.runway,
        ))
    report.built = len(samples)
    return samples


# --------------------------------------------------------------------------
# split and normalisation


def split(samples: Sequence, ratios: tuple[float, float, float] = (0.70, 0.15, 0.15), seed: int = 0):
    """Seeded shuffle into train/val/test.

    Validation and test sizes are ``floor(ratio * n)``; the remainder goes to
    train.
    """
    if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(samples)
    if n < 3:
        raise DataError(f"need at least 3 samples to split, got {n}")
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    perm = np.random.default_rng(seed).permutation(n)
    val = [samples[i] for i in perm[:n_val]]
    test = [samples[i] for i in perm[n_val:n_val + n_test]]
    train = [samples[i] for i in perm[n_val + n_test:]]
    return train, val, test


def feature_matrix(samples: Sequence[ArrivalSample]) -> np.ndarray:
    """``(n, 17)``: the 12 tabular values followed by the 5 holding values."""
    if not samples:
        return np.zeros((0, 17))
    return np.stack([np.concatenate([s.tabular, s.holding]) for s in samples])


def fit_normalizer(train: Sequence[ArrivalSample]) -> StandardScaler:
    """Per-feature z-score fitted on the training split; constant features get unit scale."""
    if not train:
        raise DataError("cannot fit a normalizer on an empty training split")
    return StandardScaler().fit(feature_matrix(train))


def apply_normalizer(scaler: StandardScaler, samples: Sequence[ArrivalSample]) -> list[ArrivalSample]:
    """Copies of ``samples`` with normalised feature vectors; labels stay in seconds."""
    if not samples:
        return []
    z = scaler.transform(feature_matrix(samples))
    return [replace(s, tabular=z[i, :12], holding=z[i, 12:]) for i, s in enumerate(samples)]


# --------------------------------------------------------------------------
# manifest


def write_manifest(samples: Iterable[ArrivalSample], path: str | Path) -> Path:
    """JSONL, one sample per line, ordered by (id, t_ref); image paths stay relative."""
    path = Path(path)
    rows = sorted(samples, key=lambda s: (s.aircraft_id, s.t_ref))
    with open(path, "w") as fh:
        for s in rows:
            fh.write(json.dumps({
                "id": s.aircraft_id,
                "image": s.image_ref,
                "tabular": [float(v) for v in s.tabular],
                "holding": [float(v) for v in s.holding],
                "label_s": float(s.label_s),
                "t_ref": int(s.t_ref),
                "recat_flag": bool(s.recat_flag),
                "holding_status": int(s.holding_status),
                "entry_zone": s.entry_zone,
                "runway": s.runway,
            }) + "\n")
    return path


def read_manifest(path: str | Path) -> list[ArrivalSample]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest: {exc}") from exc
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            image = r["image"]
            out.append(ArrivalSample(
                r["id"], int(r.get("t_ref", 0)), r["tabular"], r["holding"], float(r["label_s"]), None,
                str(path.parent / image) if image else None, bool(r.get("recat_flag", False)),
                int(r.get("holding_status", 0)), r.get("entry_zone", ""), r.get("runway", ""),
            ))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SchemaError(f"{path}:{n}: bad manifest line: {exc}") from exc
    return out


def sample_arrays(samples: Sequence[ArrivalSample], dtype=np.float32):
    """Stack samples into network inputs: ink images, tabular, holding and labels."""
    if not samples:
        raise DataError("no samples")
    images = np.stack([ink(s.pixels(), dtype) for s in samples])
    tab = np.stack([s.tabular for s in samples])
    hold = np.stack([s.holding for s in samples])
    labels = np.array([s.label_s for s in samples], dtype=np.float64)
    return images, tab, hold, labels
