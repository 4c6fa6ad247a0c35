"""ADS-B parsing, 1 Hz trajectory assembly and arrival extraction."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .airspace import INBOUND, TRC, AirspaceGeometry, RunwayLayout, crossing_time, entry_zone, match_threshold, physical_runway
from .errors import DataError, SchemaError
from .track import AdsbPoint, ArrivalRecord, Trajectory

log = logging.getLogger(__name__)

ADSB_COLUMNS = ("id", "time", "lat", "lon", "alt", "gs", "trk")
DEFAULT_MAX_GAP = 10


@dataclass
class AdsbTable:
    """Column-oriented batch of position reports; indexes like a list of :class:`AdsbPoint`."""

    aircraft_id: np.ndarray
    time: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    alt: np.ndarray
    gs: np.ndarray
    heading: np.ndarray
    skipped: int = 0

    def __len__(self) -> int:
        return int(self.time.size)

    def __getitem__(self, i: int) -> AdsbPoint:
        return AdsbPoint(
            str(self.aircraft_id[i]), int(self.time[i]), float(self.lat[i]), float(self.lon[i]),
            float(self.alt[i]), float(self.gs[i]), float(self.heading[i]), False,
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def parse_adsb(source: str | Path | IO[str], schema: Mapping[str, str] | None = None) -> AdsbTable:
    """Read an ADS-B CSV into an :class:`AdsbTable`.

    ``schema`` maps canonical column names (``id, time, lat, lon, alt, gs,
    trk``) to the names used in the file. Rows that fail to parse or violate
    coordinate/speed ranges are skipped and counted in ``skipped``.
    """
    names = {c: c for c in ADSB_COLUMNS}
    names.update(schema or {})
    try:
        if isinstance(source, (str, Path)):
            with open(source, newline="") as fh:
                return _parse_rows(csv.reader(fh), names)
        return _parse_rows(csv.reader(source), names)
    except OSError as exc:
        raise DataError(f"cannot read ADS-B input: {exc}") from exc


def _parse_rows(reader, names: Mapping[str, str]) -> AdsbTable:
    header = next(reader, None)
    if header is None:
        raise SchemaError("ADS-B input has no header row")
    header = [h.strip() for h in header]
    missing = [c for c in ADSB_COLUMNS if names[c] not in header]
    if missing:
        raise SchemaError(f"ADS-B input is missing columns: {', '.join(names[c] for c in missing)}")
    pos = [header.index(names[c]) for c in ADSB_COLUMNS]
    ids: list[str] = []
    num: list[tuple] = []
    skipped = 0
    for row in reader:
        if not row:
            continue
        try:
            ident = row[pos[0]].strip()
            t = int(float(row[pos[1]]))
            lat, lon, alt, gs, trk = (float(row[p]) for p in pos[2:])
        except (ValueError, IndexError):
            skipped += 1
            continue
        if (
            not ident or not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0 or not gs >= 0.0
            or not np.isfinite(alt) or not np.isfinite(trk)
        ):
            skipped += 1
            continue
        ids.append(ident)
        num.append((t, lat, lon, alt, gs, trk % 360.0))
    if skipped:
        log.info("skipped %d malformed ADS-B rows", skipped)
    arr = np.array(num, dtype=np.float64).reshape(-1, 6)
    return AdsbTable(
        np.array(ids, dtype=object), arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
        arr[:, 5], skipped,
    )


def write_adsb(trajs: Iterable[Trajectory], dest: str | Path | IO[str]) -> None:
    """Write trajectories in the canonical CSV layout (imputed flags are not persisted)."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_adsb(trajs, fh)
        return
    dest.write(",".join(ADSB_COLUMNS) + "\n")
    for tr in trajs:
        rows = zip(tr.time, tr.lat, tr.lon, tr.alt, tr.gs, tr.heading)
        dest.writelines(f"{tr.aircraft_id},{t},{la:.7f},{lo:.7f},{a:.1f},{g:.2f},{h:.3f}\n" for t, la, lo, a, g, h in rows)


# --------------------------------------------------------------------------
# assembly


@dataclass
class AssemblyStats:
    trajectories: int = 0
    imputed_points: int = 0
    linear_fallbacks: int = 0
    splits: int = 0
    duplicates: int = 0
    dropped_fragments: int = 0


def _as_columns(points) -> tuple[np.ndarray, ...]:
    if isinstance(points, AdsbTable):
        return (points.aircraft_id, points.time, points.lat, points.lon, points.alt, points.gs, points.heading,
                np.zeros(len(points), dtype=bool))
    if isinstance(points, Trajectory):
        points = [points]
    points = list(points)
    if points and isinstance(points[0], Trajectory):
        cols = [np.concatenate([np.full(len(t), t.aircraft_id, dtype=object) for t in points])]
        for c in ("time", "lat", "lon", "alt", "gs", "heading", "imputed"):
            cols.append(np.concatenate([getattr(t, c) for t in points]))
        return tuple(cols)
    if not points:
        return (np.array([], dtype=object), *(np.array([]) for _ in range(6)), np.array([], dtype=bool))
    return (
        np.array([p.aircraft_id for p in points], dtype=object),
        np.array([p.timestamp for p in points], dtype=np.int64),
        np.array([p.lat for p in points]), np.array([p.lon for p in points]), np.array([p.alt for p in points]),
        np.array([p.ground_speed for p in points]), np.array([p.heading for p in points]),
        np.array([p.imputed for p in points], dtype=bool),
    )


def _quadratic_support(real_t: np.ndarray, left: int) -> list[int] | None:
    """Indices of the 3 real fixes nearest to the gap after ``real_t[left]``.

    The two bracketing fixes are always used; the third is whichever neighbour
    is closer in time, preferring the earlier one on ties.
    """
    n = real_t.size
    if n < 3:
        return None
    right = left + 1
    before = left - 1 if left >= 1 else None
    after = right + 1 if right + 1 < n else None
    if before is None:
        return [left, right, after]
    if after is None:
        return [before, left, right]
    gap_mid2 = real_t[left] + real_t[right]  # twice the gap centre, kept integral
    d_before = gap_mid2 - 2 * real_t[before]
    d_after = 2 * real_t[after] - gap_mid2
    return [before, left, right] if d_before <= d_after else [left, right, after]


def _lagrange(tx: np.ndarray, ty: np.ndarray, t: np.ndarray) -> np.ndarray:
    # times relative to the first support point avoid cancellation at epoch scale
    x = (tx - tx[0]).astype(np.float64)
    s = (t - tx[0]).astype(np.float64)
    out = np.zeros_like(s)
    for i in range(3):
        basis = np.ones_like(s)
        for j in range(3):
            if j != i:
                basis *= (s - x[j]) / (x[i] - x[j])
        out += ty[i] * basis
    return out


def _interp_heading(h0: float, h1: float, frac: np.ndarray) -> np.ndarray:
    delta = (h1 - h0 + 180.0) % 360.0 - 180.0
    return (h0 + frac * delta) % 360.0


def _fill_segment(ident: str, t, lat, lon, alt, gs, hdg, imp, stats: AssemblyStats) -> Trajectory:
    """Impute every gap of a segment whose gaps are all <= max_gap."""
    gaps = np.flatnonzero(np.diff(t) > 1)
    if gaps.size == 0:
        return Trajectory(ident, t, lat, lon, alt, gs, hdg, imp)
    real = ~imp
    real_idx = np.flatnonzero(real)
    real_t = t[real_idx]
    pieces = {k: [] for k in ("t", "lat", "lon", "alt", "gs", "hdg", "imp")}
    start = 0
    for g in gaps:
        for k, col in zip(pieces, (t, lat, lon, alt, gs, hdg, imp)):
            pieces[k].append(col[start:g + 1])
        new_t = np.arange(t[g] + 1, t[g + 1], dtype=np.int64)
        frac = (new_t - t[g]) / float(t[g + 1] - t[g])
        support = None
        if real[g] and real[g + 1]:
            left = int(np.searchsorted(real_idx, g))
            support = _quadratic_support(real_t, left)
        if support is not None:
            si = real_idx[support]
            new_lat = _lagrange(t[si], lat[si], new_t)
            new_lon = _lagrange(t[si], lon[si], new_t)
        else:
            stats.linear_fallbacks += 1
            new_lat = lat[g] + frac * (lat[g + 1] - lat[g])
            new_lon = lon[g] + frac * (lon[g + 1] - lon[g])
        pieces["t"].append(new_t)
        pieces["lat"].append(new_lat)
        pieces["lon"].append(new_lon)
        pieces["alt"].append(alt[g] + frac * (alt[g + 1] - alt[g]))
        pieces["gs"].append(gs[g] + frac * (gs[g + 1] - gs[g]))
        pieces["hdg"].append(_interp_heading(hdg[g], hdg[g + 1], frac))
        pieces["imp"].append(np.ones(new_t.size, dtype=bool))
        stats.imputed_points += new_t.size
        start = g + 1
    for k, col in zip(pieces, (t, lat, lon, alt, gs, hdg, imp)):
        pieces[k].append(col[start:])
    cat = {k: np.concatenate(v) for k, v in pieces.items()}
    return Trajectory(ident, cat["t"], cat["lat"], cat["lon"], cat["alt"], cat["gs"], cat["hdg"], cat["imp"])


def assemble_trajectories(points, max_gap: int = DEFAULT_MAX_GAP, stats: AssemblyStats | None = None) -> list[Trajectory]:
    """Group reports per aircraft into gap-free 1 Hz trajectories.

    Gaps of up to ``max_gap`` seconds are filled: latitude and longitude by a
    quadratic through the three nearest real fixes, altitude, speed and
    heading linearly. Longer gaps split the track. Fragments with fewer than
    two fixes are dropped. Output is ordered by aircraft id, then time.
    """
    if max_gap < 1:
        raise ValueError("max_gap must be >= 1")
    stats = stats if stats is not None else AssemblyStats()
    ids, t, lat, lon, alt, gs, hdg, imp = _as_columns(points)
    if t.size == 0:
        return []
    t = t.astype(np.int64)
    order = np.lexsort((t, ids.astype(str)))
    ids, t, lat, lon, alt, gs, hdg, imp = (c[order] for c in (ids, t, lat, lon, alt, gs, hdg, imp))
    out: list[Trajectory] = []
    bounds = np.flatnonzero(ids[1:] != ids[:-1]) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, t.size]):
        seg = slice(lo, hi)
        ct, cols = t[seg], [c[seg] for c in (lat, lon, alt, gs, hdg, imp)]
        keep = np.r_[True, np.diff(ct) > 0]
        stats.duplicates += int((~keep).sum())
        ct, cols = ct[keep], [c[keep] for c in cols]
        cuts = np.flatnonzero(np.diff(ct) > max_gap) + 1
        stats.splits += cuts.size
        for a, b in zip(np.r_[0, cuts], np.r_[cuts, ct.size]):
            if b - a < 2:
                stats.dropped_fragments += 1
                continue
            out.append(_fill_segment(str(ids[lo]), ct[a:b], *(c[a:b] for c in cols), stats))
    stats.trajectories = len(out)
    return out


# --------------------------------------------------------------------------
# arrivals


def extract_arrivals(
    trajs: Sequence[Trajectory],
    geometry: AirspaceGeometry,
    runways: RunwayLayout,
    recat: Mapping[str, int] | None = None,
) -> list[ArrivalRecord]:
    """One record per trajectory that enters the TRC and then lands.

    ``recat`` maps aircraft id to wake category; unknown ids get code 2.
    Records are ordered by TRC crossing time, then aircraft id.
    """
    records = []
    for tr in trajs:
        hit = match_threshold(tr, runways)
        if hit is None:
            continue
        name, t_thr = hit
        t_trc = crossing_time(tr, geometry, TRC, INBOUND, before=t_thr - 1)
        if t_trc is None:
            continue
        records.append(
            ArrivalRecord(
                tr.aircraft_id, physical_runway(name), name, t_trc, t_thr, entry_zone(tr, geometry, at=t_trc),
                int((recat or {}).get(tr.aircraft_id, 2)),
            )
        )
    records.sort(key=lambda r: (r.t_trc, r.aircraft_id))
    return records


@dataclass(frozen=True)
class OutlierBounds:
    mean: float
    std: float
    k: float = 3.0

    def keeps(self, label: float) -> bool:
        return self.std == 0 or abs(label - self.mean) <= self.k * self.std


def outlier_bounds(records: Sequence[ArrivalRecord], k: float = 3.0) -> OutlierBounds:
    labels = np.array([r.label_seconds for r in records], dtype=np.float64)
    return OutlierBounds(float(labels.mean()), float(labels.std()), k)


def remove_outliers(records: Sequence[ArrivalRecord], k: float = 3.0,
                    bounds: OutlierBounds | None = None) -> list[ArrivalRecord]:
    """Drop records whose label is more than ``k`` population standard deviations from the mean.

    The statistics are computed once over the input (or taken from ``bounds``).
    """
    if len(records) < 2 and bounds is None:
        raise DataError("outlier removal needs at least 2 records")
    bounds = bounds or outlier_bounds(records, k)
    return [r for r in records if bounds.keeps(r.label_seconds)]


# --------------------------------------------------------------------------
# arrival tables on disk

ARRIVAL_COLUMNS = ("aircraft_id", "runway", "threshold", "t_trc", "t_thr", "label_s", "entry_zone", "recat")


def write_arrivals(records: Iterable[ArrivalRecord], dest: str | Path) -> None:
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ARRIVAL_COLUMNS)
        for r in records:
            w.writerow([r.aircraft_id, r.runway, r.threshold, r.t_trc, r.t_thr, r.label_seconds, r.entry_zone, r.recat])


def read_arrivals(src: str | Path) -> list[ArrivalRecord]:
    try:
        with open(src, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read arrivals: {exc}") from exc
    try:
        return [
            ArrivalRecord(r["aircraft_id"], r["runway"], r["threshold"], int(r["t_trc"]), int(r["t_thr"]),
                          r["entry_zone"], int(r["recat"]))
            for r in rows
        ]
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"bad arrivals table: {exc}") from exc


def load_tracks(path: str | Path, max_gap: int = DEFAULT_MAX_GAP, schema=None) -> tuple[list[Trajectory], AssemblyStats, int]:
    table = parse_adsb(path, schema)
    stats = AssemblyStats()
    return assemble_trajectories(table, max_gap, stats), stats, table.skipped


def adsb_text(trajs: Iterable[Trajectory]) -> str:
    buf = io.StringIO()
    write_adsb(trajs, buf)
    return buf.getvalue()
