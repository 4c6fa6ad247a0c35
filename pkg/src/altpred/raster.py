"""Deterministic trajectory images.

Every aircraft inside the TRC during the capture window is drawn as a
1-pixel polyline on a white canvas: background traffic in blue first, the
target in red on top. Lines are walked with integer Bresenham steps so the
pixel buffer is identical on every platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from PIL import Image

from .airspace import AirspaceGeometry
from .track import Trajectory

WHITE = (255, 255, 255)
RED = (255, 0, 0)
BLUE = (0, 0, 255)
PNG_COMPRESS_LEVEL = 6


@dataclass
class TrajectoryImage:
    pixels: np.ndarray  # (height, width, 3) uint8
    target_id: str
    t_ref: int
    tau: int

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def tobytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels, dtype=np.uint8).tobytes()

    def pixel_hash(self) -> str:
        return pixel_hash(self.pixels)

    def file_name(self) -> str:
        return image_file_name(self.target_id, self.t_ref)

    def count(self, color) -> int:
        return int(np.all(self.pixels == np.array(color, dtype=np.uint8), axis=-1).sum())


def image_file_name(aircraft_id: str, t_ref: int) -> str:
    return f"{aircraft_id}_{int(t_ref)}.png"


def pixel_hash(pixels: np.ndarray) -> str:
    arr = np.ascontiguousarray(pixels, dtype=np.uint8)
    h = hashlib.sha256(f"{arr.shape}".encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def project(lat, lon, bbox, width: int, height: int):
    """Equirectangular lat/lon -> integer pixel (px, py), north up, clamped to the canvas."""
    if width < 2 or height < 2:
        raise ValueError("image must be at least 2x2")
    lon_min, lon_max, lat_min, lat_max = bbox
    px = np.floor((np.asarray(lon, dtype=np.float64) - lon_min) / (lon_max - lon_min) * width)
    py = np.floor((lat_max - np.asarray(lat, dtype=np.float64)) / (lat_max - lat_min) * height)
    px = np.clip(px, 0, width - 1).astype(np.int64)
    py = np.clip(py, 0, height - 1).astype(np.int64)
    if px.ndim == 0:
        return int(px), int(py)
    return px, py


def bresenham(x0: int, y0: int, x1: int, y1: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer pixels on the segment, both ends included."""
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    xs, ys = [], []
    while True:
        xs.append(x0)
        ys.append(y0)
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return np.array(xs, dtype=np.int64), np.array(ys, dtype=np.int64)


def _boundary_points(geometry: AirspaceGeometry, inside: np.ndarray, outside: np.ndarray, iters: int = 40) -> np.ndarray:
    """Points on the TRC circle between paired inside and outside fixes, by bisection along each chord."""
    inside = np.asarray(inside, dtype=np.float64).reshape(-1, 2)
    outside = np.asarray(outside, dtype=np.float64).reshape(-1, 2)
    step = outside - inside
    s_in = np.zeros(len(inside))
    s_out = np.ones(len(inside))
    for _ in range(iters):
        mid = 0.5 * (s_in + s_out)
        p = inside + mid[:, None] * step
        ok = geometry.distance(p[:, 0], p[:, 1]) <= geometry.trc_radius
        s_in = np.where(ok, mid, s_in)
        s_out = np.where(ok, s_out, mid)
    return inside + s_in[:, None] * step


def _boundary_point(geometry: AirspaceGeometry, inside, outside) -> tuple[float, float]:
    lat, lon = _boundary_points(geometry, inside, outside)[0]
    return float(lat), float(lon)


class ClippedTrack:
    """A whole trajectory cut into consecutive-fix segments clipped to the TRC disc.

    Clipping is done once so that many capture windows over the same track
    only need two binary searches.
    """

    def __init__(self, traj: Trajectory, geometry: AirspaceGeometry):
        self.time = traj.time
        pts = np.stack([traj.lat, traj.lon], axis=-1)
        inside = geometry.in_trc(traj.lat, traj.lon)
        segs = np.stack([pts[:-1], pts[1:]], axis=1)
        leaving = np.flatnonzero(inside[:-1] & ~inside[1:])
        entering = np.flatnonzero(~inside[:-1] & inside[1:])
        if leaving.size:
            segs[leaving, 1] = _boundary_points(geometry, pts[leaving], pts[leaving + 1])
        if entering.size:
            segs[entering, 0] = _boundary_points(geometry, pts[entering + 1], pts[entering])
        self.points, self.inside, self.segments = pts, inside, segs
        self.keep = inside[:-1] | inside[1:]

    def window(self, t0: float, t1: float) -> np.ndarray:
        i0 = int(np.searchsorted(self.time, t0, "left"))
        i1 = int(np.searchsorted(self.time, t1, "right"))
        if i1 <= i0:
            return np.zeros((0, 2, 2))
        segs = self.segments[i0:i1 - 1][self.keep[i0:i1 - 1]]
        if len(segs) == 0 and self.inside[i0:i1].any():
            k = i0 + int(np.flatnonzero(self.inside[i0:i1])[0])
            segs = np.stack([self.points[k], self.points[k]])[None]
        return segs


def clipped_segments(traj: Trajectory, geometry: AirspaceGeometry, t0: float, t1: float) -> np.ndarray:
    """Consecutive-fix segments within ``[t0, t1]``, clipped to the TRC disc.

    Returns an ``(n, 2, 2)`` array of ``((lat_a, lon_a), (lat_b, lon_b))``
    pairs. A lone in-window fix inside the disc is returned as a zero-length
    segment so it still marks one pixel.
    """
    if len(traj) == 0:
        return np.zeros((0, 2, 2))
    return ClippedTrack(traj, geometry).window(t0, t1)


def entry_point(traj: Trajectory, geometry: AirspaceGeometry, t_ref: float):
    """Boundary point of the inbound TRC crossing that brackets ``t_ref``, if any.

    Crossing times are rounded to whole seconds, so at ``t_ref = t_trc`` the
    last fix may still sit a fraction of a second outside the circle.
    """
    k = int(np.searchsorted(traj.time, t_ref, side="right")) - 1
    if k < 0 or k + 1 >= len(traj):
        return None
    a, b = (traj.lat[k], traj.lon[k]), (traj.lat[k + 1], traj.lon[k + 1])
    if geometry.in_trc(*a) or not geometry.in_trc(*b):
        return None
    return _boundary_point(geometry, b, a)


def _stroke(canvas: np.ndarray, segs, bbox, color) -> None:
    if len(segs) == 0:
        return
    h, w, _ = canvas.shape
    rgb = np.array(color, dtype=np.uint8)
    ends = np.asarray(segs, dtype=np.float64)  # (n, 2 ends, lat/lon)
    px, py = project(ends[..., 0], ends[..., 1], bbox, w, h)
    # segments between identical or touching pixels are just their end pixels
    short = np.maximum(np.abs(px[:, 1] - px[:, 0]), np.abs(py[:, 1] - py[:, 0])) <= 1
    canvas[py[short].ravel(), px[short].ravel()] = rgb
    for i in np.flatnonzero(~short):
        xs, ys = bresenham(int(px[i, 0]), int(py[i, 0]), int(px[i, 1]), int(py[i, 1]))
        canvas[ys, xs] = rgb


def render(
    target: Trajectory,
    others: Iterable[Trajectory],
    geometry: AirspaceGeometry,
    t_ref: int,
    tau: int,
    width: int = 224,
    height: int | None = None,
    cache: dict | None = None,
) -> TrajectoryImage:
    """Image of the traffic inside the TRC during ``[t_ref - tau, t_ref]``.

    A target that is just reaching the circle at ``t_ref`` is marked by its
    entry point. ``cache`` may be any dict reused across calls to keep the
    clipped form of each track.
    """

    def segments(tr: Trajectory) -> np.ndarray:
        if cache is None:
            return clipped_segments(tr, geometry, t0, t_ref)
        key = (tr.aircraft_id, tr.start, tr.end)
        if key not in cache:
            cache[key] = ClippedTrack(tr, geometry)
        return cache[key].window(t0, t_ref)

    if tau <= 0:
        raise ValueError("tau must be positive")
    height = width if height is None else height
    t0 = t_ref - tau
    target_segs = segments(target)
    if len(target_segs) == 0:
        p = entry_point(target, geometry, t_ref)
        target_segs = [(p, p)] if p is not None else []
    if len(target_segs) == 0:
        raise ValueError(f"{target.aircraft_id}: no fixes inside the TRC in the capture window ending at {t_ref}")
    canvas = np.full((height, width, 3), 255, dtype=np.uint8)
    bbox = geometry.raster_bbox
    # sort background traffic so draw order never depends on input order
    for other in sorted(others, key=lambda tr: (tr.aircraft_id, tr.start)):
        if other is target or other.end < t0 or other.start > t_ref:
            continue
        _stroke(canvas, segments(other), bbox, BLUE)
    _stroke(canvas, target_segs, bbox, RED)
    return TrajectoryImage(canvas, target.aircraft_id, int(t_ref), int(tau))


def encode_png(img: TrajectoryImage | np.ndarray, path: str | Path) -> Path:
    """Write an 8-bit RGB, non-interlaced PNG at a fixed compression level."""
    pixels = img.pixels if isinstance(img, TrajectoryImage) else img
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(
        path, format="PNG", compress_level=PNG_COMPRESS_LEVEL, optimize=False
    )
    return path


def decode_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def ink(pixels: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Network input encoding: 0 on the white background, up to 1 where a channel is absent.

    Red strokes map to (0, 1, 1) and blue strokes to (1, 1, 0).
    """
    return (1.0 - np.asarray(pixels, dtype=np.float64) / 255.0).astype(dtype)
