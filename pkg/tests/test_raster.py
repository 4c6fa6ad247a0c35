import json
import random
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from threadpoolctl import threadpool_limits

from altpred.raster import (
    BLUE, RED, WHITE, bresenham, clipped_segments, decode_png, encode_png, image_file_name, ink, pixel_hash,
    project, render,
)

from conftest import GEOMETRY, T0, radial_track
from golden_scene import T_REF, TAU, golden_scene

GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_raster.json").read_text())
BBOX = GEOMETRY.raster_bbox


def test_project_corner_and_centre():
    assert project(2.25, 103.0, BBOX, 224, 224) == (0, 0)
    px, py = project(1.375, 104.0, BBOX, 224, 224)
    assert abs(px - 112) <= 1 and abs(py - 112) <= 1


def test_project_airport_reference_point():
    assert project(1.3644, 103.9915, BBOX, 224, 224) == (111, 113)


def test_project_clamps_and_validates():
    assert project(-10.0, 200.0, BBOX, 64, 32) == (63, 31)
    with pytest.raises(ValueError):
        project(1.0, 104.0, BBOX, 1, 64)


@settings(max_examples=200)
@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50), st.integers(-50, 50))
def test_bresenham_is_a_connected_inclusive_walk(x0, y0, x1, y1):
    xs, ys = bresenham(x0, y0, x1, y1)
    assert (xs[0], ys[0], xs[-1], ys[-1]) == (x0, y0, x1, y1)
    assert len(xs) == max(abs(x1 - x0), abs(y1 - y0)) + 1
    assert np.all(np.maximum(np.abs(np.diff(xs)), np.abs(np.diff(ys))) == 1)


def _colours(img):
    return {tuple(c) for c in img.pixels.reshape(-1, 3)}


def test_target_only_image_is_red_on_white():
    img = render(radial_track("T", 45.0, 48.0, 250.0, 400), [], GEOMETRY, T0 + 300, 300)
    assert _colours(img) == {RED, WHITE}
    assert img.pixels.shape == (224, 224, 3) and img.pixels.dtype == np.uint8
    assert len(img.tobytes()) == 224 * 224 * 3
    assert img.file_name() == image_file_name("T", T0 + 300) == f"T_{T0 + 300}.png"


def test_only_three_colours_and_red_always_present():
    target, others = golden_scene()
    img = render(target, others, GEOMETRY, T_REF, TAU)
    assert _colours(img) <= {RED, BLUE, WHITE}
    assert img.count(RED) > 0 and img.count(BLUE) > 0


def test_speed_ratio_pixel_counts():
    # two horizontal streaks on opposite sides of the airport, 400 kt vs 200 kt
    fast = radial_track("F", 90.0, 45.0, 400.0, 300)
    slow = radial_track("S", 270.0, 45.0, 200.0, 300)
    img = render(fast, [slow], GEOMETRY, T0 + 300, 300)
    assert img.count(RED) / img.count(BLUE) == pytest.approx(2.0, rel=0.15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 359), st.floats(120, 250), st.floats(1.05, 2.0))
def test_faster_aircraft_never_draws_fewer_pixels(bearing, slow_kt, factor):
    t_ref, tau = T0 + 200, 200
    slow = render(radial_track("S", bearing, 45.0, slow_kt, 200), [], GEOMETRY, t_ref, tau)
    fast = render(radial_track("F", bearing, 45.0, slow_kt * factor, 200), [], GEOMETRY, t_ref, tau)
    assert fast.count(RED) >= slow.count(RED)


def test_target_drawn_on_top():
    a = radial_track("A", 60.0, 45.0, 250.0, 300)
    b = radial_track("B", 60.0, 45.0, 250.0, 300)
    img = render(a, [b], GEOMETRY, T0 + 300, 300)
    assert img.count(BLUE) == 0 and img.count(RED) > 0
    img = render(b, [a], GEOMETRY, T0 + 300, 300)
    assert img.count(BLUE) == 0


def test_streak_ends_at_current_position():
    tr = radial_track("T", 135.0, 45.0, 300.0, 300)
    img = render(tr, [], GEOMETRY, T0 + 300, 300)
    now = project(tr.lat[-1], tr.lon[-1], BBOX, 224, 224)
    first = project(tr.lat[0], tr.lon[0], BBOX, 224, 224)
    centre = project(GEOMETRY.center_lat, GEOMETRY.center_lon, BBOX, 224, 224)
    assert tuple(img.pixels[now[1], now[0]]) == RED
    assert tuple(img.pixels[first[1], first[0]]) == RED
    # inbound: the oldest point is the one farther from the airport
    assert np.hypot(first[0] - centre[0], first[1] - centre[1]) > np.hypot(now[0] - centre[0], now[1] - centre[1])


def _components(mask):
    seen = np.zeros_like(mask)
    count = 0
    for y, x in zip(*np.nonzero(mask)):
        if seen[y, x]:
            continue
        count += 1
        queue = deque([(y, x)])
        seen[y, x] = True
        while queue:
            cy, cx = queue.popleft()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < mask.shape[0] and 0 <= nx < mask.shape[1] and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
    return count


@pytest.mark.parametrize("n", [0, 1, 3, 5])
def test_blue_components_count_background_aircraft(n):
    target = radial_track("T", 0.0, 45.0, 250.0, 300)
    others = [radial_track(f"O{i}", 60.0 + 50.0 * i, 45.0, 250.0, 300) for i in range(n)]
    img = render(target, others, GEOMETRY, T0 + 300, 300)
    blue = np.all(img.pixels == BLUE, axis=-1)
    assert _components(blue) == n


def test_points_outside_trc_are_clipped():
    tr = radial_track("T", 250.0, 58.0, 300.0, 300)
    img = render(tr, [], GEOMETRY, T0 + 300, 300)
    ys, xs = np.nonzero(np.all(img.pixels == RED, axis=-1))
    lon = BBOX[0] + (xs + 0.5) / 224 * (BBOX[1] - BBOX[0])
    lat = BBOX[3] - (ys + 0.5) / 224 * (BBOX[3] - BBOX[2])
    # half a pixel diagonal is below 0.5 NM at this scale
    assert GEOMETRY.distance(lat, lon).max() <= GEOMETRY.trc_radius + 0.5
    segs = clipped_segments(tr, GEOMETRY, T0, T0 + 300)
    assert GEOMETRY.distance(segs[0, 0, 0], segs[0, 0, 1]) == pytest.approx(GEOMETRY.trc_radius, abs=1e-6)


def test_target_reaching_circle_gets_entry_pixel():
    speed = 250.0
    # crossing 100.4 s in, rounded down: no fix is inside yet at t_ref
    tr = radial_track("T", 10.0, 50.0 + speed * 100.4 / 3600, speed, 300)
    img = render(tr, [], GEOMETRY, T0 + 100, 60)
    assert img.count(RED) == 1


def test_missing_target_and_bad_tau():
    tr = radial_track("T", 10.0, 58.0, 250.0, 10)
    with pytest.raises(ValueError):
        render(tr, [], GEOMETRY, T0 + 10, 10)
    with pytest.raises(ValueError):
        render(radial_track("T", 10.0, 40.0, 250.0, 10), [], GEOMETRY, T0 + 10, 0)


def test_background_outside_window_ignored():
    target = radial_track("T", 0.0, 45.0, 250.0, 300)
    late = radial_track("L", 90.0, 45.0, 250.0, 300, t0=T0 + 1000)
    assert render(target, [late], GEOMETRY, T0 + 300, 300).count(BLUE) == 0


# ---------------------------------------------------------------- determinism


@pytest.mark.parametrize("width", [224, 64])
def test_golden_hash(width):
    target, others = golden_scene()
    assert render(target, others, GEOMETRY, T_REF, TAU, width=width).pixel_hash() == GOLDEN[str(width)]


def test_hash_independent_of_input_order_and_cache():
    target, others = golden_scene()
    shuffled = list(others)
    random.Random(5).shuffle(shuffled)
    cache = {}
    a = render(target, others, GEOMETRY, T_REF, TAU, cache=cache)
    b = render(target, shuffled, GEOMETRY, T_REF, TAU, cache=cache)
    c = render(target, list(reversed(others)), GEOMETRY, T_REF, TAU)
    assert a.pixel_hash() == b.pixel_hash() == c.pixel_hash() == GOLDEN["224"]


@pytest.mark.parametrize("threads", [1, 4])
def test_hash_independent_of_thread_count(threads):
    target, others = golden_scene()
    with threadpool_limits(threads):
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hashes = list(pool.map(lambda w: render(target, others, GEOMETRY, T_REF, TAU, width=w).pixel_hash(),
                                   [224, 64] * 4))
    assert hashes == [GOLDEN["224"], GOLDEN["64"]] * 4


def test_png_round_trip(tmp_path):
    target, others = golden_scene()
    img = render(target, others, GEOMETRY, T_REF, TAU)
    path = encode_png(img, tmp_path / img.file_name())
    back = decode_png(path)
    np.testing.assert_array_equal(back, img.pixels)
    assert pixel_hash(back) == GOLDEN["224"]


def test_all_white_round_trip(tmp_path):
    white = np.full((8, 8, 3), 255, np.uint8)
    assert np.all(decode_png(encode_png(white, tmp_path / "w.png")) == 255)


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        encode_png(np.zeros((4, 4, 3), np.uint8), tmp_path / "missing" / "x.png")


def test_ink_encoding():
    px = np.array([[WHITE, RED, BLUE]], dtype=np.uint8)
    np.testing.assert_array_equal(ink(px), [[[0, 0, 0], [0, 1, 1], [1, 1, 0]]])
    assert ink(px, np.float32).dtype == np.float32
