import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from altpred.airspace import (
    EARTH_RADIUS_NM, INBOUND, OUTBOUND, TBX, TRC, AirspaceGeometry, RunwayLayout, Threshold, crossing_time,
    crossings, destination, entry_zone, great_circle_nm, initial_bearing, load_runways, match_threshold,
    physical_runway, reciprocal_name, runway_ops_features, zone_of_bearing,
)
from altpred.errors import ConfigError
from altpred.track import ArrivalRecord, Trajectory

from conftest import GEOMETRY, T0, radial_track

lat_st = st.floats(-80, 80)
lon_st = st.floats(-179, 179)


def test_distance_identity_and_nautical_mile():
    assert great_circle_nm(1.3, 103.9, 1.3, 103.9) == 0.0
    assert great_circle_nm(0, 0, 1, 0) == pytest.approx(60.0, abs=0.1)


def test_antipodal_distance():
    assert great_circle_nm(0, 0, 0, 180) == pytest.approx(math.pi * EARTH_RADIUS_NM, abs=1)
    assert great_circle_nm(10, 20, -10, -160) == pytest.approx(10807.8, abs=1)


@settings(max_examples=200)
@given(lat_st, lon_st, lat_st, lon_st)
def test_distance_symmetric_and_non_negative(a, b, c, d):
    d1, d2 = great_circle_nm(a, b, c, d), great_circle_nm(c, d, a, b)
    assert d1 >= 0
    assert d1 == pytest.approx(d2, abs=1e-9)


@settings(max_examples=200)
@given(st.floats(0, 359.9), st.floats(0.1, 200))
def test_destination_inverts_distance_and_bearing(bearing, dist):
    lat, lon = destination(GEOMETRY.center_lat, GEOMETRY.center_lon, bearing, dist)
    assert GEOMETRY.distance(lat, lon) == pytest.approx(dist, abs=1e-6)
    diff = (GEOMETRY.bearing(lat, lon) - bearing + 180) % 360 - 180
    assert abs(diff) < 1e-6


def test_distance_broadcasts():
    d = great_circle_nm(np.zeros(3), np.zeros(3), np.array([0.0, 1.0, 2.0]), np.zeros(3))
    assert d.shape == (3,)
    assert initial_bearing(0, 0, 0, 1) == pytest.approx(90.0)


# ---------------------------------------------------------------- geometry


def test_geometry_defaults():
    g = AirspaceGeometry()
    assert (g.trc_radius, g.tbx_radius, g.raster_bbox) == (50.0, 60.0, (103.0, 105.0, 0.5, 2.25))
    assert g.in_trc(g.center_lat, g.center_lon)
    assert not g.in_tbe(g.center_lat, g.center_lon)


@pytest.mark.parametrize("kw", [
    {"trc_radius": 60, "tbx_radius": 50}, {"trc_radius": 0}, {"raster_bbox": (104.0, 104.5, 0.5, 2.25)},
    {"raster_bbox": (105.0, 103.0, 0.5, 2.25)},
])
def test_geometry_rejects_invalid(kw):
    with pytest.raises(ConfigError):
        AirspaceGeometry(**kw)


def test_membership_bands():
    lat, lon = destination(GEOMETRY.center_lat, GEOMETRY.center_lon, 0, 55)
    assert GEOMETRY.in_tbe(lat, lon) and not GEOMETRY.in_trc(lat, lon)
    lat, lon = destination(GEOMETRY.center_lat, GEOMETRY.center_lon, 0, 65)
    assert not GEOMETRY.in_tbe(lat, lon)


# ---------------------------------------------------------------- crossings


def test_crossing_rounds_analytic_time():
    speed = 250.0
    # analytic crossing 1000.4 s after the first fix
    d0 = 50.0 + speed * 1000.4 / 3600.0
    tr = radial_track("A", 300.0, d0, speed, 1200)
    assert crossing_time(tr, GEOMETRY) == T0 + 1000


def test_crossing_rounds_half_up():
    speed = 250.0
    tr = radial_track("A", 300.0, 50.0 + speed * 700.6 / 3600.0, speed, 800)
    assert crossing_time(tr, GEOMETRY) == T0 + 701


def test_track_inside_has_no_crossing():
    tr = radial_track("A", 10.0, 40.0, 250.0, 100)
    assert crossing_time(tr, GEOMETRY) is None
    assert crossing_time(tr.slice(slice(0, 1)), GEOMETRY) is None


def test_fix_on_boundary_is_the_crossing():
    tr = radial_track("A", 10.0, 52.0, 250.0, 100)
    d = GEOMETRY.distance(tr.lat, tr.lon)
    g = AirspaceGeometry(trc_radius=float(d[20]))
    assert crossing_time(tr, g) == T0 + 20


def test_latest_crossing_before_cutoff():
    out = radial_track("A", 90.0, 45.0, 300.0, 120, inbound=False)
    back = radial_track("A", 90.0, 55.0, 300.0, 200, t0=out.end + 1)
    tr = Trajectory("A", np.r_[out.time, back.time], np.r_[out.lat, back.lat], np.r_[out.lon, back.lon],
                    np.r_[out.alt, back.alt], np.r_[out.gs, back.gs], np.r_[out.heading, back.heading])
    inbound = crossings(tr, GEOMETRY)
    assert len(inbound) == 1 and len(crossings(tr, GEOMETRY, direction=OUTBOUND)) == 1
    assert crossing_time(tr, GEOMETRY, before=inbound[0] - 1) is None


def test_unknown_direction_and_boundary():
    tr = radial_track("A", 10.0, 55.0, 250.0, 100)
    with pytest.raises(ValueError):
        crossing_time(tr, GEOMETRY, direction="sideways")
    with pytest.raises(ValueError):
        crossing_time(tr, GEOMETRY, boundary="XYZ")


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 359), st.floats(150, 450), st.floats(-8, 8))
def test_transit_enters_before_it_leaves(bearing, speed, offset):
    # straight line passing `offset` NM from the airport
    lat0, lon0 = destination(GEOMETRY.center_lat, GEOMETRY.center_lon, bearing, 62.0)
    lat0, lon0 = destination(lat0, lon0, (bearing + 90) % 360, offset)
    seconds = int(124.0 / speed * 3600)
    pos = [destination(lat0, lon0, (bearing + 180) % 360, speed * t / 3600) for t in range(seconds)]
    n = len(pos)
    tr = Trajectory("T", T0 + np.arange(n), [p[0] for p in pos], [p[1] for p in pos], np.zeros(n),
                    np.full(n, speed), np.zeros(n))
    t_in, t_out = crossing_time(tr, GEOMETRY, TRC, INBOUND), crossing_time(tr, GEOMETRY, TRC, OUTBOUND)
    assert t_in is not None and t_out is not None and t_in < t_out


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 359.9), st.floats(150, 400))
def test_tbx_precedes_trc_by_ten_miles(bearing, speed):
    tr = radial_track("A", bearing, 62.0, speed, int(15 / speed * 3600) + 2)
    gap = crossing_time(tr, GEOMETRY, TRC) - crossing_time(tr, GEOMETRY, TBX)
    assert abs(gap - 10.0 / speed * 3600.0) <= 2


# ---------------------------------------------------------------- entry zones


@pytest.mark.parametrize("bearing,zone", [
    (0.0, "N"), (44.999, "N"), (45.0, "E"), (90.0, "E"), (135.0, "S"), (224.9, "S"), (225.0, "W"),
    (314.99, "W"), (315.0, "N"), (359.99, "N"),
])
def test_zone_buckets(bearing, zone):
    assert zone_of_bearing(bearing) == zone


def test_entry_zone_east_and_time_shift():
    tr = radial_track("A", 90.0, 55.0, 250.0, 200)
    assert entry_zone(tr, GEOMETRY) == "E"
    shifted = Trajectory("A", tr.time + 86_400 * 3 + 17, tr.lat, tr.lon, tr.alt, tr.gs, tr.heading)
    assert entry_zone(shifted, GEOMETRY) == "E"


def test_entry_zone_requires_crossing():
    with pytest.raises(ValueError):
        entry_zone(radial_track("A", 90.0, 30.0, 250.0, 10), GEOMETRY)


def test_simulated_entry_zones(scenario, arrivals):
    truth = scenario.truth_by_id()
    assert [a.entry_zone for a in arrivals] == [truth[a.aircraft_id].entry_zone for a in arrivals]
    assert {a.entry_zone for a in arrivals} == {"N", "E", "S", "W"}


# ---------------------------------------------------------------- runways


def test_reciprocals():
    assert reciprocal_name("02L") == "20R"
    assert reciprocal_name("20C") == "02C"
    assert reciprocal_name("18") == "36"
    assert physical_runway("20R") == physical_runway("02L") == "02L20R"
    with pytest.raises(ConfigError):
        reciprocal_name("L")


def test_bundled_layout(runways):
    assert runways.physical_runways == ["02L20R", "02C20C"]
    assert runways["02L"].capture_radius_nm == 0.5
    assert RunwayLayout.from_records(runways.to_records()) == runways


def test_layout_validation(tmp_path):
    rec = {"name": "02L", "lat": 1.3, "lon": 104.0, "bearing": 20}
    with pytest.raises(ConfigError, match="duplicate"):
        RunwayLayout.from_records([rec, rec])
    with pytest.raises(ConfigError):
        RunwayLayout.from_records([])
    with pytest.raises(ConfigError):
        RunwayLayout.from_records([{**rec, "capture_radius_nm": 0}])
    with pytest.raises(ConfigError):
        RunwayLayout.from_records([{"name": "02L"}])
    bad = tmp_path / "r.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_runways(bad)
    bad.write_text(json.dumps({"name": "02L"}))
    with pytest.raises(ConfigError):
        load_runways(bad)
    with pytest.raises(ConfigError):
        load_runways(tmp_path / "none.json")


def _pass_over(points, alt, gs):
    n = len(points)
    return Trajectory("M", T0 + np.arange(n), [p[0] for p in points], [p[1] for p in points], np.full(n, alt),
                      np.asarray(gs, float) * np.ones(n), np.zeros(n))


def test_simulated_thresholds_match_truth(scenario, arrivals):
    truth = scenario.truth_by_id()
    for a in arrivals:
        assert abs(a.t_thr - truth[a.aircraft_id].t_thr) <= 2


def test_overflight_of_threshold_fails_altitude_gate(runways):
    th = runways["02L"]
    pts = [destination(th.lat, th.lon, 200.0, d) for d in np.linspace(1, 0, 20)]
    assert match_threshold(_pass_over(pts, 5000.0, 150.0), runways) is None
    assert match_threshold(_pass_over(pts, 0.0, 150.0), runways) == ("02L", T0 + 19)


def test_speed_gate_filters_threshold():
    a = Threshold("02L", 1.30, 104.00, 20.0)
    b = Threshold("02C", 1.30, 104.01, 20.0)
    layout = RunwayLayout((a, b))
    mid = (1.30, 104.005)
    pts = [mid, mid, mid]
    gs = np.array([250.0, 250.0, 150.0])
    tr = _pass_over(pts, 0.0, gs)
    # fixes 0-1 equidistant but too fast; fix 2 passes, tie broken by order of layout
    assert match_threshold(tr, layout) == ("02L", T0 + 2)
    near_b = _pass_over([(1.30, 104.009), (1.30, 104.001)], 0.0, [150.0, 250.0])
    assert match_threshold(near_b, layout) == ("02C", T0)


def test_closest_fix_in_capture_run(runways):
    th = runways["02C"]
    pts = [destination(th.lat, th.lon, 200.0, d) for d in np.linspace(0.45, 0.0, 10)]
    pts += [destination(th.lat, th.lon, 20.0, d) for d in np.linspace(0.05, 0.4, 8)]
    assert match_threshold(_pass_over(pts, 0.0, 140.0), runways) == ("02C", T0 + 9)


# ---------------------------------------------------------------- runway operations


def _landing(i, runway, threshold, t_thr):
    return ArrivalRecord(f"A{i:03d}", runway, threshold, t_thr - 600, t_thr, "N")


def test_empty_window():
    f = runway_ops_features([_landing(0, "02L20R", "02L", 10_000)], 5_000, 900, ["02L20R", "02C20C"])
    assert f.counts(["02L20R", "02C20C"]) == [0, 0] and f.runway_change_label == 0


def test_threshold_change_sets_label():
    arr = [_landing(0, "02L20R", "02L", 1000), _landing(1, "02L20R", "20R", 1500)]
    assert runway_ops_features(arr, 1600, 900).runway_change_label == 1
    assert runway_ops_features(arr, 1600, 200).runway_change_label == 0


def test_counts_per_runway():
    arr = [_landing(i, "02L20R", "02L", 1000 + i) for i in range(5)]
    arr += [_landing(10 + i, "02C20C", "02C", 1100 + i) for i in range(3)]
    f = runway_ops_features(arr, 1200, 900, ["02L20R", "02C20C"])
    assert f.counts(["02L20R", "02C20C"]) == [5, 3] and f.runway_change_label == 0


def test_window_is_closed_at_both_ends():
    arr = [_landing(0, "02L20R", "02L", 100), _landing(1, "02L20R", "02L", 1000)]
    assert runway_ops_features(arr, 1000, 900).counts(["02L20R"]) == [2]
    with pytest.raises(ValueError):
        runway_ops_features(arr, 1000, 0)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 5000)), max_size=30),
       st.integers(1, 3000), st.integers(1, 3000))
def test_counts_monotone_in_delta(rows, d1, d2):
    names = [("02L20R", ("02L", "20R")), ("02C20C", ("02C", "20C"))]
    arr = [_landing(i, names[r][0], names[r][1][e], t + 700) for i, (r, e, t) in enumerate(rows)]
    lo, hi = sorted((d1, d2))
    a = runway_ops_features(arr, 4000, lo, ["02L20R", "02C20C"])
    b = runway_ops_features(arr, 4000, hi, ["02L20R", "02C20C"])
    assert all(x <= y for x, y in zip(a.counts(["02L20R", "02C20C"]), b.counts(["02L20R", "02C20C"])))
    assert a.runway_change_label <= b.runway_change_label
