import filecmp
import json

import numpy as np
import pytest

from altpred.airspace import great_circle_nm
from altpred.errors import ConfigError
from altpred.ingest import assemble_trajectories, extract_arrivals, parse_adsb
from altpred.simgen import (
    ScenarioConfig, generate, inject_gaps, inject_gaps_csv, latlon_to_local, local_to_latlon, read_truth,
)

from conftest import GEOMETRY, radial_track


def test_no_holds_when_mechanism_disabled():
    sc = generate(ScenarioConfig(seed=1, duration_h=2, rate_per_h=36, hold_gain=0.0, hold_base=0.0))
    assert sc.truth and all(r.hold_orbits == 0 for r in sc.truth)


def test_same_seed_gives_identical_files(tmp_path):
    cfg = ScenarioConfig(seed=5, duration_h=1, rate_per_h=30)
    a = generate(cfg).write(tmp_path / "a")
    b = generate(ScenarioConfig(seed=5, duration_h=1, rate_per_h=30)).write(tmp_path / "b")
    for key in a:
        assert filecmp.cmp(a[key], b[key], shallow=False), key
    c = generate(ScenarioConfig(seed=6, duration_h=1, rate_per_h=30)).write(tmp_path / "c")
    assert not filecmp.cmp(a["adsb"], c["adsb"], shallow=False)


def test_written_files_round_trip(tmp_path, scenario):
    paths = scenario.write(tmp_path)
    assert set(paths) == {"adsb", "metar", "fpl", "truth", "runways", "scenario"}
    truth = read_truth(paths["truth"])
    assert [r.aircraft_id for r in truth] == [r.aircraft_id for r in scenario.truth]
    assert ScenarioConfig.from_dict(json.loads(paths["scenario"].read_text())) == scenario.config
    trajs = assemble_trajectories(parse_adsb(paths["adsb"]))
    assert len(trajs) == len(scenario.trajectories)


def test_truth_consistent_with_tracks(scenario):
    truth = scenario.truth_by_id()
    for tr in scenario.trajectories:
        row = truth[tr.aircraft_id]
        assert np.all(np.diff(tr.time) == 1)
        assert row.label_s == pytest.approx(row.t_thr - row.t_trc)
        # distance flown between fixes equals the integrated ground speed
        d = great_circle_nm(tr.lat[:-1], tr.lon[:-1], tr.lat[1:], tr.lon[1:])
        v = 0.5 * (tr.gs[:-1] + tr.gs[1:]) / 3600.0
        assert abs(d.sum() - v.sum()) <= 1e-3 * d.sum()
        # the aircraft starts outside TBX and ends on its threshold
        assert GEOMETRY.distance(tr.lat[0], tr.lon[0]) > GEOMETRY.tbx_radius
        th = scenario.runways[row.threshold]
        assert great_circle_nm(tr.lat, tr.lon, th.lat, th.lon).min() < 0.05


def test_holds_only_add_time(scenario):
    held = [r for r in scenario.truth if r.hold_orbits]
    assert held
    assert all(r.label_s > r.label_nohold_s for r in held)
    assert all(r.label_s == r.label_nohold_s for r in scenario.truth if not r.hold_orbits)


def test_holds_inside_holding_band(scenario):
    truth = scenario.truth_by_id()
    for tr in scenario.trajectories:
        if not truth[tr.aircraft_id].hold_orbits:
            continue
        d = GEOMETRY.distance(tr.lat, tr.lon)
        turning = np.abs(np.diff(tr.heading)) > 0.5
        # every held aircraft turns somewhere in the 30-50 NM band where its racetrack sits
        assert np.any(turning & (d[1:] > 30) & (d[1:] < 50))


def test_runway_direction_changes_on_schedule(scenario):
    change = scenario.config.start_epoch + 3600 * scenario.config.runway_change_h[0]
    before = {r.threshold[:2] for r in scenario.truth if r.t_thr < change - 600}
    after = {r.threshold[:2] for r in scenario.truth if r.t_thr > change + 1800}
    assert len(before) == 1 and len(after) == 1 and before != after


def test_metar_and_flight_plans(scenario):
    times = [m["time"] for m in scenario.metar]
    assert times == sorted(times)
    assert times[0] <= scenario.config.start_epoch - 3600
    assert sorted(i for i, _ in scenario.flight_plans) == sorted(r.aircraft_id for r in scenario.truth)


def test_unknown_types():
    sc = generate(ScenarioConfig(seed=2, duration_h=1, rate_per_h=30, unknown_type_rate=1.0))
    assert {t for _, t in sc.flight_plans} == {"ZZZZ"}


@pytest.mark.parametrize("kw", [
    {"rate_per_h": 0}, {"duration_h": -1}, {"hold_gain": 1.5}, {"zone_weights": (0.5, 0.5, 0.5, 0.5)},
    {"recat_mix": (1.0,)}, {"tbe_speed_kt": (300.0, 200.0)}, {"wave_amplitude": 1.0}, {"separation_s": 0},
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        generate(ScenarioConfig(**kw))


def test_infeasible_rate_rejected():
    with pytest.raises(ConfigError, match="capacity"):
        generate(ScenarioConfig(rate_per_h=60))


def test_config_dict_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"seed": 1, "bogus": 2})
    cfg = ScenarioConfig.from_dict({"zone_weights": [0.1, 0.2, 0.3, 0.4]})
    assert cfg.zone_weights == (0.1, 0.2, 0.3, 0.4)


def test_local_frame_preserves_distance_and_bearing():
    lat, lon = local_to_latlon(GEOMETRY, np.array([30.0, 0.0]), np.array([40.0, -12.5]))
    np.testing.assert_allclose(GEOMETRY.distance(lat, lon), [50.0, 12.5], atol=1e-9)
    np.testing.assert_allclose(latlon_to_local(GEOMETRY, lat[0], lon[0]), [30.0, 40.0], atol=1e-6)


# ---------------------------------------------------------------- gaps


def test_zero_gap_rate_is_identity(tmp_path, scenario):
    tr = scenario.trajectories[:3]
    assert all(a.equals(b) for a, b in zip(inject_gaps(tr, 0.0), tr))
    scenario.write(tmp_path)
    inject_gaps_csv(tmp_path / "adsb.csv", tmp_path / "same.csv", 0.0)
    assert filecmp.cmp(tmp_path / "adsb.csv", tmp_path / "same.csv", shallow=False)


def test_gap_count_is_binomial():
    tr = radial_track("G", 0.0, 60.0, 250.0, 999)
    (out,) = inject_gaps([tr], 0.05, seed=3)
    deleted = len(tr) - len(out)
    mean, sd = 998 * 0.05, np.sqrt(998 * 0.05 * 0.95)
    assert abs(deleted - mean) <= 3 * sd
    assert out.start == tr.start and out.end == tr.end


def test_gaps_are_seeded_and_bounded():
    tr = [radial_track("G", 0.0, 60.0, 250.0, 300)]
    assert inject_gaps(tr, 0.1, 1)[0].equals(inject_gaps(tr, 0.1, 1)[0])
    with pytest.raises(ConfigError):
        inject_gaps(tr, 0.3)
    with pytest.raises(ConfigError):
        inject_gaps_csv("a", "b", -0.1)


def test_gapped_file_keeps_track_ends(tmp_path, scenario):
    scenario.write(tmp_path)
    inject_gaps_csv(tmp_path / "adsb.csv", tmp_path / "gap.csv", 0.1, seed=1)
    full = {t.aircraft_id: t for t in assemble_trajectories(parse_adsb(tmp_path / "adsb.csv"))}
    gapped = parse_adsb(tmp_path / "gap.csv")
    assert len(gapped) < sum(len(t) for t in full.values())
    for tr in assemble_trajectories(gapped):
        assert (tr.start, tr.end) == (full[tr.aircraft_id].start, full[tr.aircraft_id].end)


def test_labels_survive_gaps(scenario):
    clean = {a.aircraft_id: a.label_seconds for a in extract_arrivals(scenario.trajectories, GEOMETRY,
                                                                         scenario.runways)}
    gapped = assemble_trajectories(inject_gaps(scenario.trajectories, 0.05, seed=9))
    noisy = {a.aircraft_id: a.label_seconds for a in extract_arrivals(gapped, GEOMETRY, scenario.runways)}
    assert noisy.keys() == clean.keys()
    assert all(abs(noisy[k] - clean[k]) <= 2 for k in clean)
