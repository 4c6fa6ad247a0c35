from dataclasses import dataclass

import numpy as np
import pytest

from altpred.airspace import AirspaceGeometry, destination, load_runways
from altpred.dataset import BuildReport, MetarTable, build_samples
from altpred.ingest import extract_arrivals
from altpred.simgen import ScenarioConfig, generate
from altpred.track import Trajectory

GEOMETRY = AirspaceGeometry()
T0 = 1_667_260_800


def radial_track(ident, bearing, d0_nm, speed_kt, seconds, t0=T0, alt=9000.0, geometry=GEOMETRY, inbound=True):
    """Constant-speed track along a radial of the airport, one fix per second."""
    t = np.arange(seconds + 1)
    sign = -1.0 if inbound else 1.0
    dist = d0_nm + sign * speed_kt * t / 3600.0
    pos = [destination(geometry.center_lat, geometry.center_lon, bearing, d) for d in dist]
    heading = (bearing + 180.0) % 360.0 if inbound else bearing % 360.0
    return Trajectory(ident, t0 + t, [p[0] for p in pos], [p[1] for p in pos], np.full(t.size, alt),
                      np.full(t.size, float(speed_kt)), np.full(t.size, heading))


def track_from_xy(ident, x_nm, y_nm, t0=T0, alt=9000.0, speed_kt=250.0, geometry=GEOMETRY):
    """Track through east/north offsets (NM) from the airport, headings from the path."""
    from altpred.simgen import local_to_latlon

    x, y = np.asarray(x_nm, float), np.asarray(y_nm, float)
    lat, lon = local_to_latlon(geometry, x, y)
    dx, dy = np.diff(x), np.diff(y)
    hdg = np.degrees(np.arctan2(dx, dy)) % 360.0
    hdg = np.r_[hdg, hdg[-1]]
    n = x.size
    return Trajectory(ident, t0 + np.arange(n), lat, lon, np.full(n, alt), np.full(n, speed_kt), hdg)


@dataclass
class Built:
    scenario: object
    arrivals: list
    metar: MetarTable
    samples: list
    report: BuildReport


@pytest.fixture(scope="session")
def geometry():
    return GEOMETRY


@pytest.fixture(scope="session")
def runways():
    return load_runways()


@pytest.fixture(scope="session")
def scenario():
    # 78 arrivals, 10 of them holding
    return generate(ScenarioConfig(seed=3, duration_h=2.5, rate_per_h=36))


@pytest.fixture(scope="session")
def arrivals(scenario):
    return extract_arrivals(scenario.trajectories, scenario.geometry, scenario.runways)


@pytest.fixture(scope="session")
def built(scenario, arrivals):
    metar = MetarTable.from_rows(scenario.metar)
    report = BuildReport()
    samples = build_samples(arrivals, scenario.trajectories, metar, scenario.flight_plans, scenario.geometry,
                            scenario.runways, tau=60, delta_s=900, image_size=32, report=report)
    return Built(scenario, arrivals, metar, samples, report)


@pytest.fixture(scope="session")
def busy_scenario():
    # 209 arrivals, 81 holding
    return generate(ScenarioConfig(seed=2, duration_h=5.2, rate_per_h=34))
