"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[acceptance N] PASS|FAIL ...`` line (visible
with ``pytest -v``) before asserting.
"""

import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from altpred.dataset import MetarTable, apply_normalizer, build_samples, feature_matrix, fit_normalizer, split
from altpred.eval import bad_ratio, metrics, reference_comparison
from altpred.holding import detect_holding
from altpred.ingest import assemble_trajectories, extract_arrivals, remove_outliers
from altpred.nn import LayerSpec, ModelConfig, ScalingCoefficients, build_model, compound_scale, flops
from altpred.raster import BLUE, RED, render
from altpred.simgen import ScenarioConfig, generate, inject_gaps
from altpred.train import TrainConfig, arrays_from_samples, predict, train

from conftest import GEOMETRY, T0, radial_track
from golden_scene import T_REF, TAU, golden_scene
from gradcases import ALL_CASES, TOLERANCE
from test_dataset import _dummy
from test_eval import FIXTURES, oracle
from test_ingest import _quadratic_points
from test_raster import GOLDEN


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def test_1_gradient_fidelity(verdict):
    start = time.perf_counter()
    errors = {name: case() for name, case in ALL_CASES.items()}
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = errors[worst] < TOLERANCE and elapsed < 60 and {"full_model", "ablated_model"} <= set(errors)
    verdict(1, ok, f"{len(errors)} cases, worst {worst}={errors[worst]:.2e}, {elapsed:.1f}s")


def test_2_flop_formulas(verdict):
    std = flops(LayerSpec("conv", 32, 64, k=3), 112, 112)
    sep = flops(LayerSpec("separable", 32, 64, k=3), 112, 112)
    ratio = std / sep
    wide = [flops(LayerSpec("conv", 32, d, k=3), 8, 8) / flops(LayerSpec("separable", 32, d, k=3), 8, 8)
            for d in (64, 1024, 2**20)]
    ok = (std == 231_211_008 and sep == 29_302_784 and abs(ratio - 7.89) <= 0.01
          and wide[0] < wide[1] < wide[2] < 9 and 9 - wide[2] < 1e-4)
    verdict(2, ok, f"standard {std}, separable {sep}, ratio {ratio:.4f}, wide limit {wide[2]:.6f}")


def test_3_compound_scaling(verdict):
    c = ScalingCoefficients()
    base = ([1, 2, 3], [16, 24, 40], 64)
    same = compound_scale(ScalingCoefficients(phi=0), *base)
    identity = (same.depths, same.widths, same.resolution) == base and same.depth_multiplier == 1.0
    ok = abs(c.flops_base - 1.920) <= 0.001 and c.satisfies_constraint() and identity
    verdict(3, ok, f"alpha*beta^2*gamma^2 = {c.flops_base:.4f}, phi=0 identity {identity}")


def test_4_metric_oracles(verdict):
    worst = 0.0
    for y, yhat, gamma in FIXTURES:
        rep, want = metrics(y, yhat, gamma), oracle(y, yhat, gamma)
        got = {"rmse": rep.rmse, "mae": rep.mae, "mape": rep.mape, "bad_ratio": rep.bad_ratio}
        worst = max(worst, *(abs(got[k] - want[k]) for k in got))
    rng = np.random.default_rng(0)
    rmse_ge_mae = 0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        y = rng.uniform(100, 2000, n)
        rep = metrics(y, y + rng.normal(0, 200, n))
        rmse_ge_mae += rep.rmse >= rep.mae
    y = rng.uniform(100, 2000, 500)
    yhat = y + rng.normal(0, 300, 500)
    ratios = [bad_ratio(y, yhat, g) for g in np.linspace(0, 1, 101)]
    monotone = all(a >= b for a, b in zip(ratios, ratios[1:]))
    ok = len(FIXTURES) >= 5 and worst <= 1e-9 and rmse_ge_mae == 1000 and monotone
    verdict(4, ok, f"{len(FIXTURES)} fixtures max dev {worst:.1e}, rmse>=mae {rmse_ge_mae}/1000, monotone {monotone}")


def test_5_ingest_oracle(busy_scenario, verdict):
    truth = busy_scenario.truth_by_id()
    gapped = assemble_trajectories(inject_gaps(busy_scenario.trajectories, 0.05, seed=21))
    found = {a.aircraft_id: a.label_seconds for a in extract_arrivals(gapped, busy_scenario.geometry,
                                                                       busy_scenario.runways)}
    within = sum(1 for k, r in truth.items() if k in found and abs(found[k] - r.label_s) <= 2)
    share = within / len(truth)

    cl, co = (1e-7, -2e-4, 1.2), (-3e-8, 4e-4, 103.8)
    times = T0 + np.concatenate([[0], np.cumsum(np.random.default_rng(5).integers(1, 9, 60))])
    s_all = np.arange(0, times[-1] - T0 + 1, dtype=float)
    (tr,) = assemble_trajectories(_quadratic_points(cl, co, times))
    quad_err = max(np.max(np.abs(tr.lat - (cl[0] * s_all**2 + cl[1] * s_all + cl[2]))),
                   np.max(np.abs(tr.lon - (co[0] * s_all**2 + co[1] * s_all + co[2]))))
    ok = share >= 0.99 and quad_err <= 1e-9
    verdict(5, ok, f"{within}/{len(truth)} labels within 2 s ({share:.1%}), quadratic error {quad_err:.1e} deg")


def test_6_raster_determinism(verdict):
    target, others = golden_scene()
    hashes = set()
    for threads in (1, 4):
        with threadpool_limits(threads):
            for width in (224, 64):
                h = render(target, others, GEOMETRY, T_REF, TAU, width=width).pixel_hash()
                hashes.add((width, h == GOLDEN[str(width)]))
    golden_ok = hashes == {(224, True), (64, True)}
    fast = radial_track("F", 90.0, 45.0, 400.0, 300)
    slow = radial_track("S", 270.0, 45.0, 200.0, 300)
    img = render(fast, [slow], GEOMETRY, T0 + 300, 300)
    ratio = img.count(RED) / img.count(BLUE)
    ok = golden_ok and abs(ratio - 2.0) <= 0.15 * 2.0
    verdict(6, ok, f"golden hashes at 1 and 4 threads {golden_ok}, speed pixel ratio {ratio:.3f} (want 2 +/- 15%)")


def test_7_holding_detection(busy_scenario, verdict):
    truth = busy_scenario.truth_by_id()
    flags = {tr.aircraft_id: detect_holding(tr, busy_scenario.geometry).holding for tr in busy_scenario.trajectories}
    held = [k for k, r in truth.items() if r.hold_orbits >= 1]
    clear = [k for k, r in truth.items() if r.hold_orbits == 0]
    recall = sum(flags[k] for k in held) / len(held)
    false_pos = sum(flags[k] for k in clear)
    ok = len(truth) >= 200 and held and recall == 1.0 and false_pos == 0
    verdict(7, ok, f"{len(truth)} aircraft, {len(held)} holds, recall {recall:.0%}, false positives {false_pos}")


def test_8_holding_module_ablation(verdict):
    start = time.perf_counter()
    sc = generate(ScenarioConfig(seed=11, duration_h=60, rate_per_h=36))
    arrivals = remove_outliers(extract_arrivals(sc.trajectories, sc.geometry, sc.runways))
    samples = build_samples(arrivals, sc.trajectories, MetarTable.from_rows(sc.metar), sc.flight_plans,
                            sc.geometry, sc.runways, tau=60, delta_s=900, image_size=64)
    held = sum(s.holding_status for s in samples)
    wins, lines = 0, []
    for seed in range(5):
        train_s, val_s, test_s = split(samples, seed=0)
        scaler = fit_normalizer(train_s)
        tr, va, te = (arrays_from_samples(apply_normalizer(scaler, x)) for x in (train_s, val_s, test_s))
        mae = {}
        for ablate in (False, True):
            model = build_model(ModelConfig.desk(ablate_holding=ablate), seed)
            train(model, tr, va, TrainConfig(epochs=50, seed=seed))
            mae[ablate] = float(np.mean(np.abs(predict(model, te) - te.labels)))
        wins += mae[False] < mae[True]
        lines.append(f"seed {seed}: full {mae[False]:.1f} vs ablated {mae[True]:.1f}")
    elapsed = time.perf_counter() - start
    ok = len(samples) >= 2000 and held > 0 and wins >= 4 and elapsed <= 30 * 60
    verdict(8, ok, f"{len(samples)} samples ({held} holding), full model wins {wins}/5 in {elapsed / 60:.1f} min; "
                   + "; ".join(lines))


def test_9_split_and_normalization(verdict):
    samples = _dummy(100, seed=3)
    train_s, val_s, test_s = split(samples, seed=0)
    z = feature_matrix(apply_normalizer(fit_normalizer(train_s), train_s))
    mean_dev, std_dev = float(np.max(np.abs(z.mean(axis=0)))), float(np.max(np.abs(z.std(axis=0) - 1)))
    sizes = (len(train_s), len(val_s), len(test_s))
    ok = sizes == (70, 15, 15) and mean_dev <= 1e-9 and std_dev <= 1e-9
    verdict(9, ok, f"split {sizes}, train mean dev {mean_dev:.1e}, std dev {std_dev:.1e}")


def test_10_reference_comparison_arithmetic(verdict):
    cmp = reference_comparison()
    bad = cmp.improvement("bad_ratio")
    under_60 = cmp.improvement("pct_abs_err_under_60")
    flagged = any("28.37" in n and "28.33" in n for n in cmp.notes)
    ok = bad == 1.31 and under_60 == 28.33 and flagged
    verdict(10, ok, f"bad-ratio gain {bad} pts, under-60s gain {under_60} pts, 28.37 discrepancy flagged {flagged}")
