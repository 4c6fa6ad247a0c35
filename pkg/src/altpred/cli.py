"""Command-line front end: ``altpred <subcommand> [options]``.

Every option may also be given in a JSON file passed with ``--config``; flags
on the command line win over the file, which wins over built-in defaults.
Each output directory receives ``config.resolved.json`` with the options that
produced it.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Callable


from . import __version__
from .airspace import AirspaceGeometry, load_runways
from .dataset import (
    BuildReport, MetarTable, apply_normalizer, build_samples, fit_normalizer, read_flight_plans, read_manifest,
    read_recat_map, split, write_manifest,
)
from .errors import AltpredError, ConfigError, DataError
from .eval import (
    DEFAULT_GAMMA, align, analysis_report, compare, metrics, read_predictions, reference_comparison, write_analysis,
    write_metrics,
)
from .holding import HOLD_DEGREES, HOLD_WINDOW_S
from .ingest import DEFAULT_MAX_GAP, extract_arrivals, load_tracks, read_arrivals, remove_outliers, write_arrivals
from .nn import ModelConfig, build_model
from .raster import encode_png, render
from .simgen import ScenarioConfig, generate, inject_gaps

log = logging.getLogger("altpred")

THREADS_ENV = "ALTPRED_THREADS"
RESOLVED_NAME = "config.resolved.json"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


# --------------------------------------------------------------------------
# option plumbing


class Options:
    """Declared options of one subcommand with their defaults."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.defaults: dict[str, Any] = {}

    def add(self, flag: str, default=None, help: str = "", **kw) -> None:
        dest = flag.lstrip("-").replace("-", "_")
        self.defaults[dest] = default
        if kw.get("action") == "store_true":
            kw = {**kw, "action": "store_const", "const": True}
        shown = f" (default: {default})" if default is not None and kw.get("action") is None else ""
        self.parser.add_argument(flag, dest=dest, default=None, help=help + shown, **kw)


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _latlon(text: str) -> tuple[float, float]:
    try:
        lat, lon = (float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LAT,LON, got {text!r}") from exc
    return lat, lon


def _geometry_options(o: Options) -> None:
    o.add("--center", None, "airport reference point as LAT,LON", type=_latlon)
    o.add("--trc-nm", 50.0, "TRC radius in NM", type=float)
    o.add("--tbx-nm", 60.0, "TBX radius in NM", type=float)
    o.add("--runways", None, "runway layout JSON (bundled layout if omitted)")


def _track_options(o: Options) -> None:
    o.add("--adsb", None, "ADS-B CSV with columns id,time,lat,lon,alt,gs,trk")
    o.add("--max-gap", DEFAULT_MAX_GAP, "longest gap in seconds that is filled rather than split", type=int)


def _feature_options(o: Options) -> None:
    o.add("--metar", None, "METAR CSV with columns time,drct,sknt,gust,vsby,skyl1,skyc1")
    o.add("--fpl", None, "flight-plan CSV with columns aircraft_id,actype")
    o.add("--recat-map", None, "type -> RECAT CSV with columns actype,recat_code (bundled map if omitted)")
    o.add("--arrivals", None, "arrivals CSV from 'ingest' (re-extracted from the tracks if omitted)")
    o.add("--tz-offset", 8.0, "local time offset in hours for seasonality features", type=float)
    o.add("--holding-window-s", HOLD_WINDOW_S, "holding detector window", type=int)
    o.add("--holding-deg", HOLD_DEGREES, "holding detector heading-change threshold", type=float)


def _model_options(o: Options) -> None:
    o.add("--epochs", 50, "training epochs", type=int)
    o.add("--batch-size", 64, "mini-batch size", type=int)
    o.add("--lr", 1e-3, "Adam learning rate", type=float)
    o.add("--dtype", "float32", "floating point type for training", choices=("float32", "float64"))
    o.add("--ablate-holding", False, "train the baseline without the holding module", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, Options]]:
    parser = argparse.ArgumentParser(prog="altpred", description="Aircraft landing time prediction pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option values")
    common.add_argument("--threads", type=int, default=None,
                        help=f"BLAS/OpenMP thread cap (default: ${THREADS_ENV} or unlimited)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    opts: dict[str, Options] = {}

    def command(name: str, help: str) -> Options:
        p = sub.add_parser(name, help=help, description=help, parents=[common])
        o = Options(p)
        opts[name] = o
        return o

    o = command("simulate", "Generate a synthetic arrival scenario (ADS-B, METAR, flight plans, truth).")
    o.add("--out", None, "output directory")
    o.add("--seed", 0, "random seed", type=int)
    o.add("--duration-h", None, "scenario length in hours", type=float)
    o.add("--rate-per-h", None, "mean arrival rate per hour", type=float)
    o.add("--gap-rate", 0.0, "fraction of interior ADS-B fixes to delete", type=float)

    o = command("ingest", "Assemble trajectories and extract labelled arrivals.")
    _track_options(o)
    _geometry_options(o)
    o.add("--out", None, "output directory")
    o.add("--outlier-k", 3.0, "drop labels further than k standard deviations from the mean", type=float)

    o = command("build-dataset", "Render images and assemble feature vectors into a manifest.")
    _track_options(o)
    _geometry_options(o)
    _feature_options(o)
    o.add("--out", None, "output directory")
    o.add("--delta-min", 15, "tabular capture window in minutes", type=float)
    o.add("--tau-s", 60, "image capture window in seconds", type=int)
    o.add("--img-size", 64, "image width and height in pixels", type=int)
    o.add("--seed", 0, "split seed", type=int)

    o = command("rasterize", "Render trajectory images for selected arrivals.")
    _track_options(o)
    _geometry_options(o)
    o.add("--arrivals", None, "arrivals CSV from 'ingest' (re-extracted if omitted)")
    o.add("--id", None, "render only this aircraft")
    o.add("--tau", 60, "capture window in seconds", type=int)
    o.add("--img-size", 224, "image width and height in pixels", type=int)
    o.add("--out-dir", None, "directory for PNG files")

    o = command("train", "Train the network on a dataset directory.")
    o.add("--dataset", None, "directory written by build-dataset")
    o.add("--out", None, "output directory")
    o.add("--seed", 0, "seed for initialisation, batch order and dropout", type=int)
    _model_options(o)

    o = command("evaluate", "Score predictions against labels.")
    o.add("--pred", None, "predictions CSV with columns id,pred_s")
    o.add("--truth", None, "labels: manifest.jsonl or CSV with columns id,label_s")
    o.add("--gamma", DEFAULT_GAMMA, "APE threshold for bad predictions", type=float)
    o.add("--out", None, "output directory")

    o = command("report", "Label and feature distribution reports, and baseline/proposed comparison.")
    o.add("--dataset", None, "directory written by build-dataset")
    o.add("--baseline", None, "metrics.csv of the baseline model")
    o.add("--proposed", None, "metrics.csv of the proposed model")
    o.add("--reference", False, "also print the published ablation comparison", action="store_true")
    o.add("--no-svg", False, "skip SVG plots", action="store_true")
    o.add("--out", None, "output directory")

    o = command("grid", "Sweep (tau, delta) pairs and write a test-MAE matrix.")
    _track_options(o)
    _geometry_options(o)
    _feature_options(o)
    o.add("--taus", [30, 60, 90], "comma-separated tau values in seconds", type=_csv_ints)
    o.add("--deltas", [10, 15, 20, 25, 30], "comma-separated delta values in minutes", type=_csv_ints)
    o.add("--img-size", 64, "image width and height in pixels", type=int)
    o.add("--seed", 0, "seed for split and training", type=int)
    o.add("--out", None, "output directory")
    _model_options(o)
    return parser, opts


def resolve(args: argparse.Namespace, opts: Options) -> dict[str, Any]:
    """Merge defaults, the ``--config`` file and command-line flags."""
    file_cfg: dict[str, Any] = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    _check_known_keys(file_cfg)
    resolved = {}
    for dest, default in opts.defaults.items():
        cli = getattr(args, dest, None)
        if cli is not None:
            resolved[dest] = cli
        elif dest in file_cfg:
            resolved[dest] = _coerce(dest, file_cfg[dest], default)
        else:
            resolved[dest] = default
    for section in ("scenario", "model"):
        if section in file_cfg:
            if not isinstance(file_cfg[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            resolved[section] = file_cfg[section]
    return resolved


def _coerce(dest: str, value, default):
    if dest in ("taus", "deltas") and isinstance(value, str):
        return _csv_ints(value)
    if dest == "center" and isinstance(value, str):
        return _latlon(value)
    if isinstance(default, bool) or default is None:
        return value
    if isinstance(default, (int, float)) and not isinstance(value, (int, float)):
        raise ConfigError(f"option {dest!r} must be a number, got {value!r}")
    return value


def _check_known_keys(cfg: dict) -> None:
    parser, opts = build_parser()
    known = {"scenario", "model"} | {f.name for f in fields(ScenarioConfig)}
    for o in opts.values():
        known |= set(o.defaults)
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def _require(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) in (None, "")]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def write_resolved(out_dir: Path, command: str, opts: dict) -> Path:
    doc = {"command": command, "version": __version__, "options": {k: _jsonable(v) for k, v in sorted(opts.items())}}
    path = out_dir / RESOLVED_NAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


@contextlib.contextmanager
def staged_output(out: str | Path):
    """Write into a temporary sibling directory and move it into place on success."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)


# --------------------------------------------------------------------------
# shared pipeline pieces


def geometry_from(opts: dict) -> AirspaceGeometry:
    kw = {"trc_radius": float(opts["trc_nm"]), "tbx_radius": float(opts["tbx_nm"])}
    if opts.get("center") is not None:
        kw["center_lat"], kw["center_lon"] = opts["center"]
    return AirspaceGeometry(**kw)


def tracks_and_arrivals(opts: dict, geometry: AirspaceGeometry, runways):
    _require(opts, "adsb")
    trajs, stats, skipped = load_tracks(opts["adsb"], opts["max_gap"])
    log.info("%d trajectories (%d imputed fixes, %d splits, %d bad rows)", len(trajs), stats.imputed_points,
             stats.splits, skipped)
    if opts.get("arrivals"):
        arrivals = read_arrivals(opts["arrivals"])
    else:
        arrivals = remove_outliers(extract_arrivals(trajs, geometry, runways))
    if not arrivals:
        raise DataError("no arrivals found in the ADS-B data")
    return trajs, arrivals


@dataclass
class Inputs:
    geometry: AirspaceGeometry
    runways: object
    trajs: list
    arrivals: list
    metar: MetarTable
    flight_plans: dict
    recat_map: dict


def load_inputs(opts: dict) -> Inputs:
    _require(opts, "adsb", "metar", "fpl")
    geometry = geometry_from(opts)
    runways = load_runways(opts.get("runways"))
    trajs, arrivals = tracks_and_arrivals(opts, geometry, runways)
    return Inputs(geometry, runways, trajs, arrivals, MetarTable.read_csv(opts["metar"]),
                  read_flight_plans(opts["fpl"]), read_recat_map(opts.get("recat_map")))


def samples_from(inputs: Inputs, opts: dict, tau: int, delta_min: float, image_dir=None, report=None):
    samples = build_samples(
        inputs.arrivals, inputs.trajs, inputs.metar, inputs.flight_plans, inputs.geometry, inputs.runways,
        tau=tau, delta_s=delta_min * 60.0, image_size=opts["img_size"], recat_map=inputs.recat_map,
        tz_offset=opts["tz_offset"], image_dir=image_dir, keep_pixels=image_dir is None, report=report,
        hold_window_s=opts["holding_window_s"], hold_deg=opts["holding_deg"],
    )
    if len(samples) < 3:
        raise DataError(f"only {len(samples)} usable samples; need at least 3")
    return samples


def sample_key(s) -> str:
    return f"{s.aircraft_id}_{s.t_ref}"


def _model_config(opts: dict, image_size: int) -> ModelConfig:
    extra = dict(opts.get("model") or {})
    extra.update(image_size=image_size, ablate_holding=bool(opts["ablate_holding"]))
    try:
        cfg = ModelConfig.from_dict(extra)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad model configuration: {exc}") from exc
    return cfg


def fit_and_score(opts: dict, train_s, val_s, test_s, image_size: int, out_dir: Path | None = None):
    from .train import TrainConfig, arrays_from_samples, predict, save_checkpoint, train

    scaler = fit_normalizer(train_s)
    tr, va, te = (arrays_from_samples(apply_normalizer(scaler, x)) for x in (train_s, val_s, test_s))
    cfg = _model_config(opts, image_size)
    model = build_model(cfg, opts["seed"])
    tcfg = TrainConfig(epochs=opts["epochs"], batch_size=opts["batch_size"], lr=opts["lr"], seed=opts["seed"],
                       dtype=opts["dtype"])
    tcfg.validate()
    history = out_dir / "history.csv" if out_dir is not None else None
    result = train(model, tr, va, tcfg, history)
    pred = predict(model, te)
    report = metrics(te.labels, pred)
    if out_dir is not None:
        save_checkpoint(model, out_dir / "model.json", {
            "train_config": tcfg.to_dict(), "best_epoch": result.best_epoch,
            "normalizer": {"mean": scaler.mean_.tolist(), "scale": scaler.scale_.tolist()},
        })
        with open(out_dir / "predictions.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("id", "t_ref", "pred_s", "label_s"))
            for s, p in zip(test_s, pred):
                w.writerow((s.aircraft_id, s.t_ref, f"{p:.3f}", f"{s.label_s:.3f}"))
        write_metrics(report, out_dir)
    return report, result


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(opts: dict) -> int:
    _require(opts, "out")
    scen = dict(opts.get("scenario") or {})
    scen["seed"] = opts["seed"]
    for key in ("duration_h", "rate_per_h"):
        if opts.get(key) is not None:
            scen[key] = opts[key]
    cfg = ScenarioConfig.from_dict(scen)
    if not 0 <= opts["gap_rate"] <= 0.2:
        raise ConfigError("--gap-rate must be in [0, 0.2]")
    scenario = generate(cfg)
    if opts["gap_rate"] > 0:
        scenario.trajectories = inject_gaps(scenario.trajectories, opts["gap_rate"], cfg.seed)
    with staged_output(opts["out"]) as out:
        scenario.write(out)
        write_resolved(out, "simulate", {**opts, "scenario": cfg.to_dict()})
    log.info("wrote %d aircraft to %s", len(scenario.truth), opts["out"])
    print(f"simulated {len(scenario.truth)} arrivals -> {opts['out']}")
    return EXIT_OK


def cmd_ingest(opts: dict) -> int:
    _require(opts, "adsb", "out")
    geometry = geometry_from(opts)
    runways = load_runways(opts.get("runways"))
    trajs, stats, skipped = load_tracks(opts["adsb"], opts["max_gap"])
    raw = extract_arrivals(trajs, geometry, runways)
    if len(raw) < 2:
        raise DataError(f"found {len(raw)} arrivals; need at least 2")
    arrivals = remove_outliers(raw, opts["outlier_k"])
    with staged_output(opts["out"]) as out:
        write_arrivals(arrivals, out / "arrivals.csv")
        summary = {"trajectories": len(trajs), "arrivals": len(raw), "kept": len(arrivals),
                   "outliers": len(raw) - len(arrivals), "skipped_rows": skipped, **vars(stats)}
        (out / "ingest_stats.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        write_resolved(out, "ingest", opts)
    print(f"{len(arrivals)} arrivals ({len(raw) - len(arrivals)} outliers removed) -> {opts['out']}")
    return EXIT_OK


def cmd_build_dataset(opts: dict) -> int:
    _require(opts, "out")
    with staged_output(opts["out"]) as out:
        report = BuildReport()
        samples = samples_from(load_inputs(opts), opts, opts["tau_s"], opts["delta_min"], image_dir=out / "images", report=report)
        for s in samples:
            s.image_ref = f"images/{s.image_ref}"
        write_manifest(samples, out / "manifest.jsonl")
        train_s, val_s, test_s = split(samples, seed=opts["seed"])
        splits = {"seed": opts["seed"], **{name: sorted(sample_key(s) for s in part)
                                           for name, part in (("train", train_s), ("val", val_s), ("test", test_s))}}
        (out / "splits.json").write_text(json.dumps(splits, indent=1) + "\n")
        scaler = fit_normalizer(train_s)
        (out / "normalizer.json").write_text(json.dumps(
            {"mean": scaler.mean_.tolist(), "scale": scaler.scale_.tolist()}, indent=1) + "\n")
        (out / "build_report.json").write_text(json.dumps(
            {"built": report.built, "skipped": report.skipped, "recat_flagged": report.recat_flagged,
             "errors": report.errors}, indent=1) + "\n")
        write_resolved(out, "build-dataset", opts)
    print(f"{len(samples)} samples ({report.skipped} skipped) -> {opts['out']}")
    return EXIT_OK


def cmd_rasterize(opts: dict) -> int:
    _require(opts, "adsb", "out_dir")
    geometry = geometry_from(opts)
    runways = load_runways(opts.get("runways"))
    trajs, arrivals = tracks_and_arrivals(opts, geometry, runways)
    if opts.get("id"):
        arrivals = [a for a in arrivals if a.aircraft_id == opts["id"]]
        if not arrivals:
            raise DataError(f"aircraft {opts['id']} has no arrival")
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    by_id = {}
    for tr in trajs:
        by_id.setdefault(tr.aircraft_id, []).append(tr)
    cache: dict = {}
    n = 0
    for a in arrivals:
        target = next((t for t in by_id.get(a.aircraft_id, ()) if t.start <= a.t_trc <= t.end), None)
        if target is None:
            log.warning("%s: no trajectory covers t=%d", a.aircraft_id, a.t_trc)
            continue
        others = [t for t in trajs if t is not target and t.start <= a.t_trc and t.end >= a.t_trc - opts["tau"]]
        img = render(target, others, geometry, a.t_trc, opts["tau"], opts["img_size"], cache=cache)
        encode_png(img, out / img.file_name())
        n += 1
    write_resolved(out, "rasterize", opts)
    print(f"rendered {n} images -> {out}")
    return EXIT_OK


def _load_dataset(path: str | Path):
    root = Path(path)
    manifest = root / "manifest.jsonl"
    if not manifest.exists():
        raise DataError(f"{root} has no manifest.jsonl")
    samples = read_manifest(manifest)
    if not samples:
        raise DataError(f"{manifest} is empty")
    return root, samples


def cmd_train(opts: dict) -> int:
    _require(opts, "dataset", "out")
    root, samples = _load_dataset(opts["dataset"])
    try:
        splits = json.loads((root / "splits.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read splits.json: {exc}") from exc
    by_key = {sample_key(s): s for s in samples}
    try:
        parts = [[by_key[k] for k in splits[name]] for name in ("train", "val", "test")]
    except KeyError as exc:
        raise DataError(f"splits.json refers to a sample missing from the manifest: {exc}") from exc
    size = samples[0].pixels().shape[0]
    with staged_output(opts["out"]) as out:
        report, result = fit_and_score(opts, *parts, image_size=size, out_dir=out)
        write_resolved(out, "train", opts)
    print(f"best epoch {result.best_epoch}: val MAE {result.best_val_mae:.2f} s; test MAE {report.mae:.2f} s, "
          f"RMSE {report.rmse:.2f} s, bad ratio {report.bad_ratio:.4f}")
    return EXIT_OK


def _read_truth(path: str) -> dict[str, float]:
    if str(path).endswith(".jsonl"):
        return {s.aircraft_id: s.label_s for s in read_manifest(path)}
    return read_predictions(path)


def cmd_evaluate(opts: dict) -> int:
    _require(opts, "pred", "truth")
    y, yhat, _ = align(read_predictions(opts["pred"]), _read_truth(opts["truth"]))
    try:
        report = metrics(y, yhat, opts["gamma"])
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if opts.get("out"):
        with staged_output(opts["out"]) as out:
            write_metrics(report, out)
            write_resolved(out, "evaluate", opts)
    for k, v in report.as_row().items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    return EXIT_OK


def _read_metrics_row(path: str) -> dict[str, float]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) != 1:
        raise DataError(f"{path}: expected exactly one metrics row")
    return {k: float(v) for k, v in rows[0].items()}


def cmd_report(opts: dict) -> int:
    _require(opts, "out")
    if not opts.get("dataset") and not (opts.get("baseline") and opts.get("proposed")) and not opts["reference"]:
        raise ConfigError("give --dataset, --baseline/--proposed or --reference")
    samples = _load_dataset(opts["dataset"])[1] if opts.get("dataset") else None
    comparison = None
    if opts.get("baseline") or opts.get("proposed"):
        _require(opts, "baseline", "proposed")
        comparison = compare(_read_metrics_row(opts["baseline"]), _read_metrics_row(opts["proposed"]))
    with staged_output(opts["out"]) as out:
        if samples is not None:
            write_analysis(analysis_report(samples), out, svg=not opts["no_svg"])
        if comparison is not None:
            (out / "comparison.csv").write_text(comparison.to_csv())
            print(comparison.to_text())
        if opts["reference"]:
            ref = reference_comparison()
            (out / "reference_comparison.csv").write_text(ref.to_csv())
            print(ref.to_text())
        write_resolved(out, "report", opts)
    return EXIT_OK


def cmd_grid(opts: dict) -> int:
    _require(opts, "out")
    taus, deltas = list(opts["taus"]), list(opts["deltas"])
    if not taus or not deltas or min(taus) <= 0 or min(deltas) <= 0:
        raise ConfigError("--taus and --deltas need positive values")
    inputs = load_inputs(opts)
    cells = {}
    with staged_output(opts["out"]) as out:
        with open(out / "grid_metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("tau_s", "delta_min", "n_test", "mae", "rmse", "mape", "bad_ratio"))
            for tau in taus:
                for delta in deltas:
                    samples = samples_from(inputs, opts, tau, delta)
                    parts = split(samples, seed=opts["seed"])
                    report, _ = fit_and_score(opts, *parts, image_size=opts["img_size"])
                    cells[(tau, delta)] = report.mae
                    w.writerow((tau, delta, report.n, f"{report.mae:.6f}", f"{report.rmse:.6f}",
                                f"{report.mape:.6f}", f"{report.bad_ratio:.6f}"))
                    log.info("tau=%d delta=%d test MAE %.2f", tau, delta, report.mae)
        with open(out / "grid_mae.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau_s"] + [f"delta_{d}" for d in deltas])
            for tau in taus:
                w.writerow([tau] + [f"{cells[(tau, d)]:.6f}" for d in deltas])
        write_resolved(out, "grid", opts)
    print(f"{len(cells)}-cell grid -> {opts['out']}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict], int]] = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "build-dataset": cmd_build_dataset, "rasterize": cmd_rasterize,
    "train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report, "grid": cmd_grid,
}


def _thread_limit(n: int | None):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv: list[str] | None = None) -> int:
    parser, opts = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        resolved = resolve(args, opts[args.command])
        with _thread_limit(args.threads):
            return COMMANDS[args.command](resolved)
    except AltpredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
