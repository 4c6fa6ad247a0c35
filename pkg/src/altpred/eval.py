"""Accuracy metrics, ablation comparison and data-analysis reports."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.3
ABS_ERROR_THRESHOLDS = (30, 60, 120)

# Published ablation results (baseline without holding module vs full model).
# The printed improvement in the under-60 s share does not equal the
# difference of the two printed shares; compare() reports both.
REFERENCE_ABLATION = {
    "baseline": {"pct_abs_err_under_60": 0.5107, "bad_ratio": 0.0156},
    "proposed": {"pct_abs_err_under_60": 0.7940, "bad_ratio": 0.0025},
    "printed_improvement_pts": {"pct_abs_err_under_60": 28.37, "bad_ratio": 1.31},
}


@dataclass
class EvalReport:
    n: int
    rmse: float
    mae: float
    mape: float
    bad_ratio: float
    gamma: float
    ape: np.ndarray = field(repr=False)
    pct_abs_err_under: dict[int, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, float]:
        row = {"n": self.n, "rmse": self.rmse, "mae": self.mae, "mape": self.mape, "bad_ratio": self.bad_ratio,
               "gamma": self.gamma}
        row.update({f"pct_abs_err_under_{k}": v for k, v in sorted(self.pct_abs_err_under.items())})
        return row

    def accuracy(self) -> float:
        """Share of samples that are not bad predictions."""
        return 1.0 - self.bad_ratio


def _check_pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("need at least one sample")
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} labels vs {yhat.size} predictions")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(yhat)):
        raise ValueError("labels and predictions must be finite")
    if np.any(y <= 0):
        raise ValueError("labels must be positive durations")
    return y, yhat


def ape(y, yhat) -> np.ndarray:
    """Per-sample absolute percentage error, as a fraction."""
    y, yhat = _check_pair(y, yhat)
    return np.abs(y - yhat) / y


def bad_ratio(y, yhat, gamma: float = DEFAULT_GAMMA) -> float:
    """Fraction of samples whose APE is strictly above ``gamma``."""
    return float(np.mean(ape(y, yhat) > gamma))


def metrics(y, yhat, gamma: float = DEFAULT_GAMMA, thresholds: Sequence[int] = ABS_ERROR_THRESHOLDS) -> EvalReport:
    y, yhat = _check_pair(y, yhat)
    err = y - yhat
    abs_err = np.abs(err)
    a = abs_err / y
    return EvalReport(
        n=int(y.size),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(abs_err)),
        mape=float(np.mean(a)),
        bad_ratio=float(np.mean(a > gamma)),
        gamma=float(gamma),
        ape=a,
        pct_abs_err_under={int(t): float(np.mean(abs_err < t)) for t in thresholds},
    )


def ape_cdf(report: EvalReport) -> list[tuple[float, float]]:
    """Empirical CDF of APE: one ``(value, fraction <= value)`` point per distinct value."""
    if report.n < 1:
        raise ValueError("empty report")
    values, counts = np.unique(report.ape, return_counts=True)
    cum = np.cumsum(counts) / report.ape.size
    cum[-1] = 1.0
    return [(float(v), float(c)) for v, c in zip(values, cum)]


# --------------------------------------------------------------------------
# ablation comparison


@dataclass
class Comparison:
    rows: list[dict]
    notes: list[str]

    def improvement(self, metric: str) -> float:
        for r in self.rows:
            if r["metric"] == metric:
                return r["improvement_pts"]
        raise KeyError(metric)

    def to_text(self) -> str:
        lines = [f"{'metric':<24}{'baseline':>12}{'proposed':>12}{'delta':>12}{'improvement':>14}"]
        for r in self.rows:
            lines.append(
                f"{r['metric']:<24}{r['baseline']:>12.4f}{r['proposed']:>12.4f}{r['delta']:>12.4f}"
                f"{r['improvement_pts']:>14.2f}"
            )
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, ["metric", "baseline", "proposed", "delta", "improvement_pts"], lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


# metrics where a larger value is better; improvement is then proposed - baseline
_HIGHER_IS_BETTER = {"pct_abs_err_under_30", "pct_abs_err_under_60", "pct_abs_err_under_120"}


def _row_of(report: EvalReport | Mapping[str, float]) -> dict[str, float]:
    return report.as_row() if isinstance(report, EvalReport) else dict(report)


def compare(
    base: EvalReport | Mapping[str, float],
    proposed: EvalReport | Mapping[str, float],
    printed: Mapping[str, float] | None = None,
) -> Comparison:
    """Baseline vs proposed table.

    ``delta`` is ``proposed - baseline`` in the metric's own units. For the
    fractional metrics ``improvement_pts`` is the gain in percentage points,
    rounded to 2 decimals (positive = proposed is better); for rmse and mae
    it is the reduction in seconds. ``printed`` maps
    metric names to externally reported improvements; any that disagree
    with the recomputed value by 0.005 pts or more are flagged in ``notes``.
    """
    b, p = _row_of(base), _row_of(proposed)
    if "n" in b and "n" in p and b["n"] != p["n"]:
        raise ValueError(f"reports cover different test sets: n={b['n']} vs n={p['n']}")
    rows, notes = [], []
    for metric in b:
        if metric in ("n", "gamma") or metric not in p:
            continue
        delta = float(p[metric]) - float(b[metric])
        if metric in ("rmse", "mae"):
            gain = -delta
        else:
            sign = 1.0 if metric in _HIGHER_IS_BETTER else -1.0
            gain = round(sign * delta * 100.0, 2)
        gain += 0.0  # no negative zero in the table
        rows.append({"metric": metric, "baseline": float(b[metric]), "proposed": float(p[metric]), "delta": delta,
                     "improvement_pts": gain})
    for metric, value in (printed or {}).items():
        got = next((r["improvement_pts"] for r in rows if r["metric"] == metric), None)
        if got is None:
            notes.append(f"{metric}: reported improvement {value:.2f} has no matching metric")
        elif abs(got - value) >= 0.005:
            notes.append(f"{metric}: reported improvement {value:.2f} pts differs from recomputed {got:.2f} pts")
    return Comparison(rows, notes)


def reference_comparison() -> Comparison:
    ref = REFERENCE_ABLATION
    return compare(ref["baseline"], ref["proposed"], ref["printed_improvement_pts"])


# --------------------------------------------------------------------------
# reports on disk


def write_metrics(report: EvalReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "ape_cdf": out / "ape_cdf.csv", "ape_cdf_svg": out / "ape_cdf.svg"}
    row = report.as_row()
    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(row.keys())
        w.writerow([_fmt(v) for v in row.values()])
    cdf = ape_cdf(report)
    with open(paths["ape_cdf"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("ape", "cdf"))
        w.writerows((_fmt(a), _fmt(c)) for a, c in cdf)
    paths["ape_cdf_svg"].write_text(svg_polyline([a for a, _ in cdf], [c for _, c in cdf], "APE", "CDF"))
    return paths


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def quantile_row(values: np.ndarray) -> dict[str, float]:
    q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"count": int(values.size), "mean": float(values.mean()), "min": q[0], "q25": q[1], "median": q[2],
            "q75": q[3], "max": q[4]}


@dataclass
class AnalysisReport:
    by_recat: list[dict]
    by_holding: list[dict]
    histograms: list[dict]
    notes: list[str]


def analysis_report(samples: Sequence, holdings: Mapping[str, int] | None = None, bins: int = 10) -> AnalysisReport:
    """Label distributions per wake category and per holding status, plus
    holding-feature histograms split by holding status.

    ``samples`` are dataset samples (unnormalised). Holding status comes from
    ``holdings`` when given, else from each sample's own ``holding_status``.
    """
    if not samples:
        raise DataError("no samples to analyse")
    labels = np.array([s.label_s for s in samples])
    recat = np.array([int(s.tabular[11]) for s in samples])
    status = np.array([
        int(holdings.get(s.aircraft_id, 0)) if holdings is not None else int(s.holding_status) for s in samples
    ])
    hold_vec = np.stack([s.holding for s in samples])
    notes = []

    by_recat = []
    for code in range(6):
        mask = recat == code
        if mask.any():
            by_recat.append({"recat": code, **quantile_row(labels[mask])})
        else:
            notes.append(f"recat {code}: no samples")

    by_holding = []
    for flag in (0, 1):
        mask = status == flag
        if mask.any():
            by_holding.append({"holding": flag, **quantile_row(labels[mask])})
        else:
            notes.append(f"holding={flag}: no samples")

    histograms = []
    for j, name in ((1, "dt_trc"), (2, "dv_avg"), (3, "dv_lead")):
        col = hold_vec[:, j]
        edges = np.histogram_bin_edges(col, bins=bins)
        for flag in (0, 1):
            mask = status == flag
            if not mask.any():
                continue
            counts, _ = np.histogram(col[mask], bins=edges)
            for k, c in enumerate(counts):
                histograms.append({"feature": name, "holding": flag, "bin_lo": float(edges[k]),
                                   "bin_hi": float(edges[k + 1]), "count": int(c)})
    return AnalysisReport(by_recat, by_holding, histograms, notes)


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        if rows:
            w = csv.DictWriter(fh, list(rows[0].keys()), lineterminator="\n")
            w.writeheader()
            w.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
    return path


def write_analysis(report: AnalysisReport, out_dir: str | Path, svg: bool = True) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "recat": _write_rows(out / "analysis_recat.csv", report.by_recat),
        "holding": _write_rows(out / "analysis_holding.csv", report.by_holding),
        "features": _write_rows(out / "analysis_features.csv", report.histograms),
    }
    if report.notes:
        (out / "analysis_notes.txt").write_text("\n".join(report.notes) + "\n")
        paths["notes"] = out / "analysis_notes.txt"
    if svg:
        for name in ("dt_trc", "dv_avg", "dv_lead"):
            series = {}
            for r in report.histograms:
                if r["feature"] == name:
                    series.setdefault(r["holding"], []).append((0.5 * (r["bin_lo"] + r["bin_hi"]), r["count"]))
            if series:
                p = out / f"analysis_{name}.svg"
                p.write_text(svg_lines(series, name, "count"))
                paths[f"svg_{name}"] = p
    return paths


# --------------------------------------------------------------------------
# minimal SVG plots

_SVG_W, _SVG_H, _PAD = 480, 320, 40
_COLORS = ("#1f4e9c", "#c0392b", "#2e8b57", "#7f7f7f")


def _scale(values: Sequence[float], lo_px: float, hi_px: float):
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo if hi > lo else 1.0
    return lo_px + (v - lo) / span * (hi_px - lo_px)


def svg_lines(series: Mapping[object, list[tuple[float, float]]], xlabel: str, ylabel: str) -> str:
    """Polylines sharing one pair of axes; ``series`` maps a label to (x, y) points."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts] + [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_SVG_H - _PAD}" x2="{_SVG_W - _PAD}" y2="{_SVG_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_SVG_H - _PAD}" stroke="black"/>',
        f'<text x="{_SVG_W / 2:.0f}" y="{_SVG_H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{_SVG_H / 2:.0f}" font-size="12" transform="rotate(-90 12 {_SVG_H / 2:.0f})">{ylabel}</text>',
    ]
    for i, (label, pts) in enumerate(sorted(series.items(), key=lambda kv: str(kv[0]))):
        px = _scale([x_lo, x_hi] + [x for x, _ in pts], _PAD, _SVG_W - _PAD)[2:]
        py = _scale([y_lo, y_hi] + [y for _, y in pts], _SVG_H - _PAD, _PAD)[2:]
        coords = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        color = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        parts.append(f'<text x="{_SVG_W - _PAD - 80}" y="{_PAD + 14 * i}" font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_polyline(x: Sequence[float], y: Sequence[float], xlabel: str, ylabel: str) -> str:
    return svg_lines({"": list(zip(x, y))}, xlabel, ylabel)


def read_predictions(path: str | Path) -> dict[str, float]:
    """``id,pred_s`` (or ``id,label_s``) CSV -> mapping."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = reader.fieldnames or []
            value_col = next((c for c in ("pred_s", "label_s", "y") if c in cols), None)
            if "id" not in cols or value_col is None:
                raise DataError(f"{path}: need columns id and one of pred_s/label_s")
            return {r["id"]: float(r[value_col]) for r in reader}
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def align(pred: Mapping[str, float], truth: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    ids = sorted(set(pred) & set(truth))
    if not ids:
        raise DataError("predictions and labels share no ids")
    missing = len(truth) - len(ids)
    if missing:
        log.warning("%d labelled samples have no prediction", missing)
    return np.array([truth[i] for i in ids]), np.array([pred[i] for i in ids]), ids
