"""Result files: JSON run records, CSV logs and tables, polygon and Touchstone export."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import geometry
from .optimizer import LOG_COLUMNS
from .pipeline import BENCHMARK_COLUMNS, RunResult
from .simulator import Response

RESPONSE_COLUMNS = ("freq_GHz", "S11_x0_dB", "S11_xc_dB", "S11_xf_dB")
FEATURE_COLUMNS = ("design", "kind", "freq_GHz", "level_dB")
POLYGON_COLUMNS = ("vertex", "x_mm", "y_mm")
CANDIDATE_COLUMNS = ("index", "score_dB", "x")


def _clean(obj):
    # JSON has no NaN/inf; map them to null so files stay portable
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            vals = [row[c] for c in columns] if isinstance(row, dict) else row
            w.writerow([_fmt(v) for v in vals])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_iteration_log(path, rows) -> Path:
    return _write_csv(path, LOG_COLUMNS, rows)


def write_benchmark(path, rows) -> Path:
    return _write_csv(path, BENCHMARK_COLUMNS, rows)


def write_candidates(path, xs, scores) -> Path:
    rows = [(i, s, " ".join(repr(float(v)) for v in x)) for i, (x, s) in enumerate(zip(xs, scores))]
    return _write_csv(path, CANDIDATE_COLUMNS, rows)


def write_responses(path, responses: dict) -> Path:
    """Response curves at x(0), x_c* and x_f* on the shared sweep grid."""
    keys = ("x0", "x_c", "x_f")
    grid = next(r.freqs for r in responses.values())
    cols = []
    for k in keys:
        r = responses.get(k)
        if r is None:
            cols.append(np.full(grid.size, np.nan))
        else:
            cols.append(np.interp(grid, r.freqs, r.levels))
    rows = [(f, *(c[i] for c in cols)) for i, f in enumerate(grid)]
    return _write_csv(path, RESPONSE_COLUMNS, rows)


def write_features(path, features: dict) -> Path:
    """Feature overlay points (minima, maxima, crossings) per design."""
    rows = []
    for design, F in features.items():
        for kind, pts in (("min", F.minima), ("max", F.maxima), ("cross", F.crossings)):
            rows.extend((design, kind, float(f), float(s)) for f, s in pts)
    return _write_csv(path, FEATURE_COLUMNS, rows)


def write_polygon(path, x) -> Path:
    rows = [(i + 1, px, py) for i, (px, py) in enumerate(geometry.polygon_rows(x))]
    return _write_csv(path, POLYGON_COLUMNS, rows)


def write_touchstone(path, r: Response, *, comment: str = "") -> Path:
    """One-port Touchstone v1 file in dB/angle format (angle unknown, written as 0)."""
    lines = [f"! {comment}"] if comment else []
    lines.append("# GHZ S DB R 50")
    lines += [f"{f!r} {s!r} 0.0" for f, s in zip(r.freqs.tolist(), r.levels.tolist())]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_run(out_dir, result: RunResult) -> dict:
    """All files for an optimization run; returns ``{name: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"result": write_json(out / "result.json", result.to_record())}
    for phase, rows in result.logs.items():
        files[f"log_{phase}"] = write_iteration_log(out / f"iterations_{phase}.csv", rows)
    if result.responses:
        files["responses"] = write_responses(out / "responses.csv", result.responses)
    if result.features:
        files["features"] = write_features(out / "features.csv", result.features)
    return files


def response_from_record(rec: dict) -> Response:
    return Response(np.array(rec["freq_GHz"]), np.array(rec["S11_dB"]), rec["fidelity"])


def export_result(result_path, out_dir, design: str = "x_f_star") -> dict:
    """Polygon CSV and Touchstone file for one design of a saved run."""
    rec = read_json(result_path)
    x_rec = rec.get(design)
    if x_rec is None:
        raise KeyError(f"result file holds no {design!r} design")
    x = geometry.from_record(x_rec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"polygon": write_polygon(out / f"{design}_polygon.csv", x)}
    key = {"x0": "x0", "x_c_star": "x_c", "x_f_star": "x_f"}[design]
    r_rec = rec.get("responses", {}).get(key)
    if r_rec is not None:
        files["touchstone"] = write_touchstone(out / f"{design}.s1p", response_from_record(r_rec),
                                               comment=f"{design} ({r_rec['fidelity']} fidelity)")
    return files
