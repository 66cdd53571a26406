"""Deterministic output files: CSV/JSON emitters and atomic writes.

Every emitter returns the complete file text; writing happens in one
atomic rename so failed runs leave no partial artifacts.  JSON carries a
hex-float twin next to every float array for bit-exact reloading, and all
files embed the resolved run configuration and library version.  Nothing
here depends on wall-clock time.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError
from .estimators import EstimateField
from .experiments import RateReport


def atomic_write_text(path, text: str) -> None:
    """Write text through a temp file and atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".",
                               suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _hexes(a) -> list[str]:
    return [float(v).hex() for v in np.asarray(a, dtype=float).ravel()]


def _config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def _header_lines(config: dict) -> list[str]:
    return [f"# clipkde {__version__}",
            f"# config {_config_json(config)}"]


def field_to_csv(field: EstimateField, config: dict) -> str:
    """Grid estimate as `x1,..,xd,value` rows under a config header.

    Values are printed with repr, which round-trips binary floats exactly.
    """
    d = field.grid.shape[1]
    lines = _header_lines(config)
    lines.append(f"# estimator {field.estimator_id}")
    lines.append(",".join(f"x{j + 1}" for j in range(d)) + ",value")
    for row, v in zip(field.grid, field.values):
        lines.append(",".join(repr(float(c)) for c in row) + "," + repr(float(v)))
    return "\n".join(lines) + "\n"


def _meta_jsonable(metadata: dict) -> dict:
    out = {}
    for k, v in metadata.items():
        if isinstance(v, (str, int, bool)) or v is None:
            out[k] = v
        else:
            out[k] = float(v)
    return out


def field_to_json(field: EstimateField, config: dict) -> str:
    doc = {
        "kind": "estimate_field",
        "version": __version__,
        "config": config,
        "estimator_id": field.estimator_id,
        "metadata": _meta_jsonable(field.metadata),
        "dim": field.grid.shape[1],
        "grid": _floats(field.grid),
        "grid_hex": _hexes(field.grid),
        "values": _floats(field.values),
        "values_hex": _hexes(field.values),
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def field_from_json(text: str) -> tuple[EstimateField, dict]:
    """Rebuild the field bit-exactly from the hex twins."""
    doc = json.loads(text)
    if doc.get("kind") != "estimate_field":
        raise ConfigError("not an estimate-field document")
    d = int(doc["dim"])
    grid = np.array([float.fromhex(h) for h in doc["grid_hex"]]).reshape(-1, d)
    values = np.array([float.fromhex(h) for h in doc["values_hex"]])
    field = EstimateField(grid, values, doc["estimator_id"],
                          dict(doc["metadata"]))
    return field, doc["config"]


def report_to_json(report: RateReport, config: dict) -> str:
    doc = {
        "kind": "rate_report",
        "version": __version__,
        "config": config,
        "quantity": report.quantity,
        "estimator_id": report.estimator_id,
        "density_id": report.density_id,
        "mode": report.mode,
        "n_values": list(report.n_values),
        "replications": report.replications,
        "master_seed": report.master_seed,
        "r": report.r,
        "clip_c": report.clip_c,
        "clip_c_hex": float(report.clip_c).hex(),
        "slope": float(report.slope),
        "slope_hex": float(report.slope).hex(),
        "intercept": float(report.intercept),
        "intercept_hex": float(report.intercept).hex(),
        "medians": _floats(report.medians),
        "medians_hex": _hexes(report.medians),
        "q25": _floats(report.q25),
        "q25_hex": _hexes(report.q25),
        "q75": _floats(report.q75),
        "q75_hex": _hexes(report.q75),
        "raw_errors": _floats(report.raw_errors),
        "raw_errors_hex": _hexes(report.raw_errors),
        "clamp_events": report.clamp_events,
        "max_integral_dev": float(report.max_integral_dev),
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def report_from_json(text: str) -> tuple[RateReport, dict]:
    doc = json.loads(text)
    if doc.get("kind") != "rate_report":
        raise ConfigError("not a rate-report document")
    ns = tuple(int(v) for v in doc["n_values"])
    reps = int(doc["replications"])

    def arr(key, shape):
        return np.array([float.fromhex(h) for h in doc[key]]).reshape(shape)

    report = RateReport(
        doc["quantity"], doc["estimator_id"], doc["density_id"], doc["mode"],
        ns, arr("raw_errors_hex", (len(ns), reps)),
        arr("medians_hex", len(ns)), arr("q25_hex", len(ns)),
        arr("q75_hex", len(ns)), float.fromhex(doc["slope_hex"]),
        float.fromhex(doc["intercept_hex"]), reps, int(doc["master_seed"]),
        float(doc["r"]), float.fromhex(doc["clip_c_hex"]),
        int(doc["clamp_events"]), float(doc["max_integral_dev"]))
    return report, doc["config"]


def report_to_raw_csv(report: RateReport, config: dict) -> str:
    """Per-replication errors: one row per (n, rep)."""
    lines = _header_lines(config)
    lines.append("n,rep,error")
    for i, n in enumerate(report.n_values):
        for rep in range(report.replications):
            lines.append(f"{n},{rep},{float(report.raw_errors[i, rep])!r}")
    return "\n".join(lines) + "\n"


def report_to_summary_csv(report: RateReport, config: dict) -> str:
    """Fitted summary: quartiles per n plus the common slope columns."""
    lines = _header_lines(config)
    lines.append("n,median,q25,q75,intercept,slope")
    for i, n in enumerate(report.n_values):
        lines.append(",".join([
            str(n), repr(float(report.medians[i])), repr(float(report.q25[i])),
            repr(float(report.q75[i])), repr(float(report.intercept)),
            repr(float(report.slope)),
        ]))
    return "\n".join(lines) + "\n"


def report_to_plot_data(report: RateReport, config: dict) -> str:
    """Gnuplot-ready columns: log((log n)/n), log median error, fitted line."""
    lines = _header_lines(config)
    lines.append("# log_logn_over_n log_median_error fitted_line")
    ns = np.array(report.n_values, dtype=float)
    xs = np.log(np.log(ns) / ns)
    ys = np.log(report.medians)
    fit = report.intercept + report.slope * xs
    for x, y, z in zip(xs, ys, fit):
        lines.append(f"{float(x)!r} {float(y)!r} {float(z)!r}")
    return "\n".join(lines) + "\n"


def bias_scan_to_csv(rows, slopes: dict, config: dict) -> str:
    """Bias-scan table `t,h,bias,slope`; slope is per-t, repeated down rows."""
    lines = _header_lines(config)
    lines.append("t,h,bias,slope")
    for t, h, b in rows:
        lines.append(",".join([repr(float(t)), repr(float(h)), repr(float(b)),
                               repr(float(slopes[t]))]))
    return "\n".join(lines) + "\n"


def embedded_config(text: str) -> dict:
    """Pull the resolved config back out of any output file (CSV or JSON)."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text)["config"]
    for line in text.splitlines():
        if line.startswith("# config "):
            return json.loads(line[len("# config "):])
    raise ConfigError("no embedded config found in output file")
