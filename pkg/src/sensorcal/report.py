"""Unified, self-describing analysis report (JSON or CSV).

Every scalar is stored as ``{"value": v, "unit": u}``; curve samples are
tables with explicit column units.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone

from . import __version__
from .noise import NoiseReport
from .radiometry import DynamicRangeReport, LinearFit, RadiometricCurve
from .synthetic import RNG_ALGORITHM

UNITS = {
    "dark_mean": "DN",
    "dark_spatial_sigma": "DN",
    "dark_temporal_sigma": "DN",
    "dark_temporal_uncertainty": "DN",
    "dark_temporal_uncertainty_floor": "DN",
    "n_dark_frames": "count",
    "n_flat_frames": "count",
    "prnu_percent": "%",
    "light_spatial_sigma": "DN",
    "light_temporal_sigma": "DN",
    "frame_means": "DN",
    "blo": "DN",
    "min_signal_dn": "DN",
    "min_signal_exposure": "rel. exposure",
    "linear_end_dn": "DN",
    "linear_end_exposure": "rel. exposure",
    "max_signal_dn": "DN",
    "max_signal_exposure": "rel. exposure",
    "saturation_dn": "DN",
    "linear_dr_db": "dB",
    "full_dr_db": "dB",
    "snr_threshold": "ratio",
    "slope": "DN / rel. exposure",
    "intercept": "DN",
    "residual_rms": "DN",
}

DECISIONS = {
    "variance": "unbiased (n - 1) everywhere",
    "dynamic_range": "20*log10 of the exposure ratio",
    "snr": "mean / spatial std of the frame-averaged ROI channel pixels at the same exposure",
    "min_signal_interpolation": "linear in SNR and in exposure between bracketing samples",
    "linear_fit": "ordinary least squares over the growing low-exposure window",
    "linear_window_rule": "|mean - fit| <= tol * fit + 3 * standard error of the mean",
    "linear_end": "interpolated where the relative deviation from the fit reaches tol",
    "plateau": "longest tail (>= 2 samples) within plateau_tolerance of the final mean",
    "max_signal": "last pre-plateau sample, or the linear end if further out",
    "blo_subtraction": "float subtraction for statistics; frame transforms clamp at 0 DN",
    "rng": RNG_ALGORITHM,
}


def quantity(value, unit: str) -> dict:
    if isinstance(value, dict):
        return {k: quantity(v, unit) for k, v in value.items()}
    return {"value": value, "unit": unit}


def _annotate(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if k in UNITS and v is not None:
            out[k] = quantity(v, UNITS[k])
        else:
            out[k] = v
    return out


def curve_table(curve: RadiometricCurve) -> dict:
    return {
        "channel": curve.channel,
        "blo_removed": curve.blo_removed,
        "columns": ["exposure", "mean", "std", "n_pixels"],
        "units": ["rel. exposure", "DN", "DN", "count"],
        "rows": [[float(e), float(m), float(s), int(n)] for e, m, s, n in
                 zip(curve.exposures, curve.means, curve.stds, curve.n_pixels)],
    }


def build_report(config: dict, blo: float | None = None, noise: NoiseReport | None = None,
                 curve: RadiometricCurve | None = None, linear_fit: LinearFit | None = None,
                 dynamic_range: DynamicRangeReport | None = None, timestamp: bool = True,
                 extra: dict | None = None) -> dict:
    doc = {"tool": "sensorcal", "version": __version__}
    if timestamp:
        doc["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    doc["config"] = config
    doc["decisions"] = DECISIONS
    if blo is not None:
        doc["blo"] = quantity(float(blo), "DN")
    if noise is not None:
        doc["noise"] = _annotate(noise.to_dict())
    if curve is not None:
        doc["radiometric_curve"] = curve_table(curve)
    if linear_fit is not None:
        doc["linear_fit"] = _annotate(linear_fit.to_dict())
    if dynamic_range is not None:
        doc["dynamic_range"] = _annotate(dynamic_range.to_dict())
    if extra:
        doc.update(extra)
    return doc


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def _flatten(prefix: str, node, rows: list) -> None:
    if isinstance(node, dict) and set(node) == {"value", "unit"}:
        rows.append((prefix, node["value"], node["unit"]))
    elif isinstance(node, dict) and {"columns", "rows"} <= set(node):
        for i, row in enumerate(node["rows"]):
            for col, unit, v in zip(node["columns"], node.get("units", [""] * len(row)), row):
                rows.append((f"{prefix}.{i}.{col}", v, unit))
    elif isinstance(node, dict):
        for k, v in node.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, rows)
    elif isinstance(node, list):
        if all(not isinstance(v, (dict, list)) for v in node):
            rows.append((prefix, " ".join(str(v) for v in node), ""))
        else:
            for i, v in enumerate(node):
                _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, node, ""))


def to_csv(doc: dict) -> str:
    rows: list = []
    _flatten("", doc, rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value", "unit"])
    for r in rows:
        w.writerow(["" if v is None else v for v in r])
    return buf.getvalue()


def to_text(doc: dict) -> str:
    rows: list = []
    _flatten("", {k: v for k, v in doc.items() if k not in ("decisions", "radiometric_curve")}, rows)
    width = max((len(r[0]) for r in rows), default=0)
    lines = []
    for name, value, unit in rows:
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"{name:<{width}}  {value} {unit}".rstrip())
    return "\n".join(lines) + "\n"


def render(doc: dict, fmt: str) -> str:
    if fmt == "json":
        return to_json(doc)
    if fmt == "csv":
        return to_csv(doc)
    if fmt == "text":
        return to_text(doc)
    raise ValueError(f"unknown report format {fmt!r}")
