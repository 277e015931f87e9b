"""Spatially varying exposure (SVE) HDR reconstruction for Bayer sensors.

Under quasimonochromatic light every CFA channel behaves like a neutral
density filter with its own transmittance. Calibration measures those
transmittances (as slope ratios of the per-channel response curves) and a
monotone correction map per channel for the compressive shoulder.
Reconstruction replaces saturated pixels with the estimate from the nearest
unsaturated pixels of the next less sensitive channel, then linearizes every
pixel with its source channel's map and rescales it to the most sensitive
channel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .frame_io import CHANNELS, CfaLayout, Frame, FrameStack, Roi
from .radiometry import (
    DEFAULT_LINEARITY_TOLERANCE,
    RadiometryError,
    fit_linear_region,
    plateau_start,
    response_curve,
    saturation_level,
)

MEASURED, RECONSTRUCTED, UNRECOVERABLE = 0, 1, 2
DEFAULT_SATURATION_FRACTION = 0.98
DEFAULT_KNOTS = 64
GREEN_MERGE_TOLERANCE = 0.02
KERNEL_NAME = "inverse-distance mean of unsaturated same-channel pixels in the 3x3 neighbourhood"
ROUNDING_RULE = "round half away from zero"


class CalibrationError(ValueError):
    pass


class CalibrationMismatchError(ValueError):
    pass


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def quantization_levels(q: int, ratios) -> int:
    """Distinct quantization levels of a K-exposure SVE pattern.

    ``ratios`` are the exposures e_1 >= e_2 >= ... >= e_K. Each consecutive
    pair adds ``R((q - 1) - (q - 1) * e_{k+1} / e_k)`` levels to the ``q``
    levels of a single exposure, where R rounds half away from zero.
    """
    if int(q) != q or q < 2:
        raise ValueError(f"q must be an integer >= 2, got {q}")
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise ValueError("need at least one exposure ratio")
    if any(not 0 < r <= 1 for r in ratios):
        raise ValueError("exposure ratios must lie in (0, 1]")
    if any(b > a for a, b in zip(ratios, ratios[1:])):
        raise ValueError(f"exposure ratios must be descending, got {ratios}")
    q = int(q)
    extra = sum(round_half_away((q - 1) - (q - 1) * (b / a)) for a, b in zip(ratios, ratios[1:]))
    return q + extra


@dataclass
class CorrectionMap:
    """Monotone piecewise-linear DN -> linearized DN lookup."""

    knots_in: np.ndarray
    knots_out: np.ndarray

    def __post_init__(self):
        self.knots_in = np.asarray(self.knots_in, dtype=np.float64)
        self.knots_out = np.asarray(self.knots_out, dtype=np.float64)
        if self.knots_in.shape != self.knots_out.shape or self.knots_in.size < 2:
            raise ValueError("correction map needs matching knot arrays of length >= 2")
        if np.any(np.diff(self.knots_in) <= 0) or np.any(np.diff(self.knots_out) < 0):
            raise ValueError("correction map must be increasing")

    @classmethod
    def identity(cls, top: float) -> "CorrectionMap":
        return cls(np.array([0.0, top]), np.array([0.0, top]))

    def __call__(self, dn):
        dn = np.asarray(dn, dtype=np.float64)
        x, y = self.knots_in, self.knots_out
        out = np.interp(dn, x, y)
        lo_slope = (y[1] - y[0]) / (x[1] - x[0])
        hi_slope = (y[-1] - y[-2]) / (x[-1] - x[-2])
        out = np.where(dn < x[0], y[0] + (dn - x[0]) * lo_slope, out)
        return np.where(dn > x[-1], y[-1] + (dn - x[-1]) * hi_slope, out)

    def to_dict(self) -> dict:
        return {"knots_in": self.knots_in.tolist(), "knots_out": self.knots_out.tolist()}


@dataclass
class SveCalibration:
    channel_order: list
    exposure_ratios: list
    members: dict
    correction: dict
    q: int
    saturation_dn: float
    saturation_fraction: float = DEFAULT_SATURATION_FRACTION
    wavelength_tag: str = ""
    slopes: list = field(default_factory=list)
    blo: float = 0.0

    def __post_init__(self):
        if len(self.channel_order) != len(self.exposure_ratios):
            raise ValueError("channel_order and exposure_ratios differ in length")
        if any(b > a for a, b in zip(self.exposure_ratios, self.exposure_ratios[1:])):
            raise ValueError("exposure ratios must be sorted descending")
        tags = sorted(t for g in self.channel_order for t in self.members[g])
        if tags != sorted(CHANNELS):
            raise ValueError(f"channel groups must cover R, G1, G2, B once, got {tags}")

    @property
    def step_ratios(self) -> list:
        r = self.exposure_ratios
        return [b / a for a, b in zip(r, r[1:])]

    @property
    def threshold_dn(self) -> float:
        return self.saturation_fraction * self.saturation_dn

    def quantization_levels(self) -> int:
        return quantization_levels(self.q, self.exposure_ratios)

    def group_of(self) -> dict:
        return {t: i for i, g in enumerate(self.channel_order) for t in self.members[g]}

    def signature(self) -> tuple:
        return (tuple(self.channel_order), float(self.saturation_dn), float(self.saturation_fraction))

    def to_dict(self) -> dict:
        return {
            "kind": "sve-calibration",
            "wavelength_tag": self.wavelength_tag,
            "channel_order": list(self.channel_order),
            "members": {g: list(m) for g, m in self.members.items()},
            "exposure_ratios": [float(r) for r in self.exposure_ratios],
            "step_ratios": [float(r) for r in self.step_ratios],
            "slopes": [float(s) for s in self.slopes],
            "q": int(self.q),
            "quantization_levels": self.quantization_levels(),
            "saturation_dn": float(self.saturation_dn),
            "saturation_fraction": float(self.saturation_fraction),
            "blo": float(self.blo),
            "kernel": KERNEL_NAME,
            "rounding": ROUNDING_RULE,
            "correction": {g: m.to_dict() for g, m in self.correction.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SveCalibration":
        return cls(
            channel_order=list(doc["channel_order"]),
            exposure_ratios=[float(r) for r in doc["exposure_ratios"]],
            members={g: list(m) for g, m in doc["members"].items()},
            correction={g: CorrectionMap(c["knots_in"], c["knots_out"]) for g, c in doc["correction"].items()},
            q=int(doc["q"]),
            saturation_dn=float(doc["saturation_dn"]),
            saturation_fraction=float(doc.get("saturation_fraction", DEFAULT_SATURATION_FRACTION)),
            wavelength_tag=doc.get("wavelength_tag", ""),
            slopes=[float(s) for s in doc.get("slopes", [])],
            blo=float(doc.get("blo", 0.0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SveCalibration":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_correction(curve, fit, saturation_dn: float, n_knots: int = DEFAULT_KNOTS,
                     plateau_tolerance: float = 0.0025) -> CorrectionMap:
    """Map measured DN to the DN the fitted line gives at the same exposure.

    The measured curve is inverted by linear interpolation over its
    increasing, pre-plateau samples; the map is extended proportionally
    below the first sample and with the last segment's slope above the
    last one, then sampled at ``n_knots`` evenly spaced DN levels.
    """
    pstart = plateau_start(curve, plateau_tolerance)
    stop = len(curve) if pstart is None else pstart
    e, m = curve.exposures[:stop], curve.means[:stop]
    keep = np.concatenate([[True], np.diff(np.maximum.accumulate(m)) > 0]) & (m > 0)
    e, m = e[keep], m[keep]
    if m.size < 2:
        raise CalibrationError(f"channel {curve.channel}: too few increasing samples for a correction map")
    lin = fit.slope * e + fit.intercept
    knots = np.linspace(0.0, saturation_dn, n_knots)
    out = np.interp(knots, m, lin)
    below = knots < m[0]
    out[below] = knots[below] * (lin[0] / m[0])
    above = knots > m[-1]
    top_slope = (lin[-1] - lin[-2]) / (m[-1] - m[-2])
    out[above] = lin[-1] + (knots[above] - m[-1]) * top_slope
    return CorrectionMap(knots, np.maximum.accumulate(np.maximum(out, 0.0)))


def calibrate_exposure_ratios(flat_stack: FrameStack, blo: float, roi: Roi | None = None,
                              wavelength_tag: str = "",
                              linearity_tolerance: float = DEFAULT_LINEARITY_TOLERANCE,
                              saturation_fraction: float = DEFAULT_SATURATION_FRACTION,
                              n_knots: int = DEFAULT_KNOTS,
                              green_tolerance: float = GREEN_MERGE_TOLERANCE) -> SveCalibration:
    """Exposure ratios and correction maps from a multi-exposure flat stack."""
    curves, fits = {}, {}
    for tag in CHANNELS:
        curves[tag] = response_curve(flat_stack, roi, tag, blo)
        try:
            fits[tag] = fit_linear_region(curves[tag], linearity_tolerance)
        except RadiometryError as exc:
            raise CalibrationError(f"channel {tag} never in its linear range: {exc}") from exc

    members = {"R": ["R"], "B": ["B"]}
    if abs(fits["G1"].slope / fits["G2"].slope - 1) <= green_tolerance:
        members["G"] = ["G1", "G2"]
        curves["G"] = response_curve(flat_stack, roi, "G", blo)
        try:
            fits["G"] = fit_linear_region(curves["G"], linearity_tolerance)
        except RadiometryError as exc:
            raise CalibrationError(f"green channel never in its linear range: {exc}") from exc
    else:
        members["G1"], members["G2"] = ["G1"], ["G2"]

    order = sorted(members, key=lambda g: (-fits[g].slope, g))
    base = fits[order[0]].slope
    ratios = [fits[g].slope / base for g in order]

    saturations = []
    for g in order:
        try:
            saturations.append(saturation_level(curves[g]))
        except RadiometryError:
            pass
    if saturations:
        sat = max(saturations)
    else:
        sat = float((1 << flat_stack.bit_depth) - 1 - blo)

    correction = {g: build_correction(curves[g], fits[g], sat, n_knots) for g in order}
    q = int(round(fits[order[0]].linear_end_dn))
    return SveCalibration(
        channel_order=order, exposure_ratios=ratios, members=members, correction=correction,
        q=q, saturation_dn=sat, saturation_fraction=saturation_fraction,
        wavelength_tag=wavelength_tag, slopes=[fits[g].slope for g in order], blo=float(blo),
    )


@dataclass
class SveImage:
    """Constructed (not yet linearized) SVE image on the base channel scale."""

    values: np.ndarray
    source_dn: np.ndarray
    source_group: np.ndarray
    validity: np.ndarray
    signature: tuple


@dataclass
class HdrImage:
    data: np.ndarray
    validity: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def fraction(self, flag: int) -> float:
        return float(np.mean(self.validity == flag))


_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


def _shift(a: np.ndarray, dy: int, dx: int, fill) -> np.ndarray:
    """``out[y, x] = a[y + dy, x + dx]``, ``fill`` outside the frame."""
    h, w = a.shape
    out = np.full_like(a, fill)
    ys, yd = slice(max(dy, 0), h + min(dy, 0)), slice(max(-dy, 0), h + min(-dy, 0))
    xs, xd = slice(max(dx, 0), w + min(dx, 0)), slice(max(-dx, 0), w + min(-dx, 0))
    out[yd, xd] = a[ys, xs]
    return out


def construct_sve(frame: Frame | np.ndarray, cal: SveCalibration, cfa: CfaLayout | None = None,
                  blo: float = 0.0) -> SveImage:
    """Replace saturated pixels from less sensitive neighbours.

    Pixels below the saturation threshold keep their DN (divided by their
    channel's exposure ratio). A saturated pixel takes the inverse-distance
    weighted mean of the unsaturated pixels of the most sensitive channel
    that is less sensitive than its own, within its 3x3 neighbourhood. If no
    such neighbour exists the pixel is flagged unrecoverable (value NaN).
    """
    if isinstance(frame, Frame):
        cfa = frame.cfa if cfa is None else cfa
        data = frame.data
    else:
        data = np.asarray(frame)
        if cfa is None:
            raise ValueError("cfa is required for bare arrays")
    v = data.astype(np.float64) - blo
    h, w = v.shape
    gmap = cal.group_of()
    tags = cfa.tag_map(h, w)
    group = np.vectorize(gmap.__getitem__, otypes=[np.int8])(tags)
    ratios = np.asarray(cal.exposure_ratios, dtype=np.float64)
    sat = v >= cal.threshold_dn

    source_dn = v.copy()
    source_group = group.copy()
    validity = np.where(sat, UNRECOVERABLE, MEASURED).astype(np.uint8)

    if sat.any():
        shifted = [(_shift(v, dy, dx, 0.0), _shift(group, dy, dx, -1),
                    _shift(sat, dy, dx, True), 1.0 / math.hypot(dy, dx)) for dy, dx in _OFFSETS]
        pending = sat.copy()
        for j in range(1, len(ratios)):
            target = pending & (group < j)
            if not target.any():
                continue
            num = np.zeros_like(v)
            den = np.zeros_like(v)
            for nv, ng, ns, wt in shifted:
                ok = target & (ng == j) & ~ns
                num[ok] += wt * nv[ok]
                den[ok] += wt
            hit = den > 0
            source_dn[hit] = num[hit] / den[hit]
            source_group[hit] = j
            validity[hit] = RECONSTRUCTED
            pending &= ~hit

    values = source_dn / ratios[source_group]
    values[validity == UNRECOVERABLE] = np.nan
    return SveImage(values, source_dn, source_group, validity, cal.signature())


def linearize_sve(image: SveImage, cal: SveCalibration) -> HdrImage:
    """Apply each pixel's source-channel correction and rescale to the base channel."""
    if tuple(image.signature) != cal.signature():
        raise CalibrationMismatchError(
            f"SVE image built with {image.signature}, calibration is {cal.signature()}")
    ratios = np.asarray(cal.exposure_ratios, dtype=np.float64)
    out = np.full(image.values.shape, np.nan)
    for j, g in enumerate(cal.channel_order):
        sel = (image.source_group == j) & (image.validity != UNRECOVERABLE)
        out[sel] = cal.correction[g](image.source_dn[sel]) / ratios[j]
    meta = {
        "channel_order": list(cal.channel_order),
        "exposure_ratios": [float(r) for r in cal.exposure_ratios],
        "quantization_levels": cal.quantization_levels(),
        "q": int(cal.q),
        "saturation_dn": float(cal.saturation_dn),
        "saturation_fraction": float(cal.saturation_fraction),
        "kernel": KERNEL_NAME,
        "rounding": ROUNDING_RULE,
        "measured_fraction": float(np.mean(image.validity == MEASURED)),
        "reconstructed_fraction": float(np.mean(image.validity == RECONSTRUCTED)),
        "unrecoverable_fraction": float(np.mean(image.validity == UNRECOVERABLE)),
    }
    return HdrImage(out, image.validity.copy(), meta)


def reconstruct(frame: Frame, cal: SveCalibration, blo: float = 0.0) -> HdrImage:
    return linearize_sve(construct_sve(frame, cal, blo=blo), cal)


def ramp_exposure(width: int, height: int, peak: float) -> np.ndarray:
    """Horizontal radiance ramp from 0 to ``peak`` (relative exposure units)."""
    row = np.linspace(0.0, peak, width)
    return np.tile(row, (height, 1))
