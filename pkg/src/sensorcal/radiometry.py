"""Radiometric response, saturation, noise floor and dynamic range."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .frame_io import FrameStack, Roi

DEFAULT_SNR_THRESHOLD = 2.0
DEFAULT_LINEARITY_TOLERANCE = 0.01
DEFAULT_PLATEAU_TOLERANCE = 0.0025


class RadiometryError(ValueError):
    pass


class NotSaturatedError(RadiometryError):
    """No saturation plateau in the curve; extend the exposure range."""


class BelowThresholdError(RadiometryError):
    """The SNR threshold is never reached."""


@dataclass
class RadiometricCurve:
    channel: str
    exposures: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    n_pixels: np.ndarray
    blo_removed: bool = True

    def __post_init__(self):
        self.exposures = np.asarray(self.exposures, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        self.n_pixels = np.asarray(self.n_pixels, dtype=np.int64)
        n = len(self.exposures)
        if not (len(self.means) == len(self.stds) == len(self.n_pixels) == n):
            raise ValueError("curve arrays must have equal length")
        if n > 1 and np.any(np.diff(self.exposures) <= 0):
            raise ValueError("curve exposures must be strictly increasing")
        if np.any(self.n_pixels <= 0):
            raise ValueError("every sample needs n_pixels > 0")

    def __len__(self):
        return len(self.exposures)

    @property
    def snr(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            snr = np.where(self.stds > 0, self.means / self.stds, np.inf)
        return np.where(self.means > 0, snr, 0.0)

    def rescaled(self, factor: float) -> "RadiometricCurve":
        return RadiometricCurve(self.channel, self.exposures * factor, self.means,
                                self.stds, self.n_pixels, self.blo_removed)

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "blo_removed": self.blo_removed,
            "samples": [
                {"exposure": float(e), "mean_dn": float(m), "std_dn": float(s), "n_pixels": int(n)}
                for e, m, s, n in zip(self.exposures, self.means, self.stds, self.n_pixels)
            ],
        }


@dataclass
class LinearFit:
    slope: float
    intercept: float
    linear_end_dn: float
    linear_end_exposure: float
    residual_rms: float
    fit_window: tuple[int, int]
    method: str = "ordinary least squares"

    def predict(self, exposure):
        return self.slope * np.asarray(exposure, dtype=np.float64) + self.intercept

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        return d


@dataclass
class DynamicRangeReport:
    min_signal_dn: float
    min_signal_exposure: float
    linear_end_dn: float
    linear_end_exposure: float
    max_signal_dn: float
    max_signal_exposure: float
    saturation_dn: float
    linear_dr_db: float
    full_dr_db: float
    snr_threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def db(ratio: float) -> float:
    """Amplitude ratio in decibels."""
    return 20.0 * math.log10(ratio)


def _lerp(a: float, b: float, f: float) -> float:
    return a + (b - a) * f


def _interp_exposure(e0: float, e1: float, f: float, mode: str) -> float:
    if mode == "log":
        return math.exp(_lerp(math.log(e0), math.log(e1), f))
    return _lerp(e0, e1, f)


def estimate_blo(dark_stack: FrameStack, roi: Roi | None = None) -> float:
    """Mean DN of the pixel-averaged dark frame."""
    if len(dark_stack) == 0:
        raise ValueError("dark stack is empty")
    if dark_stack.kind != "dark":
        raise ValueError(f"expected a dark stack, got kind={dark_stack.kind!r}")
    avg = dark_stack.cube().mean(axis=0)
    if roi is not None:
        roi.check_within(avg.shape[1], avg.shape[0])
        avg = avg[roi.slices()]
    return float(avg.mean())


def channel_mask(stack_or_shape, cfa, channel: str, roi: Roi | None = None) -> np.ndarray:
    """Boolean mask selecting ``channel`` pixels (``"G"`` = both greens) inside ``roi``."""
    h, w = stack_or_shape
    tags = cfa.tag_map(h, w)
    if channel == "G":
        mask = (tags == "G1") | (tags == "G2")
    else:
        if channel not in {t for row in cfa.pattern for t in row}:
            raise ValueError(f"channel {channel!r} absent from CFA {cfa.name}")
        mask = tags == channel
    if roi is not None:
        roi.check_within(w, h)
        inside = np.zeros((h, w), dtype=bool)
        inside[roi.slices()] = True
        mask &= inside
    return mask


def response_curve(stack: FrameStack, roi: Roi | None, channel: str, blo: float) -> RadiometricCurve:
    """Per-exposure mean and spatial std of ``channel`` pixels in ``roi``.

    Frames sharing an exposure are averaged pixel-wise first; the black
    level is subtracted in floating point (no clamping).
    """
    if stack.kind != "flat":
        raise ValueError(f"response curves need a flat stack, got kind={stack.kind!r}")
    if len(stack) == 0:
        raise ValueError("flat stack is empty")
    mask = channel_mask(stack.shape, stack.cfa, channel, roi)
    n = int(mask.sum())
    if n < 2:
        raise ValueError("ROI holds fewer than two pixels of the channel")
    exps, means, stds = [], [], []
    cube = stack.cube()
    for exposure, idx in stack.groups.items():
        avg = cube[idx].mean(axis=0)
        vals = avg[mask] - blo
        exps.append(exposure)
        means.append(vals.mean())
        stds.append(vals.std(ddof=1))
    return RadiometricCurve(channel, exps, means, stds, [n] * len(exps), blo_removed=blo != 0)


def plateau_start(curve: RadiometricCurve, tolerance: float = DEFAULT_PLATEAU_TOLERANCE) -> int | None:
    """Index where the saturated tail begins, or None without a plateau.

    The plateau is the longest tail whose means sit within ``tolerance``
    (relative) of the final mean; it must hold at least two samples.
    """
    m = curve.means
    if len(m) < 2 or m[-1] <= 0:
        return None
    ref = m[-1]
    start = len(m) - 1
    while start > 0 and abs(m[start - 1] - ref) <= tolerance * abs(ref):
        start -= 1
    return start if len(m) - start >= 2 else None


def saturation_level(curve: RadiometricCurve, tolerance: float = DEFAULT_PLATEAU_TOLERANCE) -> float:
    start = plateau_start(curve, tolerance)
    if start is None:
        raise NotSaturatedError(
            f"channel {curve.channel}: no saturation plateau; extend the exposure range")
    return float(curve.means[start:].mean())


def min_detectable_signal(curve: RadiometricCurve, snr_threshold: float = DEFAULT_SNR_THRESHOLD,
                          exposure_interp: str = "linear") -> tuple[float, float]:
    """Smallest signal with mean/std >= ``snr_threshold`` and its exposure.

    The crossing is interpolated linearly in SNR between the bracketing
    samples; a noiseless sample (std 0) counts as infinite SNR.
    """
    if snr_threshold <= 0:
        raise ValueError("snr_threshold must be positive")
    snr = curve.snr
    hits = np.flatnonzero(snr >= snr_threshold)
    if hits.size == 0:
        raise BelowThresholdError(
            f"channel {curve.channel}: SNR never reaches {snr_threshold} (max {snr.max():.3g})")
    i = int(hits[0])
    if i == 0 or not np.isfinite(snr[i]):
        return float(curve.means[i]), float(curve.exposures[i])
    f = (snr_threshold - snr[i - 1]) / (snr[i] - snr[i - 1])
    dn = _lerp(curve.means[i - 1], curve.means[i], f)
    exposure = _interp_exposure(curve.exposures[i - 1], curve.exposures[i], f, exposure_interp)
    return float(dn), float(exposure)


def fit_linear_region(curve: RadiometricCurve, linearity_tolerance: float = DEFAULT_LINEARITY_TOLERANCE,
                      plateau_tolerance: float = DEFAULT_PLATEAU_TOLERANCE,
                      exposure_interp: str = "linear") -> LinearFit:
    """Least-squares line over the largest low-exposure window that stays linear.

    A sample is in tolerance when ``|mean - fit| <= tol * fit + 3 * sem``;
    the standard error term keeps noise-floor samples from ending the window.
    The window grows while the next sample agrees with the line fitted to
    the current window. The linear end is interpolated between the last
    in-window sample and the first sample past it, at the point where the
    relative deviation reaches ``tol``.
    """
    if linearity_tolerance <= 0:
        raise ValueError("linearity_tolerance must be positive")
    e, m = curve.exposures, curve.means
    sem = curve.stds / np.sqrt(curve.n_pixels)
    pstart = plateau_start(curve, plateau_tolerance)
    usable = len(e) if pstart is None else pstart
    if usable < 3:
        raise RadiometryError(f"channel {curve.channel}: need >= 3 samples below saturation, have {usable}")

    def fit(k):
        slope, intercept = np.polyfit(e[:k], m[:k], 1)
        return float(slope), float(intercept)

    def ok(idx, slope, intercept):
        pred = slope * e[idx] + intercept
        return np.abs(m[idx] - pred) <= linearity_tolerance * np.abs(pred) + 3 * sem[idx]

    k = 3
    slope, intercept = fit(k)
    while k < usable and ok(k, slope, intercept):
        k += 1
        slope, intercept = fit(k)
    if slope <= 0:
        raise RadiometryError(f"channel {curve.channel}: non-positive slope in the linear window")
    resid = m[:k] - (slope * e[:k] + intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))

    last = k - 1
    if k >= len(e):
        end_dn, end_exp = float(m[last]), float(e[last])
    else:
        def dev(i):
            pred = slope * e[i] + intercept
            return abs(pred - m[i]) / abs(pred)

        da, db_ = dev(last), dev(k)
        f = 0.0 if db_ <= da else min(max((linearity_tolerance - da) / (db_ - da), 0.0), 1.0)
        end_dn = float(_lerp(m[last], m[k], f))
        end_exp = float(_interp_exposure(e[last], e[k], f, exposure_interp))
    return LinearFit(slope, intercept, end_dn, end_exp, rms, (0, k))


def dynamic_range(curve: RadiometricCurve, snr_threshold: float = DEFAULT_SNR_THRESHOLD,
                  linearity_tolerance: float = DEFAULT_LINEARITY_TOLERANCE,
                  plateau_tolerance: float = DEFAULT_PLATEAU_TOLERANCE,
                  exposure_interp: str = "linear") -> DynamicRangeReport:
    """Linear and full dynamic range (dB) from one response curve.

    The full-range endpoint is the last sample before the saturation
    plateau, or the linear end if that lies further out.
    """
    min_dn, min_exp = min_detectable_signal(curve, snr_threshold, exposure_interp)
    lin = fit_linear_region(curve, linearity_tolerance, plateau_tolerance, exposure_interp)
    sat = saturation_level(curve, plateau_tolerance)
    pstart = plateau_start(curve, plateau_tolerance)
    top = max(pstart - 1, 0)
    max_dn, max_exp = float(curve.means[top]), float(curve.exposures[top])
    if max_exp < lin.linear_end_exposure:
        max_dn, max_exp = lin.linear_end_dn, lin.linear_end_exposure
    if min_exp <= 0:
        raise RadiometryError("minimal detectable signal at non-positive exposure")
    return DynamicRangeReport(
        min_signal_dn=min_dn, min_signal_exposure=min_exp,
        linear_end_dn=lin.linear_end_dn, linear_end_exposure=lin.linear_end_exposure,
        max_signal_dn=max_dn, max_signal_exposure=max_exp, saturation_dn=sat,
        linear_dr_db=db(lin.linear_end_exposure / min_exp),
        full_dr_db=db(max_exp / min_exp),
        snr_threshold=snr_threshold,
    )
