"""Dark and light-dependent noise from frame stacks.

Temporal noise is the root of the mean per-pixel variance across frames;
spatial noise is the pixel-to-pixel spread of the frame-averaged image. All
variances use the unbiased (n - 1) normalization.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .frame_io import CHANNELS, CfaLayout, FrameStack, Roi

# std of uniform rounding to integer DN
QUANTIZATION_FLOOR_DN = 1.0 / math.sqrt(12.0)


class DegenerateSignalError(ValueError):
    """Flat-field mean is not positive after dark subtraction."""


@dataclass
class PixelStats:
    a_mean: np.ndarray
    a_var: np.ndarray
    n_frames: int

    def __post_init__(self):
        if np.any(self.a_var < 0):
            raise ValueError("negative variance")

    @property
    def a_std(self) -> np.ndarray:
        return np.sqrt(self.a_var)


@dataclass
class NoiseReport:
    dark_mean: float
    dark_spatial_sigma: float
    dark_temporal_sigma: float
    dark_temporal_uncertainty: float
    dark_temporal_uncertainty_floor: float
    n_dark_frames: int
    dark_roi: Roi
    prnu_percent: dict = field(default_factory=dict)
    light_spatial_sigma: dict = field(default_factory=dict)
    light_temporal_sigma: dict = field(default_factory=dict)
    frame_means: dict = field(default_factory=dict)
    n_flat_frames: int = 0
    light_roi: Roi | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dark_roi"] = list(self.dark_roi.as_tuple())
        d["light_roi"] = list(self.light_roi.as_tuple()) if self.light_roi else None
        return d


def _check(stack: FrameStack, kind: str | None, min_frames: int = 2) -> None:
    if kind is not None and stack.kind != kind:
        raise ValueError(f"expected a {kind} stack, got kind={stack.kind!r}")
    if len(stack) < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {len(stack)}")
    if len(stack.groups) != 1:
        raise ValueError("noise statistics need a single-exposure stack")


def _crop(arr: np.ndarray, roi: Roi | None) -> np.ndarray:
    if roi is None:
        return arr
    roi.check_within(arr.shape[-1], arr.shape[-2])
    return arr[(..., *roi.slices())]


def pixel_stats(stack: FrameStack, roi: Roi | None = None) -> PixelStats:
    """Per-pixel mean and unbiased variance across the frames of ``stack``."""
    _check(stack, None)
    cube = _crop(stack.cube(), roi)
    return PixelStats(cube.mean(axis=0), cube.var(axis=0, ddof=1), len(stack))


def root_mean_variance(a_var: np.ndarray) -> float:
    """sqrt(1/(M N) * sum of per-pixel variances)."""
    return float(np.sqrt(np.mean(a_var)))


def mean_frame(stack: FrameStack, roi: Roi | None = None) -> np.ndarray:
    return _crop(stack.cube(), roi).mean(axis=0)


def dark_spatial_noise(dark_stack: FrameStack, roi: Roi | None = None) -> tuple[float, float]:
    """(mean, std) across pixels of the frame-averaged dark image."""
    _check(dark_stack, "dark")
    avg = mean_frame(dark_stack, roi)
    return float(avg.mean()), float(avg.std(ddof=1))


def dark_temporal_noise(dark_stack: FrameStack, roi: Roi | None = None) -> tuple[float, float]:
    """(temporal sigma, spread of per-pixel sigma) for a dark stack."""
    _check(dark_stack, "dark")
    ps = pixel_stats(dark_stack, roi)
    return root_mean_variance(ps.a_var), float(ps.a_std.std(ddof=1))


def channel_split(array: np.ndarray, cfa: CfaLayout) -> dict[str, np.ndarray]:
    """Quarter-resolution sub-arrays keyed R, G1, G2, B."""
    array = np.asarray(array)
    h, w = array.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"array {w}x{h} is not a whole number of 2x2 CFA tiles")
    out = {}
    for tag in CHANNELS:
        r, c = cfa.offset(tag)
        out[tag] = array[..., r::2, c::2]
    return out


def channel_merge(parts: dict[str, np.ndarray], cfa: CfaLayout) -> np.ndarray:
    """Inverse of :func:`channel_split`."""
    ref = parts[CHANNELS[0]]
    out = np.empty(ref.shape[:-2] + (2 * ref.shape[-2], 2 * ref.shape[-1]), dtype=ref.dtype)
    for tag in CHANNELS:
        r, c = cfa.offset(tag)
        out[..., r::2, c::2] = parts[tag]
    return out


def _with_merged_green(parts: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    parts = dict(parts)
    parts["G"] = np.concatenate([parts["G1"].ravel(), parts["G2"].ravel()])
    return parts


def _roi_cfa(cfa: CfaLayout, roi: Roi | None) -> CfaLayout:
    return cfa if roi is None else cfa.shifted(roi.x, roi.y)


def prnu(flat_stack: FrameStack, dark_mean_frame: np.ndarray, cfa: CfaLayout | None = None,
         roi: Roi | None = None) -> dict[str, tuple[float, float, float]]:
    """Per-channel (PRNU %, spatial sigma DN, frame mean DN).

    The flat stack is averaged, the averaged dark frame (full size) is
    subtracted, and each channel's spatial std is divided by its mean.
    ``"G"`` pools both greens.
    """
    _check(flat_stack, "flat")
    cfa = flat_stack.cfa if cfa is None else cfa
    dark_mean_frame = np.asarray(dark_mean_frame, dtype=np.float64)
    if dark_mean_frame.shape != flat_stack.shape:
        raise ValueError("dark mean frame and flat stack differ in shape")
    diff = _crop(flat_stack.cube().mean(axis=0) - dark_mean_frame, roi)
    parts = _with_merged_green(channel_split(diff, _roi_cfa(cfa, roi)))
    out = {}
    for tag, vals in parts.items():
        mean = float(vals.mean())
        if mean <= 0:
            raise DegenerateSignalError(f"channel {tag}: flat mean {mean:.3g} DN after dark subtraction")
        sigma = float(vals.std(ddof=1))
        out[tag] = (100.0 * sigma / mean, sigma, mean)
    return out


def light_temporal_noise(flat_stack: FrameStack, cfa: CfaLayout | None = None,
                         roi: Roi | None = None) -> dict[str, float]:
    """Per-channel temporal sigma of a single-exposure flat stack."""
    _check(flat_stack, "flat")
    cfa = flat_stack.cfa if cfa is None else cfa
    ps = pixel_stats(flat_stack, roi)
    parts = _with_merged_green(channel_split(ps.a_var, _roi_cfa(cfa, roi)))
    return {tag: root_mean_variance(v) for tag, v in parts.items()}


def default_dark_roi(width: int, height: int) -> Roi:
    return Roi.centered(width, height, 64)


def default_light_roi(width: int, height: int) -> Roi:
    return Roi.centered(width, height, 1024)


def noise_report(dark_stack: FrameStack, flat_stack: FrameStack | None = None,
                 dark_roi: Roi | None = None, light_roi: Roi | None = None) -> NoiseReport:
    """Run every dark and (if given) light-dependent noise estimator."""
    h, w = dark_stack.shape
    dark_roi = default_dark_roi(w, h) if dark_roi is None else dark_roi
    mean, spat = dark_spatial_noise(dark_stack, dark_roi)
    temp, unc = dark_temporal_noise(dark_stack, dark_roi)
    n = len(dark_stack)
    rep = NoiseReport(
        dark_mean=mean, dark_spatial_sigma=spat,
        dark_temporal_sigma=temp, dark_temporal_uncertainty=unc,
        # std of a sample std from n Gaussian draws
        dark_temporal_uncertainty_floor=temp / math.sqrt(2 * (n - 1)),
        n_dark_frames=n, dark_roi=dark_roi,
    )
    if spat < 2 * QUANTIZATION_FLOOR_DN:
        rep.notes.append(
            f"dark spatial sigma {spat:.3f} DN is near the single-frame quantization floor "
            f"{QUANTIZATION_FLOOR_DN:.3f} DN")
    if flat_stack is not None:
        fh, fw = flat_stack.shape
        if (fh, fw) != (h, w):
            raise ValueError("dark and flat stacks differ in shape")
        light_roi = default_light_roi(fw, fh) if light_roi is None else light_roi
        dark_avg = mean_frame(dark_stack)
        pr = prnu(flat_stack, dark_avg, roi=light_roi)
        rep.prnu_percent = {k: v[0] for k, v in pr.items()}
        rep.light_spatial_sigma = {k: v[1] for k, v in pr.items()}
        rep.frame_means = {k: v[2] for k, v in pr.items()}
        rep.light_temporal_sigma = light_temporal_noise(flat_stack, roi=light_roi)
        rep.n_flat_frames = len(flat_stack)
        rep.light_roi = light_roi
    return rep
