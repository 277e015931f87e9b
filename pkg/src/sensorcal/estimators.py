"""scikit-learn style wrappers around the characterization routines.

Hyper-parameters go in ``__init__`` (so ``get_params``/``set_params`` and
``clone`` work); everything learned from data ends in an underscore.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import noise, radiometry, sve
from .frame_io import Frame, FrameStack, subtract_blo
from .validation import check_frame, check_positive, check_roi, check_stack


class BlackLevelSubtractor(TransformerMixin, BaseEstimator):
    """Learn the black level from dark frames and remove it (clamped at 0 DN).

    Parameters
    ----------
    blo : float or None
        Fixed black level. When None it is estimated from the dark stack.
    roi : Roi, "X,Y,W,H" or None
        Region used for the estimate; whole frame by default.
    """

    def __init__(self, blo=None, roi=None):
        self.blo = blo
        self.roi = roi

    def fit(self, X, y=None):
        if self.blo is not None:
            if self.blo < 0:
                raise ValueError("blo must be >= 0")
            self.blo_ = float(self.blo)
        else:
            stack = check_stack(X, kind="dark")
            h, w = stack.shape
            self.blo_ = radiometry.estimate_blo(stack, check_roi(self.roi, w, h))
        return self

    def transform(self, X):
        check_is_fitted(self, "blo_")
        blo = round(self.blo_)
        if isinstance(X, FrameStack):
            return FrameStack([subtract_blo(f, blo) for f in X.frames], kind=X.kind,
                              exposure_normalization=X.exposure_normalization)
        if isinstance(X, Frame):
            return subtract_blo(X, blo)
        arr = np.asarray(X)
        return np.clip(arr.astype(np.int64) - blo, 0, None).astype(arr.dtype)


class RadiometricAnalyzer(BaseEstimator):
    """Response curve, linear fit, saturation and dynamic range of one channel.

    ``fit(sweep, dark=...)`` takes a multi-exposure flat stack; the black
    level comes from ``dark`` or from the ``blo`` parameter.
    """

    def __init__(self, channel="B", roi=None, blo=None, snr_threshold=radiometry.DEFAULT_SNR_THRESHOLD,
                 linearity_tolerance=radiometry.DEFAULT_LINEARITY_TOLERANCE,
                 plateau_tolerance=radiometry.DEFAULT_PLATEAU_TOLERANCE, exposure_interp="linear"):
        self.channel = channel
        self.roi = roi
        self.blo = blo
        self.snr_threshold = snr_threshold
        self.linearity_tolerance = linearity_tolerance
        self.plateau_tolerance = plateau_tolerance
        self.exposure_interp = exposure_interp

    def fit(self, X, y=None, dark=None):
        check_positive("snr_threshold", self.snr_threshold)
        check_positive("linearity_tolerance", self.linearity_tolerance)
        stack = check_stack(X, kind="flat", exposures=y)
        h, w = stack.shape
        if self.blo is not None:
            self.blo_ = float(self.blo)
        elif dark is not None:
            self.blo_ = radiometry.estimate_blo(check_stack(dark, kind="dark"))
        else:
            raise ValueError("RadiometricAnalyzer needs a dark stack or an explicit blo")
        self.roi_ = check_roi(self.roi, w, h, default_size=64)
        self.curve_ = radiometry.response_curve(stack, self.roi_, self.channel, self.blo_)
        self.linear_fit_ = radiometry.fit_linear_region(
            self.curve_, self.linearity_tolerance, self.plateau_tolerance, self.exposure_interp)
        self.saturation_dn_ = radiometry.saturation_level(self.curve_, self.plateau_tolerance)
        self.report_ = radiometry.dynamic_range(
            self.curve_, self.snr_threshold, self.linearity_tolerance,
            self.plateau_tolerance, self.exposure_interp)
        return self

    def predict(self, X):
        """Mean DN at the given exposures, interpolated along the measured curve."""
        check_is_fitted(self, "curve_")
        return np.interp(np.asarray(X, dtype=np.float64), self.curve_.exposures, self.curve_.means)


class NoiseAnalyzer(BaseEstimator):
    """Dark spatial/temporal noise, PRNU and light temporal noise.

    ``fit(dark, flat=...)``; the flat stack is optional and must hold a
    single exposure.
    """

    def __init__(self, dark_roi=None, light_roi=None):
        self.dark_roi = dark_roi
        self.light_roi = light_roi

    def fit(self, X, y=None, flat=None):
        dark = check_stack(X, kind="dark", min_frames=2)
        h, w = dark.shape
        flat_stack = None
        if flat is not None:
            flat_stack = check_stack(flat, kind="flat", min_frames=2, single_exposure=True)
        self.report_ = noise.noise_report(
            dark, flat_stack,
            dark_roi=check_roi(self.dark_roi, w, h, default_size=64),
            light_roi=check_roi(self.light_roi, w, h, default_size=1024),
        )
        return self


class SveReconstructor(TransformerMixin, BaseEstimator):
    """Calibrate exposure ratios on a flat sweep, then reconstruct HDR frames.

    ``transform`` returns an :class:`~sensorcal.sve.HdrImage` per input
    frame (a single image for a single frame).
    """

    def __init__(self, blo=None, roi=None, saturation_fraction=sve.DEFAULT_SATURATION_FRACTION,
                 linearity_tolerance=radiometry.DEFAULT_LINEARITY_TOLERANCE, n_knots=sve.DEFAULT_KNOTS,
                 wavelength_tag=""):
        self.blo = blo
        self.roi = roi
        self.saturation_fraction = saturation_fraction
        self.linearity_tolerance = linearity_tolerance
        self.n_knots = n_knots
        self.wavelength_tag = wavelength_tag

    def fit(self, X, y=None, dark=None):
        if not 0 < self.saturation_fraction <= 1:
            raise ValueError("saturation_fraction must lie in (0, 1]")
        stack = check_stack(X, kind="flat", exposures=y)
        h, w = stack.shape
        if self.blo is not None:
            self.blo_ = float(self.blo)
        elif dark is not None:
            self.blo_ = radiometry.estimate_blo(check_stack(dark, kind="dark"))
        else:
            raise ValueError("SveReconstructor needs a dark stack or an explicit blo")
        self.calibration_ = sve.calibrate_exposure_ratios(
            stack, self.blo_, roi=check_roi(self.roi, w, h),
            wavelength_tag=self.wavelength_tag, linearity_tolerance=self.linearity_tolerance,
            saturation_fraction=self.saturation_fraction, n_knots=self.n_knots,
        )
        self.quantization_levels_ = self.calibration_.quantization_levels()
        return self

    @classmethod
    def from_calibration(cls, calibration: sve.SveCalibration) -> "SveReconstructor":
        est = cls(blo=calibration.blo, saturation_fraction=calibration.saturation_fraction,
                  wavelength_tag=calibration.wavelength_tag)
        est.blo_ = calibration.blo
        est.calibration_ = calibration
        est.quantization_levels_ = calibration.quantization_levels()
        return est

    def transform(self, X):
        check_is_fitted(self, "calibration_")
        if isinstance(X, FrameStack):
            return [self._one(f) for f in X.frames]
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return [self._one(f) for f in X]
        return self._one(X)

    def _one(self, frame):
        frame = check_frame(frame)
        return sve.reconstruct(frame, self.calibration_, blo=self.blo_)
