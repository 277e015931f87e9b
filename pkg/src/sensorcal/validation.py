"""Input coercion shared by the estimators.

Estimators accept :class:`FrameStack` / :class:`Frame` objects or plain
arrays, so they can be fed from numpy pipelines as well as from manifests.
"""

from __future__ import annotations

import numpy as np

from .frame_io import CfaLayout, Frame, FrameStack, Roi


def as_cfa(cfa) -> CfaLayout:
    if cfa is None:
        return CfaLayout()
    if isinstance(cfa, CfaLayout):
        return cfa
    return CfaLayout.from_string(str(cfa))


def check_frame(X, cfa=None, bit_depth: int = 16) -> Frame:
    """Coerce ``X`` (Frame or 2-D array) to a Frame."""
    if isinstance(X, Frame):
        return X
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D frame, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.rint(arr)):
            raise ValueError("frame data must be integer DN")
    return Frame(arr.astype(np.int64), cfa=as_cfa(cfa), bit_depth=bit_depth)


def check_stack(X, kind: str | None = None, min_frames: int = 1, exposures=None,
                cfa=None, single_exposure: bool = False) -> FrameStack:
    """Coerce ``X`` to a FrameStack and check its kind and size.

    Arrays of shape (n, h, w) or lists of frames/arrays are accepted. For
    array input ``exposures`` gives one exposure per frame (or a scalar);
    flat stacks default to exposure 1.
    """
    if isinstance(X, FrameStack):
        stack = X
    else:
        if isinstance(X, np.ndarray):
            items = list(X) if X.ndim == 3 else [X]
        else:
            items = list(X)
        frames = [check_frame(f, cfa) for f in items]
        target = kind or "flat"
        if exposures is None:
            exposures = None if target == "dark" else 1.0
        if np.ndim(exposures) == 0:
            exposures = [exposures] * len(frames)
        if len(exposures) != len(frames):
            raise ValueError("need one exposure per frame")
        frames = [Frame(f.data, f.cfa, None if e is None else float(e), f.iso, f.bit_depth)
                  for f, e in zip(frames, exposures)]
        stack = FrameStack(frames, kind=target)
    if kind is not None and stack.kind != kind:
        raise ValueError(f"expected a {kind} stack, got kind={stack.kind!r}")
    if len(stack) < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {len(stack)}")
    if single_exposure and len(stack.groups) != 1:
        raise ValueError("expected a single-exposure stack")
    return stack


def check_roi(roi, width: int, height: int, default_size: int | None = None) -> Roi | None:
    """Parse and bounds-check ``roi``; fall back to a centered square of ``default_size``."""
    if roi is None:
        return None if default_size is None else Roi.centered(width, height, default_size)
    if isinstance(roi, str):
        roi = Roi.parse(roi)
    elif not isinstance(roi, Roi):
        roi = Roi(*roi)
    roi.check_within(width, height)
    return roi


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
