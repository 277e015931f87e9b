"""Small builders shared by the test modules."""

import numpy as np

from sensorcal.frame_io import CfaLayout, Frame, FrameStack


def make_stack(cube, kind="dark", exposure=None, cfa="RGGB"):
    layout = CfaLayout.from_string(cfa)
    return FrameStack([Frame(np.asarray(f, dtype=np.uint16), layout, exposure) for f in cube], kind=kind)
