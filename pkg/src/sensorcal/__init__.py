"""Camera sensor characterization and spatially varying exposure HDR."""

__version__ = "0.1.0"

from .estimators import BlackLevelSubtractor, NoiseAnalyzer, RadiometricAnalyzer, SveReconstructor
from .frame_io import CfaLayout, Frame, FrameStack, Roi, load_frame, load_stack, subtract_blo, write_frame, write_stack
from .noise import noise_report
from .radiometry import dynamic_range, fit_linear_region, response_curve
from .sve import SveCalibration, quantization_levels
from .synthetic import SensorModel, preset, simulate_frame, simulate_stack

__all__ = [
    "BlackLevelSubtractor",
    "CfaLayout",
    "Frame",
    "FrameStack",
    "NoiseAnalyzer",
    "RadiometricAnalyzer",
    "Roi",
    "SensorModel",
    "SveCalibration",
    "SveReconstructor",
    "dynamic_range",
    "fit_linear_region",
    "load_frame",
    "load_stack",
    "noise_report",
    "preset",
    "quantization_levels",
    "response_curve",
    "simulate_frame",
    "simulate_stack",
    "subtract_blo",
    "write_frame",
    "write_stack",
]
