"""Parametric synthetic sensor used as ground truth for every estimator.

All DN levels (``blo``, ``full_linear_dn``, ``saturation``) are raw output
levels, i.e. they include the black level. The light-induced signal of a pixel
with channel ``c`` is ``gain * exposure * transmittance[c] * (1 + prnu)``; it
is linear up to ``full_linear_dn - blo`` and then compressed by the configured
shoulder until the raw output clips at ``saturation``.

Random streams use numpy's PCG64 seeded through ``SeedSequence``: the fixed
pattern maps (DSNU, PRNU) depend only on ``rng_seed``; temporal noise depends
on ``(rng_seed, seed_offset)``. DSNU and temporal noise are added to the
signal ahead of the response curve, so the saturated plateau is noise free.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .frame_io import CHANNELS, CfaLayout, Frame, FrameStack

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence(rng_seed, spawn_key)"
NONLINEARITIES = ("quadratic", "gamma", "none")


@dataclass(frozen=True)
class SensorModel:
    width: int = 256
    height: int = 256
    cfa: str = "RGGB"
    blo: float = 256.0
    saturation: float = 3982.0
    full_linear_dn: float = 3006.0
    gain: float = 3097.0
    channel_transmittance: dict = field(
        default_factory=lambda: {"R": 1.0, "G1": 1.0, "G2": 1.0, "B": 1.0})
    read_noise_sigma: float = 0.0
    dark_temporal_sigma: float = 0.0
    shot_coefficient: float = 0.0
    dsnu_sigma: float = 0.0
    prnu_sigma_fraction: float = 0.0
    nonlinearity: str = "quadratic"
    gamma: float = 0.45
    bit_depth: int = 12
    iso: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        ceiling = (1 << self.bit_depth) - 1
        if not 0 <= self.blo < self.full_linear_dn <= self.saturation <= ceiling:
            raise ValueError(
                "need 0 <= blo < full_linear_dn <= saturation <= bit-depth ceiling, got "
                f"{self.blo}, {self.full_linear_dn}, {self.saturation}, {ceiling}")
        sigmas = (self.read_noise_sigma, self.dark_temporal_sigma, self.shot_coefficient,
                  self.dsnu_sigma, self.prnu_sigma_fraction)
        if min(sigmas) < 0:
            raise ValueError("noise parameters must be >= 0")
        if sorted(self.channel_transmittance) != sorted(CHANNELS):
            raise ValueError(f"transmittance needs keys {CHANNELS}")
        if not all(0 < t <= 1 for t in self.channel_transmittance.values()):
            raise ValueError("transmittances must lie in (0, 1]")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.width % 2 or self.height % 2:
            raise ValueError("frame dimensions must be even")
        CfaLayout.from_string(self.cfa)

    @property
    def cfa_layout(self) -> CfaLayout:
        return CfaLayout.from_string(self.cfa)

    @property
    def linear_signal_end(self) -> float:
        """Signal (above black level) where the response leaves the line."""
        return self.full_linear_dn - self.blo

    @property
    def signal_saturation(self) -> float:
        return self.saturation - self.blo

    def response(self, signal):
        """Noise-free signal-domain response (DN above black level)."""
        s = np.asarray(signal, dtype=np.float64)
        lin, top = self.linear_signal_end, self.signal_saturation
        x = s - lin
        if self.nonlinearity == "none" or top <= lin:
            shoulder = x
        elif self.nonlinearity == "quadratic":
            # slope eases from 1 to 0 over 2*headroom and lands on saturation
            head = top - lin
            xc = np.minimum(x, 2 * head)
            shoulder = xc - xc * xc / (4 * head)
        else:
            shoulder = lin * ((np.maximum(s, lin) / lin) ** self.gamma) - lin
        out = np.where(x > 0, lin + shoulder, s)
        return np.minimum(out, top)

    def temporal_variance(self, signal):
        s = np.maximum(np.asarray(signal, dtype=np.float64), 0.0)
        return self.read_noise_sigma ** 2 + self.dark_temporal_sigma ** 2 + self.shot_coefficient * s

    def transmittance_map(self) -> np.ndarray:
        tags = self.cfa_layout.tag_map(self.height, self.width)
        lut = self.channel_transmittance
        return np.vectorize(lut.__getitem__, otypes=[float])(tags)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SensorModel":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sensor model fields: {sorted(unknown)}")
        return cls(**doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps({"model": self.to_dict()}, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SensorModel":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(doc.get("model", doc))


def _fixed_pattern(model: SensorModel) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(model.rng_seed, spawn_key=(0,))))
    shape = (model.height, model.width)
    dsnu = rng.standard_normal(shape) * model.dsnu_sigma
    prnu = rng.standard_normal(shape) * model.prnu_sigma_fraction
    return dsnu, prnu


def expected_signal(model: SensorModel, exposure) -> np.ndarray:
    """Noise-free per-pixel signal before the response curve (PRNU included, DSNU excluded)."""
    _, prnu = _fixed_pattern(model)
    return model.gain * np.asarray(exposure, dtype=np.float64) * model.transmittance_map() * (1 + prnu)


def simulate_frame(model: SensorModel, exposure=0.0, seed_offset: int = 0) -> Frame:
    """Simulate one frame.

    ``exposure`` is a scalar relative exposure (0 gives a dark frame) or a
    per-pixel array of shape (height, width), e.g. a radiance map.
    """
    exp = np.asarray(exposure, dtype=np.float64)
    if np.any(exp < 0):
        raise ValueError("exposure must be >= 0")
    if exp.ndim not in (0, 2) or (exp.ndim == 2 and exp.shape != (model.height, model.width)):
        raise ValueError("exposure must be scalar or match the frame shape")
    dsnu, prnu = _fixed_pattern(model)
    signal = model.gain * exp * model.transmittance_map() * (1 + prnu)
    signal = np.maximum(signal, 0.0)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(model.rng_seed, spawn_key=(1, int(seed_offset)))))
    sigma = np.sqrt(model.temporal_variance(model.response(signal)))
    noise = rng.standard_normal(signal.shape) * sigma
    # noise passes through the response so a saturated pixel reads exactly saturation
    dn = np.clip(np.rint(model.blo + model.response(signal + dsnu + noise)), 0, model.saturation)
    scalar = float(exp) if exp.ndim == 0 else None
    return Frame(dn.astype(np.uint16), cfa=model.cfa_layout,
                 exposure=(scalar if scalar else None), iso=model.iso, bit_depth=model.bit_depth)


def simulate_stack(model: SensorModel, exposures, frames_per_exposure: int = 1,
                   kind: str = "flat", seed_base: int = 0) -> FrameStack:
    if frames_per_exposure < 1:
        raise ValueError("frames_per_exposure must be >= 1")
    frames = []
    k = seed_base
    for e in exposures:
        for _ in range(frames_per_exposure):
            frames.append(simulate_frame(model, e, seed_offset=k))
            k += 1
    return FrameStack(frames, kind=kind)


def saturation_exposure(model: SensorModel) -> float:
    """Smallest exposure at which the most sensitive channel reaches saturation."""
    top = model.signal_saturation
    lo, hi = 0.0, 1.0
    while model.response(hi) < top:
        lo, hi = hi, hi * 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if model.response(mid) < top:
            lo = mid
        else:
            hi = mid
    return hi / (model.gain * max(model.channel_transmittance.values()))


def _bisect(f, lo: float, hi: float, iters: int = 200) -> float:
    # f(lo) is False, f(hi) is True
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def analytic_dynamic_range(model: SensorModel, channel: str = "B", frames_per_exposure: int = 1,
                           snr_threshold: float = 2.0, linearity_tolerance: float = 0.01) -> dict:
    """Model-predicted dynamic range for the frame-averaged ROI measurement.

    The noise of an ROI of ``frames_per_exposure``-averaged pixels is the
    fixed pattern (DSNU, PRNU) plus temporal and quantization variance
    divided by the number of frames. The linear end is where the noise-free
    response falls ``linearity_tolerance`` below the line.
    """
    n = int(frames_per_exposure)
    if n < 1:
        raise ValueError("frames_per_exposure must be >= 1")
    scale = model.gain * (model.channel_transmittance["G1"] if channel == "G"
                          else model.channel_transmittance[channel])

    def snr(s):
        var = (model.dsnu_sigma ** 2 + (model.prnu_sigma_fraction * s) ** 2
               + (model.temporal_variance(s) + 1.0 / 12.0) / n)
        return s / np.sqrt(var)

    s_min = _bisect(lambda s: snr(s) >= snr_threshold, 0.0, model.signal_saturation)
    s_lin = _bisect(lambda s: model.response(s) <= (1 - linearity_tolerance) * s,
                    model.linear_signal_end, model.signal_saturation)
    e_min, e_lin = s_min / scale, s_lin / scale
    return {
        "min_signal_dn": s_min, "min_signal_exposure": e_min,
        "linear_end_dn": float(model.response(s_lin)), "linear_end_exposure": e_lin,
        "linear_dr_db": float(20 * np.log10(e_lin / e_min)),
    }


def default_sweep(model: SensorModel, n: int = 20) -> np.ndarray:
    """Exposure sweep from deep in the noise floor to 30% past saturation."""
    e_sat = saturation_exposure(model)
    return exposure_sweep(n, low=3e-4 * e_sat, knee=e_sat / 3, high=1.3 * e_sat)


def default_flat_exposure(model: SensorModel) -> float:
    """Flat-field level for noise analysis: 70% of saturation, kept inside the linear range."""
    level = min(0.7 * model.signal_saturation, 0.95 * model.linear_signal_end)
    return level / (model.gain * max(model.channel_transmittance.values()))


def exposure_sweep(n: int = 20, low: float = 5e-4, knee: float = 0.5, high: float = 2.0,
                   n_linear: int | None = None) -> np.ndarray:
    """Geometric toe from ``low`` to ``knee`` plus an evenly spaced body up to ``high``.

    The evenly spaced part resolves the shoulder; the toe resolves the
    noise floor.
    """
    n_linear = n // 2 if n_linear is None else n_linear
    n_geo = n - n_linear
    if n_geo < 1 or n_linear < 1:
        raise ValueError("need at least one geometric and one linear sample")
    toe = np.geomspace(low, knee, n_geo)
    step = (high - knee) / n_linear
    body = knee + step * np.arange(1, n_linear + 1)
    return np.concatenate([toe, body])


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------
def _canon400d() -> SensorModel:
    # dark temporal 1.6 DN measured (quantization adds 1/12 DN^2);
    # dark spatial 0.4 DN measured on a 64-frame average (temporal leak 1.6/8);
    # light temporal 14 DN and PRNU 12 DN at a 2600 DN flat field.
    dark_sigma = float(np.sqrt(1.6 ** 2 - 1 / 12))
    dsnu = float(np.sqrt(0.4 ** 2 - 1.6 ** 2 / 64))
    shot = (14.0 ** 2 - 1.6 ** 2) / 2600.0
    leak = 14.0 ** 2 / 64 + 1.6 ** 2 / 64
    prnu = float(np.sqrt(12.0 ** 2 - leak) / 2600.0)
    return SensorModel(
        width=256, height=256, cfa="RGGB", blo=256.0,
        saturation=256.0 + 3726.0, full_linear_dn=256.0 + 2750.0, gain=3097.0,
        dark_temporal_sigma=dark_sigma, shot_coefficient=shot,
        dsnu_sigma=dsnu, prnu_sigma_fraction=prnu,
        nonlinearity="quadratic", bit_depth=12, iso=100, rng_seed=400,
    )


def _canon_converter() -> SensorModel:
    # 16-bit converter output: black level removed, gamma-like curve above the
    # linear end, ~200 DN noise floor.
    return SensorModel(
        width=256, height=256, cfa="RGGB", blo=0.0,
        saturation=65535.0, full_linear_dn=24260.0, gain=489080.0,
        dark_temporal_sigma=195.0, shot_coefficient=1.0,
        dsnu_sigma=20.0, prnu_sigma_fraction=0.004,
        nonlinearity="gamma", gamma=0.45, bit_depth=16, iso=100, rng_seed=401,
    )


def _sve633() -> SensorModel:
    # quasimonochromatic 633 nm light: R strongest, G 0.2, B 0.09
    return replace(
        _canon400d(), rng_seed=633,
        channel_transmittance={"R": 1.0, "G1": 0.2, "G2": 0.2, "B": 0.09},
    )


def _noiseless() -> SensorModel:
    return SensorModel(width=64, height=64, blo=256.0, saturation=3982.0,
                       full_linear_dn=3006.0, gain=3097.0, rng_seed=0)


PRESETS = {
    "canon400d-approx": _canon400d,
    "canon-converter-approx": _canon_converter,
    "sve-633nm": _sve633,
    "noiseless": _noiseless,
}


def preset(name: str) -> SensorModel:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
