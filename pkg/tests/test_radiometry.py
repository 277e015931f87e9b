import numpy as np
import pytest

from sensorcal import radiometry, synthetic
from sensorcal.frame_io import CfaLayout, Frame, FrameStack, Roi
from sensorcal.radiometry import (
    BelowThresholdError,
    NotSaturatedError,
    RadiometricCurve,
    RadiometryError,
)

from helpers import make_stack


def curve(e, m, s=None, n=100):
    e = np.asarray(e, dtype=float)
    s = np.ones_like(e) if s is None else s
    return RadiometricCurve("B", e, m, s, np.full(len(e), n))


class TestCurve:
    def test_snr_edge_cases(self):
        c = curve([1, 2, 3], [0.0, 5.0, 8.0], np.array([1.0, 0.0, 2.0]))
        assert c.snr.tolist() == [0.0, np.inf, 4.0]

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            curve([2, 1], [1, 2])

    def test_rescaled(self):
        c = curve([1, 2], [3, 4]).rescaled(10)
        assert c.exposures.tolist() == [10, 20] and c.means.tolist() == [3, 4]


def test_db():
    assert radiometry.db(10) == pytest.approx(20)
    assert radiometry.db(1000) == pytest.approx(60)


def test_estimate_blo_roi():
    cube = np.array([[[250, 258], [256, 256]], [[252, 258], [256, 256]]])
    st = make_stack(cube)
    assert radiometry.estimate_blo(st) == pytest.approx(255.25)
    assert radiometry.estimate_blo(st, Roi(1, 0, 1, 2)) == pytest.approx(257.0)


def test_channel_mask_roi():
    m = radiometry.channel_mask((4, 4), CfaLayout(), "B", Roi(0, 0, 2, 4))
    assert m.sum() == 2 and m[1, 1] and m[3, 1]
    g = radiometry.channel_mask((2, 2), CfaLayout(), "G")
    assert g.tolist() == [[False, True], [True, False]]
    with pytest.raises(ValueError):
        radiometry.channel_mask((2, 2), CfaLayout(), "Y")


def test_response_curve_averages_then_subtracts():
    frames = np.array([np.full((4, 4), v) for v in (300, 302, 500, 510)])
    st = FrameStack([Frame(f, exposure=e) for f, e in zip(frames, (1.0, 1.0, 2.0, 2.0))], kind="flat")
    c = radiometry.response_curve(st, None, "R", 256)
    assert c.exposures.tolist() == [1.0, 2.0]
    assert c.means.tolist() == [45.0, 249.0]
    assert c.stds.tolist() == [0.0, 0.0]
    assert c.n_pixels.tolist() == [4, 4]


class TestPlateau:
    def test_detects_tail(self):
        c = curve([1, 2, 3, 4, 5], [100, 200, 299.5, 300, 300])
        assert radiometry.plateau_start(c) == 2
        assert radiometry.saturation_level(c) == pytest.approx(299.8333, abs=1e-3)

    def test_single_flat_sample_is_not_a_plateau(self):
        c = curve([1, 2, 3], [100, 200, 300])
        assert radiometry.plateau_start(c) is None
        with pytest.raises(NotSaturatedError):
            radiometry.saturation_level(c)


class TestMinSignal:
    def test_interpolates_in_snr(self):
        # SNR 1 at e=1, 3 at e=2 -> SNR 2 halfway
        c = curve([1, 2, 3], [1.0, 6.0, 20.0], np.array([1.0, 2.0, 2.0]))
        dn, e = radiometry.min_detectable_signal(c, 2.0)
        assert (dn, e) == pytest.approx((3.5, 1.5))
        dn, e = radiometry.min_detectable_signal(c, 2.0, exposure_interp="log")
        assert e == pytest.approx(np.sqrt(2))

    def test_first_sample_already_above(self):
        c = curve([1, 2], [10.0, 20.0])
        assert radiometry.min_detectable_signal(c, 2.0) == (10.0, 1.0)

    def test_never_reached(self):
        with pytest.raises(BelowThresholdError):
            radiometry.min_detectable_signal(curve([1, 2], [0.5, 1.0]), 2.0)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            radiometry.min_detectable_signal(curve([1, 2], [5, 6]), 0)


class TestLinearFit:
    def test_exact_line_with_shoulder(self):
        e = np.arange(1, 11, dtype=float)
        m = 100 * e
        m[7:] = [780, 820, 840]  # 2.5%, 8.9%, 16% below the line
        c = curve(e, m, np.zeros(10))
        fit = radiometry.fit_linear_region(c)
        assert fit.slope == pytest.approx(100) and fit.intercept == pytest.approx(0, abs=1e-9)
        assert fit.fit_window == (0, 7)
        # deviation 0 at e=7, 2.5% at e=8 -> 1% reached 40% of the way
        assert fit.linear_end_exposure == pytest.approx(7.4)
        assert fit.linear_end_dn == pytest.approx(700 + 0.4 * 80)
        assert fit.predict(2.0) == pytest.approx(200)

    def test_runs_to_last_sample_when_linear(self):
        c = curve([1, 2, 3, 4], [10, 20, 30, 40], np.zeros(4))
        fit = radiometry.fit_linear_region(c)
        assert fit.linear_end_exposure == 4 and fit.fit_window == (0, 4)

    def test_too_few_samples(self):
        with pytest.raises(RadiometryError):
            radiometry.fit_linear_region(curve([1, 2, 3, 4], [10, 20, 20, 20]))

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            radiometry.fit_linear_region(curve([1, 2, 3], [1, 2, 3]), 0)


class TestDynamicRange:
    def test_hand_built_curve(self):
        e = np.array([0.001, 0.01, 0.1, 0.5, 1.0, 1.2, 2.0, 3.0])
        m = np.array([1.0, 10.0, 100.0, 500.0, 1000.0, 1100.0, 1150.0, 1150.0])
        s = np.array([1.0, 2.5, 2.5, 3.0, 3.0, 3.0, 0.0, 0.0])
        rep = radiometry.dynamic_range(curve(e, m, s))
        # SNR 1 -> 4: threshold 2 one third of the way
        assert rep.min_signal_exposure == pytest.approx(0.001 + 0.009 / 3)
        assert rep.saturation_dn == 1150
        assert rep.linear_end_exposure == pytest.approx(1.0 + 0.2 * (0.01 / (1 - 1100 / 1200)))
        assert rep.max_signal_exposure == 1.2
        assert rep.linear_dr_db == pytest.approx(20 * np.log10(rep.linear_end_exposure / rep.min_signal_exposure))
        assert rep.full_dr_db > rep.linear_dr_db

    def test_canon_single_frame_sweep(self, canon):
        sweep = synthetic.simulate_stack(canon, synthetic.default_sweep(canon, 20), 1, "flat", seed_base=200_000)
        c = radiometry.response_curve(sweep, None, "B", 256.0)
        rep = radiometry.dynamic_range(c)
        truth = synthetic.analytic_dynamic_range(canon, "B", 1)
        assert rep.linear_dr_db == pytest.approx(truth["linear_dr_db"], abs=0.5)
        assert round(rep.linear_dr_db) in (58, 59)
