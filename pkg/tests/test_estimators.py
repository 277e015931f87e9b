import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sensorcal import BlackLevelSubtractor, NoiseAnalyzer, RadiometricAnalyzer, SveReconstructor, sve, synthetic
from sensorcal.frame_io import Frame
from sensorcal.validation import check_frame, check_roi, check_stack

ESTIMATORS = [BlackLevelSubtractor, NoiseAnalyzer, RadiometricAnalyzer, SveReconstructor]


@pytest.mark.parametrize("cls", ESTIMATORS)
def test_get_params_and_clone(cls):
    est = cls()
    params = est.get_params()
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


def test_set_params():
    est = RadiometricAnalyzer().set_params(channel="R", snr_threshold=3.0)
    assert est.channel == "R" and est.snr_threshold == 3.0


class TestBlackLevel:
    def test_fit_transform_arrays(self):
        dark = np.full((4, 4, 4), 256, dtype=np.uint16)
        est = BlackLevelSubtractor().fit(dark)
        assert est.blo_ == 256.0
        out = est.transform(np.array([[200, 300]], dtype=np.uint16))
        assert out.tolist() == [[0, 44]] and out.dtype == np.uint16

    def test_fixed_blo_skips_dark(self):
        est = BlackLevelSubtractor(blo=10).fit(None)
        f = est.transform(Frame(np.array([[15, 5]])))
        assert f.data.tolist() == [[5, 0]]

    def test_transform_stack(self, noise_set):
        est = BlackLevelSubtractor(roi="0,0,32,32").fit(noise_set[0])
        out = est.transform(noise_set[1])
        assert out.kind == "flat" and len(out) == 64
        assert out.frames[0].data.mean() == pytest.approx(noise_set[1].frames[0].data.mean() - 256, abs=0.5)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            BlackLevelSubtractor().transform(np.zeros((2, 2)))


class TestRadiometricAnalyzer:
    def test_fit(self, sweep_set):
        exposures, sweep, dark = sweep_set
        est = RadiometricAnalyzer(roi=None).fit(sweep, dark=dark)
        assert est.blo_ == pytest.approx(256, abs=0.5)
        assert est.roi_.as_tuple() == (96, 96, 64, 64)
        assert est.saturation_dn_ == pytest.approx(3726, abs=1)
        assert est.report_.linear_dr_db > 60
        assert est.predict([exposures[3]])[0] == pytest.approx(est.curve_.means[3])

    def test_needs_black_level(self, sweep_set):
        with pytest.raises(ValueError):
            RadiometricAnalyzer().fit(sweep_set[1])

    def test_bad_threshold(self, sweep_set):
        with pytest.raises(ValueError):
            RadiometricAnalyzer(snr_threshold=0, blo=256).fit(sweep_set[1])

    def test_array_input_with_exposures(self):
        model = synthetic.preset("noiseless")
        e = np.array([0.1, 0.2, 0.3, 0.6, 1.2, 1.5, 2.0])
        cube = np.stack([synthetic.simulate_frame(model, x).data for x in e])
        est = RadiometricAnalyzer(blo=256, roi=(0, 0, 16, 16)).fit(cube, e)
        assert est.linear_fit_.slope == pytest.approx(3097, rel=1e-3)


class TestNoiseAnalyzer:
    def test_fit(self, noise_set):
        est = NoiseAnalyzer().fit(noise_set[0], flat=noise_set[1])
        assert est.report_.dark_temporal_sigma == pytest.approx(1.6, abs=0.1)
        assert "G1" in est.report_.prnu_percent

    def test_rejects_multi_exposure_flat(self, noise_set, sweep_set):
        with pytest.raises(ValueError):
            NoiseAnalyzer().fit(noise_set[0], flat=sweep_set[1])


class TestSveReconstructor:
    def test_fit_transform(self, sve_set):
        model, sweep, dark = sve_set
        est = SveReconstructor(wavelength_tag="633nm").fit(sweep, dark=dark)
        assert abs(est.quantization_levels_ - 7204) < 100
        ramp = sve.ramp_exposure(model.width, model.height, 2 * synthetic.saturation_exposure(model))
        frame = synthetic.simulate_frame(model, ramp, seed_offset=5)
        hdr = est.transform(frame)
        assert hdr.fraction(sve.RECONSTRUCTED) > 0
        many = est.transform(np.stack([frame.data, frame.data]))
        assert len(many) == 2

    def test_from_calibration(self, sve_set):
        model, sweep, dark = sve_set
        cal = SveReconstructor().fit(sweep, dark=dark).calibration_
        est = SveReconstructor.from_calibration(cal)
        assert est.quantization_levels_ == cal.quantization_levels()
        out = est.transform(np.full((4, 4), 500, dtype=np.uint16))
        assert out.fraction(sve.MEASURED) == 1.0

    def test_bad_fraction(self, sve_set):
        with pytest.raises(ValueError):
            SveReconstructor(saturation_fraction=1.5, blo=0).fit(sve_set[1])


class TestValidation:
    def test_check_frame_rejects_fractional(self):
        with pytest.raises(ValueError):
            check_frame(np.array([[0.5]]))

    def test_check_stack_dark_from_array(self):
        st = check_stack(np.zeros((3, 2, 2)), kind="dark")
        assert st.kind == "dark" and st.exposures == [None]

    def test_check_stack_exposure_count(self):
        with pytest.raises(ValueError):
            check_stack(np.zeros((3, 2, 2)), kind="flat", exposures=[1.0, 2.0])

    def test_check_stack_min_frames(self):
        with pytest.raises(ValueError):
            check_stack(np.zeros((1, 2, 2)), kind="dark", min_frames=2)

    def test_check_roi(self):
        assert check_roi(None, 10, 10) is None
        assert check_roi("0,0,4,4", 10, 10).width == 4
        assert check_roi(None, 100, 100, default_size=64).x == 18
        with pytest.raises(ValueError):
            check_roi((8, 8, 4, 4), 10, 10)
