import json
from dataclasses import replace

import numpy as np
import pytest

from sensorcal import radiometry, sve, synthetic
from sensorcal.frame_io import CfaLayout, Frame
from sensorcal.sve import (
    MEASURED,
    RECONSTRUCTED,
    UNRECOVERABLE,
    CalibrationMismatchError,
    CorrectionMap,
    SveCalibration,
)


def three_exposure_calibration(sat=3726.0, fraction=0.98):
    order = ["R", "G", "B"]
    return SveCalibration(
        channel_order=order, exposure_ratios=[1.0, 0.2, 0.09],
        members={"R": ["R"], "G": ["G1", "G2"], "B": ["B"]},
        correction={g: CorrectionMap.identity(sat) for g in order},
        q=3066, saturation_dn=sat, saturation_fraction=fraction,
    )


class TestQuantizationLevels:
    def test_terms(self):
        assert sve.quantization_levels(3066, [1, 0.2, 0.09]) == 3066 + 2452 + 1686

    def test_single_exposure(self):
        assert sve.quantization_levels(4096, [1.0]) == 4096

    def test_ratio_one_adds_nothing(self):
        assert sve.quantization_levels(100, [1.0, 1.0, 0.5]) == 100 + 0 + 50

    def test_rounds_half_away_from_zero(self):
        # (q-1) * (1 - 0.5) = 2.5 -> 3
        assert sve.quantization_levels(6, [1.0, 0.5]) == 9
        assert sve.round_half_away(2.5) == 3 and sve.round_half_away(-2.5) == -3

    @pytest.mark.parametrize("q, ratios", [(1, [1.0]), (2.5, [1.0]), (10, []), (10, [1.0, 1.5]),
                                           (10, [0.5, 0.9]), (10, [1.0, 0.0])])
    def test_invalid(self, q, ratios):
        with pytest.raises(ValueError):
            sve.quantization_levels(q, ratios)


class TestCorrectionMap:
    def test_interp_and_extrapolation(self):
        m = CorrectionMap([0, 10, 20], [0, 10, 30])
        assert m(np.array([5.0, 15.0, 25.0, -1.0])).tolist() == [5.0, 20.0, 40.0, -1.0]

    def test_must_increase(self):
        with pytest.raises(ValueError):
            CorrectionMap([0, 10, 5], [0, 1, 2])
        with pytest.raises(ValueError):
            CorrectionMap([0, 10], [5, 1])


class TestCalibrationFile:
    def test_round_trip(self, tmp_path):
        cal = three_exposure_calibration()
        cal.save(tmp_path / "c.json")
        doc = json.loads((tmp_path / "c.json").read_text())
        assert doc["quantization_levels"] == 7204
        assert doc["step_ratios"] == pytest.approx([0.2, 0.45])
        back = SveCalibration.load(tmp_path / "c.json")
        assert back.signature() == cal.signature() and back.q == 3066

    def test_groups_must_cover_cfa(self):
        with pytest.raises(ValueError):
            SveCalibration(["R"], [1.0], {"R": ["R"]}, {}, 10, 100.0)

    def test_ratios_descending(self):
        with pytest.raises(ValueError):
            replace(three_exposure_calibration(), exposure_ratios=[1.0, 0.09, 0.2])


class TestConstruct:
    def test_no_saturation_scales_by_ratio(self):
        cal = three_exposure_calibration()
        data = np.array([[100, 40], [40, 18]] * 2)
        img = sve.construct_sve(Frame(np.tile(data, (1, 2))), cal)
        assert np.all(img.validity == MEASURED)
        np.testing.assert_allclose(img.values[:2, :2], [[100, 200], [200, 200]])

    def test_saturated_base_uses_green_neighbours(self):
        cal = three_exposure_calibration()
        h = w = 6
        tags = CfaLayout().tag_map(h, w)
        data = np.where(tags == "R", 3726, np.where(tags == "B", 900, 1000)).astype(np.uint16)
        img = sve.construct_sve(Frame(data), cal)
        r = tags == "R"
        assert np.all(img.validity[r] == RECONSTRUCTED)
        assert np.all(img.source_group[r] == 1)
        np.testing.assert_allclose(img.values[r], 1000 / 0.2)
        assert np.all(img.validity[~r] == MEASURED)

    def test_green_saturated_falls_back_to_blue(self):
        cal = three_exposure_calibration()
        tags = CfaLayout().tag_map(4, 4)
        data = np.where(tags == "B", 1000, 3726).astype(np.uint16)
        img = sve.construct_sve(Frame(data), cal)
        g = (tags == "G1") | (tags == "G2")
        assert np.all(img.source_group[g] == 2)
        np.testing.assert_allclose(img.values[g], 1000 / 0.09)

    def test_all_saturated_unrecoverable(self):
        img = sve.construct_sve(Frame(np.full((4, 4), 3726)), three_exposure_calibration())
        assert np.all(img.validity == UNRECOVERABLE)
        assert np.all(np.isnan(img.values))

    def test_blo_removed_before_threshold(self):
        cal = three_exposure_calibration()
        img = sve.construct_sve(Frame(np.full((2, 2), 3726)), cal, blo=256)
        assert np.all(img.validity == MEASURED)

    def test_bare_array_needs_cfa(self):
        with pytest.raises(ValueError):
            sve.construct_sve(np.zeros((2, 2)), three_exposure_calibration())


class TestLinearize:
    def test_identity_maps_pass_values_through(self):
        cal = three_exposure_calibration()
        tags = CfaLayout().tag_map(6, 6)
        data = np.where(tags == "R", 3726, 700).astype(np.uint16)
        img = sve.construct_sve(Frame(data), cal)
        hdr = sve.linearize_sve(img, cal)
        ok = img.validity != UNRECOVERABLE
        np.testing.assert_allclose(hdr.data[ok], img.values[ok])
        assert hdr.metadata["quantization_levels"] == 7204

    def test_signature_mismatch(self):
        img = sve.construct_sve(Frame(np.zeros((2, 2))), three_exposure_calibration())
        with pytest.raises(CalibrationMismatchError):
            sve.linearize_sve(img, three_exposure_calibration(sat=4000.0))

    def test_unsaturated_scene_is_scaled_input(self):
        hdr = sve.reconstruct(Frame(np.full((4, 4), 500)), three_exposure_calibration())
        assert hdr.fraction(MEASURED) == 1.0
        tags = CfaLayout().tag_map(4, 4)
        np.testing.assert_allclose(hdr.data[tags == "B"], 500 / 0.09)


@pytest.fixture(scope="module")
def calibration(sve_set):
    model, sweep, dark = sve_set
    return sve.calibrate_exposure_ratios(sweep, radiometry.estimate_blo(dark), wavelength_tag="633nm")


class TestCalibrateOracle:
    def test_ratios(self, calibration):
        assert calibration.channel_order == ["R", "G", "B"]
        assert calibration.exposure_ratios[0] == 1.0
        assert calibration.step_ratios == pytest.approx([0.2, 0.45], rel=0.02)
        assert calibration.saturation_dn == pytest.approx(3726, abs=1)

    def test_quantization_levels_near_reference_value(self, calibration):
        # q is the measured linear end of the red channel
        assert abs(calibration.quantization_levels() - 7204) < 100

    def test_correction_maps_monotone(self, calibration):
        for m in calibration.correction.values():
            assert np.all(np.diff(m.knots_out) >= 0)

    def test_correction_linearizes_shoulder(self, sve_set, calibration):
        model, sweep, dark = sve_set
        blo = radiometry.estimate_blo(dark)
        curve = radiometry.response_curve(sweep, None, "R", blo)
        fit = radiometry.fit_linear_region(curve)
        keep = curve.means < 0.98 * calibration.saturation_dn
        keep &= curve.means > 100
        corrected = calibration.correction["R"](curve.means[keep])
        line = fit.predict(curve.exposures[keep])
        np.testing.assert_allclose(corrected, line, rtol=0.01)

    def test_equal_transmittances_give_unit_ratios(self):
        model = synthetic.preset("canon400d-approx")
        model = replace(model, width=64, height=64)
        sweep = synthetic.simulate_stack(model, synthetic.default_sweep(model, 16), 2, "flat")
        cal = sve.calibrate_exposure_ratios(sweep, model.blo)
        assert cal.exposure_ratios == pytest.approx([1.0] * len(cal.exposure_ratios), rel=0.02)

    def test_ramp_rmse_below_one_percent(self, sve_set, calibration):
        model = sve_set[0]
        ramp = sve.ramp_exposure(model.width, model.height, 3.0 * synthetic.saturation_exposure(model))
        frame = synthetic.simulate_frame(model, ramp, seed_offset=300_000)
        hdr = sve.reconstruct(frame, calibration, blo=calibration.blo)
        truth = model.gain * ramp
        ok = hdr.validity != UNRECOVERABLE
        rmse = np.sqrt(np.mean((hdr.data[ok] - truth[ok]) ** 2))
        assert rmse < 0.01 * (truth.max() - truth.min())
        assert hdr.metadata["unrecoverable_fraction"] == 0.0


def test_ramp_exposure():
    r = sve.ramp_exposure(5, 2, 4.0)
    assert r.shape == (2, 5) and r[1].tolist() == [0, 1, 2, 3, 4]
