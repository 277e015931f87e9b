import csv
import io
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sensorcal import __version__, noise, radiometry, report
from sensorcal.svgplot import Plot, _linear_ticks, _log_ticks

SVG = "{http://www.w3.org/2000/svg}"


class TestPlot:
    def test_valid_svg_with_series(self):
        p = Plot(title="a & b", xlabel="x", ylabel="y", logx=True)
        p.scatter([0.001, 0.1, 1.0], [1, 2, 3], "pts").line([0.001, 1.0], [0, 4], "fit")
        root = ET.fromstring(p.render())
        assert len(root.findall(f"{SVG}circle")) == 3
        assert len(root.findall(f"{SVG}polyline")) == 1
        assert "a &amp; b" in p.render()

    def test_skips_non_positive_on_log_axes(self):
        p = Plot(logx=True, logy=True).scatter([0, 1, 10], [1, -1, 5], "s")
        assert len(ET.fromstring(p.render()).findall(f"{SVG}circle")) == 1

    def test_empty_plot_renders(self):
        ET.fromstring(Plot().render())

    def test_deterministic(self, tmp_path):
        def make():
            return Plot(title="t").scatter(np.linspace(0, 1, 7), np.linspace(2, 3, 7), "s")
        make().save(tmp_path / "a.svg")
        make().save(tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_ticks(self):
        assert _linear_ticks(0, 10) == [0, 2, 4, 6, 8, 10]
        assert _log_ticks(0.002, 50) == [0.01, 0.1, 1.0, 10.0]


@pytest.fixture(scope="module")
def doc(noise_set, sweep_set):
    dark, flat = noise_set
    curve = radiometry.response_curve(sweep_set[1], None, "B", 256.0)
    return report.build_report(
        {"channel": "B"}, blo=256.0, noise=noise.noise_report(dark, flat), curve=curve,
        linear_fit=radiometry.fit_linear_region(curve), dynamic_range=radiometry.dynamic_range(curve),
        timestamp=False)


class TestReport:
    def test_structure_and_units(self, doc):
        assert doc["version"] == __version__ and "generated_at" not in doc
        assert doc["blo"] == {"value": 256.0, "unit": "DN"}
        assert doc["noise"]["prnu_percent"]["G1"]["unit"] == "%"
        assert doc["dynamic_range"]["linear_dr_db"]["unit"] == "dB"
        assert doc["radiometric_curve"]["units"] == ["rel. exposure", "DN", "DN", "count"]
        assert "rng" in doc["decisions"]

    def test_timestamp_toggle(self):
        assert "generated_at" in report.build_report({})

    def test_json_round_trip(self, doc):
        assert json.loads(report.to_json(doc)) == json.loads(json.dumps(doc))

    def test_csv_rows(self, doc):
        rows = list(csv.reader(io.StringIO(report.to_csv(doc))))
        assert rows[0] == ["field", "value", "unit"]
        fields = {r[0]: r for r in rows[1:]}
        assert fields["dynamic_range.linear_dr_db"][2] == "dB"
        assert fields["radiometric_curve.0.mean"][2] == "DN"
        assert fields["noise.dark_roi"][1] == "96 96 64 64"

    def test_text_skips_curve(self, doc):
        text = report.to_text(doc)
        assert "radiometric_curve" not in text and "linear_dr_db" in text

    def test_unknown_format(self, doc):
        with pytest.raises(ValueError):
            report.render(doc, "xml")
