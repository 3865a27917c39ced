import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coanda_lqg import io
from coanda_lqg.dsp import FrequencyResponse, SampleSpec, estimate_spectra
from coanda_lqg.svg import Panel, bode_panels, render

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(values=st.lists(finite, min_size=1, max_size=40))
def test_csv_round_trip_is_lossless(values, tmp_path_factory):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    io.write_csv(path, {"a": values, "b": values[::-1]})
    back = io.read_csv(path)
    np.testing.assert_array_equal(back["a"], values)
    np.testing.assert_array_equal(back["b"], values[::-1])


def test_time_column_uses_nine_decimals(tmp_path):
    ts = 1.0 / 50_000.0
    cols = io.sequence_columns(np.arange(4.0), ts)
    text = io.format_csv(cols)
    assert text.splitlines()[0] == "t,value"
    assert text.splitlines()[2].startswith("0.000020000,")
    back = io.read_csv(io.write_csv(tmp_path / "s.csv", cols))
    np.testing.assert_allclose(back["t"], np.arange(4) * ts, atol=5e-10)


def test_nan_written_and_read(tmp_path):
    p = io.write_csv(tmp_path / "n.csv", {"x": [1.0, math.nan]})
    assert "nan" in p.read_text()
    back = io.read_csv(p)
    assert back["x"][0] == 1.0 and math.isnan(back["x"][1])


def test_csv_validation(tmp_path):
    with pytest.raises(ValueError):
        io.format_csv({})
    with pytest.raises(ValueError):
        io.format_csv({"a": [1.0], "b": [1.0, 2.0]})
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(ValueError):
        io.read_csv(tmp_path / "empty.csv")
    (tmp_path / "ragged.csv").write_text("a,b\n1,2\n3\n")
    with pytest.raises(ValueError):
        io.read_csv(tmp_path / "ragged.csv")


def test_json_sorted_with_nulls(tmp_path):
    obj = {"b": np.float64(math.nan), "a": np.arange(3), "c": np.bool_(True), "d": math.inf, "e": 1 + 2j}
    text = io.format_json(obj)
    assert text.endswith("\n")
    data = json.loads(text)
    assert list(data) == ["a", "b", "c", "d", "e"]
    assert data["a"] == [0, 1, 2] and data["b"] is None and data["c"] is True and data["d"] is None
    assert data["e"] == {"re": 1.0, "im": 2.0}
    assert io.read_json(io.write_json(tmp_path / "o.json", obj)) == data


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    io.atomic_write_text(target, "one")
    io.atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]


def test_response_columns_round_trip(tmp_path):
    resp = FrequencyResponse([10.0, 20.0, 30.0], [1 + 1j, -0.5j, 2.0])
    back = io.response_from_columns(io.read_csv(io.write_csv(tmp_path / "r.csv", io.response_columns(resp))))
    np.testing.assert_array_equal(back.grid, resp.grid)
    np.testing.assert_array_equal(back.value, resp.value)


def test_spectral_columns(tmp_path):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(4096)
    est = estimate_spectra(u, 2 * u, 1024, SampleSpec())
    cols = io.read_csv(io.write_csv(tmp_path / "s.csv", io.spectral_columns(est)))
    assert list(cols) == ["f_hz", "phi_uu", "re_phi_yu", "im_phi_yu"]
    np.testing.assert_array_equal(cols["re_phi_yu"], est.Phi_yu.real)


def test_svg_is_deterministic_and_well_formed():
    import xml.etree.ElementTree as ET

    x = np.linspace(0.0, 1.0, 10_000)
    p = Panel(xlabel="t", ylabel="y", title="a & b").add(x, np.sin(20 * x), "sin").add(x, np.cos(20 * x), "cos", True)
    a = render(p, title="demo")
    assert a == render(p, title="demo")
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    # decimation keeps the polyline small
    pts = [e for e in root.iter() if e.tag.endswith("polyline")][0].get("points").split()
    assert len(pts) <= 4000


def test_bode_panels_skip_nonpositive_frequency():
    resp = FrequencyResponse([0.0, 1.0, 10.0, 100.0], [1.0, 0.5, 0.1, 0.01])
    text = render(bode_panels([("r", resp)]))
    assert "NaN" not in text and "nan" not in text
