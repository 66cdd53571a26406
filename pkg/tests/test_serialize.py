"""Output files: bit-exact roundtrips, atomic writes, embedded configs."""
import json

import numpy as np
import pytest

from clipkde.errors import ConfigError
from clipkde.estimators import EstimateField
from clipkde.experiments import RateReport
from clipkde.serialize import (atomic_write_text, bias_scan_to_csv,
                               embedded_config, field_from_json, field_to_csv,
                               field_to_json, report_from_json,
                               report_to_json, report_to_plot_data,
                               report_to_raw_csv, report_to_summary_csv)

CONFIG = {"estimator": "classical", "seed": 7, "clip": {"c": 0.1}}


def _field():
    rng = np.random.Generator(np.random.Philox(3))
    grid = np.linspace(-1.0, 1.0, 9)[:, None]
    vals = rng.uniform(0.0, 0.5, 9)
    return EstimateField(grid, vals, "classical",
                         {"n": 100, "h": 0.37, "kernel": "poly"})


def _report():
    rng = np.random.Generator(np.random.Philox(4))
    raw = rng.uniform(0.01, 0.2, (3, 4))
    med = np.median(raw, axis=1)
    return RateReport("sup_error", "mckay_real", "gaussian-1d", "h4",
                      (128, 256, 512), raw, med,
                      np.quantile(raw, 0.25, axis=1),
                      np.quantile(raw, 0.75, axis=1),
                      0.4219371, -2.3456789, 4, 777, 0.05, 0.1, 0, 3.2e-11)


def test_field_json_roundtrip_bitwise():
    f = _field()
    back, cfg = field_from_json(field_to_json(f, CONFIG))
    assert np.array_equal(back.grid, f.grid)
    assert np.array_equal(back.values, f.values)
    assert back.estimator_id == f.estimator_id
    assert back.metadata["h"] == f.metadata["h"]
    assert cfg == CONFIG


def test_field_csv_parses_back_exactly():
    f = _field()
    text = field_to_csv(f, CONFIG)
    lines = text.strip().split("\n")
    assert lines[0].startswith("# clipkde ")
    assert lines[3] == "x1,value"
    data = [line.split(",") for line in lines[4:]]
    assert len(data) == 9
    # repr round-trips binary doubles through float()
    assert all(float(x) == g and float(v) == val
               for (x, v), g, val in zip(data, f.grid[:, 0], f.values))


def test_report_json_roundtrip_bitwise():
    r = _report()
    back, cfg = report_from_json(report_to_json(r, CONFIG))
    assert np.array_equal(back.raw_errors, r.raw_errors)
    assert np.array_equal(back.medians, r.medians)
    assert np.array_equal(back.q25, r.q25)
    assert np.array_equal(back.q75, r.q75)
    assert back.slope == r.slope and back.intercept == r.intercept
    assert back.clip_c == r.clip_c
    assert back.n_values == r.n_values
    assert back.clamp_events == 0 and cfg == CONFIG


def test_kind_guards():
    with pytest.raises(ConfigError):
        report_from_json(field_to_json(_field(), CONFIG))
    with pytest.raises(ConfigError):
        field_from_json(report_to_json(_report(), CONFIG))


def test_raw_csv_rows():
    r = _report()
    lines = report_to_raw_csv(r, CONFIG).strip().split("\n")
    assert lines[2] == "n,rep,error"
    body = lines[3:]
    assert len(body) == 12
    assert body[0].startswith("128,0,")
    assert body[-1].startswith("512,3,")
    n, rep, err = body[5].split(",")
    assert (int(n), int(rep)) == (256, 1)
    assert float(err) == r.raw_errors[1, 1]


def test_summary_csv_rows():
    r = _report()
    lines = report_to_summary_csv(r, CONFIG).strip().split("\n")
    assert lines[2] == "n,median,q25,q75,intercept,slope"
    assert len(lines) == 6
    cols = lines[3].split(",")
    assert int(cols[0]) == 128
    assert float(cols[1]) == r.medians[0]
    assert float(cols[5]) == r.slope


def test_plot_data_columns():
    r = _report()
    lines = report_to_plot_data(r, CONFIG).strip().split("\n")
    body = [line.split() for line in lines if not line.startswith("#")]
    assert len(body) == 3
    for (x, y, z), n, med in zip(body, r.n_values, r.medians):
        assert float(x) == pytest.approx(np.log(np.log(n) / n), rel=1e-15)
        assert float(y) == pytest.approx(np.log(med), rel=1e-15)
        assert float(z) == pytest.approx(r.intercept + r.slope * float(x),
                                         rel=1e-12)


def test_bias_scan_csv():
    rows = [(0.3, 0.1, -1e-5), (0.3, 0.2, -4e-5), (0.5, 0.1, 2e-5)]
    slopes = {0.3: 4.01, 0.5: 3.98}
    lines = bias_scan_to_csv(rows, slopes, CONFIG).strip().split("\n")
    assert lines[2] == "t,h,bias,slope"
    assert len(lines) == 6
    t, h, b, s = lines[3].split(",")
    assert (float(t), float(h), float(b), float(s)) == (0.3, 0.1, -1e-5, 4.01)
    assert float(lines[4].split(",")[3]) == 4.01
    assert float(lines[5].split(",")[3]) == 3.98


def test_embedded_config_csv_and_json():
    f = _field()
    assert embedded_config(field_to_csv(f, CONFIG)) == CONFIG
    assert embedded_config(field_to_json(f, CONFIG)) == CONFIG
    assert embedded_config(report_to_raw_csv(_report(), CONFIG)) == CONFIG
    with pytest.raises(ConfigError):
        embedded_config("x,y\n1,2\n")


def test_atomic_write_text(tmp_path):
    target = tmp_path / "deep" / "out.csv"
    atomic_write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
    atomic_write_text(target, "replaced\n")
    assert target.read_text() == "replaced\n"
    leftovers = [p for p in (tmp_path / "deep").iterdir() if p != target]
    assert leftovers == []


def test_outputs_carry_no_timestamps():
    # byte-identical reruns require emitters to be pure functions
    f = _field()
    r = _report()
    for emit, obj in ((field_to_csv, f), (field_to_json, f),
                      (report_to_json, r), (report_to_raw_csv, r),
                      (report_to_summary_csv, r), (report_to_plot_data, r)):
        assert emit(obj, CONFIG) == emit(obj, CONFIG)
