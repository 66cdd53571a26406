"""Config schema: parsing, validation, resolution, and builders."""
import numpy as np
import pytest

from clipkde.config import (DEFAULT_H_VALUES, ExperimentConfig, build_clip,
                            build_kernel, cli_clip_constant, from_dict,
                            from_yaml, load_config, resolved_dict, to_dict,
                            to_yaml)
from clipkde.errors import ConfigError


def test_yaml_roundtrip_default():
    cfg = ExperimentConfig()
    assert from_yaml(to_yaml(cfg)) == cfg


def test_yaml_roundtrip_custom():
    cfg = from_dict({
        "estimator": "jkh_real",
        "density": "gaussian-mixture-1d",
        "mode": "h6",
        "seed": 123,
        "n_values": [4096, 8192, 16384],
        "replications": 5,
        "region_r": 0.04,
        "clip": {"c": 0.2, "t0": 2.5},
        "scan_points": [0.0, 0.3],
        "h_values": [0.1, 0.2, 0.3],
        "outputs": {"report": "custom_report"},
    })
    back = from_yaml(to_yaml(cfg))
    assert back == cfg
    assert back.n_values == (4096, 8192, 16384)
    assert back.clip["c"] == 0.2
    assert back.outputs["report"] == "custom_report"
    assert back.outputs["raw"] == "rate_raw"


def test_empty_yaml_is_default():
    assert from_yaml("") == ExperimentConfig()


def test_bad_yaml_raises():
    with pytest.raises(ConfigError):
        from_yaml("estimator: [unclosed")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict({"estimater": "classical"})
    with pytest.raises(ConfigError):
        from_dict({"kernel": {"profile": "poly", "sigma": 1.0}})
    with pytest.raises(ConfigError):
        from_dict({"clip": {"c": 0.1, "cc": 2}})
    with pytest.raises(ConfigError):
        from_dict({"outputs": {"fields": "x"}})


@pytest.mark.parametrize("doc", [
    {"mode": "h5"},
    {"seed": -1},
    {"seed": 1.5},
    {"n": 0},
    {"n_values": [4096, 1]},
    {"n_values": "many"},
    {"replications": 0},
    {"region_r": 0.0},
    {"grid_points": 7},
    {"bandwidth": -0.2},
    {"hhm_B": 0.0},
    {"scan_points": []},
    {"h_values": [0.1, 0.2]},
    {"kernel": {"profile": "gauss"}},
    {"kernel": {"coeffs": [1.0, "x"]}},
    {"kernel": {"T": -1}},
    {"clip": {"c": -0.1}},
    {"clip": {"t0": 0.5}},
    {"clip": {"p": "cubic"}},
    {"kernel": {"fourth_order": "custom"}},
])
def test_invalid_values_rejected(doc):
    with pytest.raises(ConfigError):
        from_dict(doc)


def test_cli_clip_constant_formula():
    assert cli_clip_constant(0.05, 2.0) == pytest.approx(np.sqrt(0.0125),
                                                         rel=1e-15)


def test_resolved_dict_fills_optionals():
    cfg = ExperimentConfig()
    doc = resolved_dict(cfg)
    assert doc["clip"]["c"] == pytest.approx(cli_clip_constant(0.05, 2.0))
    assert doc["h_values"] == DEFAULT_H_VALUES
    # the source config is untouched
    assert cfg.clip["c"] is None and cfg.h_values is None

    pinned = from_dict({"clip": {"c": 0.3}, "h_values": [0.1, 0.2, 0.3]})
    doc2 = resolved_dict(pinned)
    assert doc2["clip"]["c"] == 0.3
    assert doc2["h_values"] == [0.1, 0.2, 0.3]


def test_to_dict_uses_plain_lists():
    doc = to_dict(ExperimentConfig())
    assert isinstance(doc["n_values"], list)
    assert isinstance(doc["scan_points"], list)
    assert doc["h_values"] is None


def test_build_kernel_default_and_custom():
    k1 = build_kernel(ExperimentConfig(), 1)
    assert k1.dim == 1
    assert k1.normalization == pytest.approx(35.0 / 32.0, rel=1e-15)
    custom = from_dict({"kernel": {"coeffs": [1.0, -2.0, 1.0], "T": 1.0}})
    k2 = build_kernel(custom, 1)
    assert k2.profile_coeffs == (1.0, -2.0, 1.0)


def test_build_clip_quintic_and_spline():
    cfg = from_dict({"clip": {"c": 0.25, "t0": 2.0}})
    clip = build_clip(cfg)
    assert clip.c == 0.25 and clip.t0 == 2.0
    assert "quintic" in clip.ident

    spline_doc = {"clip": {"c": 0.25, "t0": 2.0, "p": {"spline": {
        "breaks": [0.0, 2.0],
        "coeffs": [[1.0], [1.0, 0.0, 0.25], [0.0, 1.0]],
    }}}}
    with pytest.warns(Warning):
        clip2 = build_clip(from_dict(spline_doc))
    assert "spline" in clip2.ident
    x = np.array([0.0, 0.02, 0.1])
    from clipkde.clipping import alpha

    # c sqrt(p(x / c^2)) with p(t) = 1 + t^2/4 on [0, 2)
    t = x / 0.0625
    expect = 0.25 * np.sqrt(np.where(t < 2.0, 1.0 + t * t / 4.0, t))
    assert np.allclose(alpha(clip2, x), expect, rtol=1e-13)


def test_build_clip_null_c_uses_region_floor():
    cfg = from_dict({"region_r": 0.08})
    clip = build_clip(cfg)
    assert clip.c == pytest.approx(cli_clip_constant(0.08, 2.0), rel=1e-15)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
    p = tmp_path / "run.yaml"
    p.write_text("estimator: classical\nseed: 3\n")
    cfg = load_config(p)
    assert cfg.estimator == "classical" and cfg.seed == 3
