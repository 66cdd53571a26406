"""Experiment configuration: a single YAML document, lossless round-trips.

The schema is flat and explicit; unknown keys are rejected so typos fail
loudly instead of silently running defaults.  Optional values resolve to
concrete ones in resolved_dict, and that resolved form is what output
files embed for reproduction.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np
import yaml

from .clipping import PiecewisePoly, make_clipping
from .errors import ConfigError
from .kernels import make_default_profile, make_radial_kernel

DEFAULT_KERNEL = {"profile": "poly", "coeffs": [1.0, -3.0, 3.0, -1.0], "T": 1.0}
DEFAULT_CLIP = {"c": None, "t0": 2.0, "p": "mckay-quintic"}
DEFAULT_OUTPUTS = {"field": "estimate_field", "report": "rate_report",
                   "raw": "rate_raw", "summary": "rate_summary",
                   "plot": "rate_plot", "scan": "bias_scan"}
DEFAULT_H_VALUES = [float(v) for v in np.geomspace(0.05, 0.4, 8)]


def cli_clip_constant(r: float, t0: float) -> float:
    """Config-layer fallback when clip.c is null: c = sqrt(r / (2 t0)).

    Distinct from the harness default in experiments; shipped experiment
    configs pin clip.c explicitly, so this rule only fires for hand-rolled
    configs that give a region floor and nothing else.
    """
    return float(np.sqrt(r / (2.0 * t0)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; output basenames get format extensions."""

    estimator: str = "mckay_real"
    density: str = "gaussian-1d"
    mode: str = "h4"
    seed: int = 777
    kernel: dict = field(default_factory=lambda: dict(DEFAULT_KERNEL))
    clip: dict = field(default_factory=lambda: dict(DEFAULT_CLIP))
    n: int = 100
    n_values: tuple = (4096, 8192, 16384, 32768, 65536, 131072, 262144)
    replications: int = 20
    region_r: float = 0.05
    grid_points: int | None = None
    bandwidth: float | None = None
    hhm_B: float | None = None
    scan_points: tuple = (0.3,)
    h_values: tuple | None = None
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))


_SCHEMA = {f.name for f in fields(ExperimentConfig)}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_kernel_spec(spec: Any) -> dict:
    _require(isinstance(spec, dict), "kernel must be a mapping")
    if "fourth_order" in spec:
        _require(spec == {"fourth_order": "default"},
                 "the only fourth-order kernel spec is {fourth_order: default}")
        return dict(spec)
    keys = set(spec)
    _require(keys <= {"profile", "coeffs", "T"},
             f"unknown kernel keys {sorted(keys - {'profile', 'coeffs', 'T'})}")
    _require(spec.get("profile", "poly") == "poly",
             "kernel.profile must be 'poly'; callables are not serializable")
    coeffs = spec.get("coeffs", DEFAULT_KERNEL["coeffs"])
    _require(isinstance(coeffs, (list, tuple))
             and all(isinstance(v, (int, float)) for v in coeffs),
             "kernel.coeffs must be a list of numbers")
    T = spec.get("T", 1.0)
    _require(isinstance(T, (int, float)) and T > 0, "kernel.T must be positive")
    return {"profile": "poly", "coeffs": [float(v) for v in coeffs],
            "T": float(T)}


def _check_clip_spec(spec: Any) -> dict:
    _require(isinstance(spec, dict), "clip must be a mapping")
    keys = set(spec)
    _require(keys <= {"c", "t0", "p"},
             f"unknown clip keys {sorted(keys - {'c', 't0', 'p'})}")
    c = spec.get("c")
    _require(c is None or (isinstance(c, (int, float)) and c > 0),
             "clip.c must be positive or null")
    t0 = spec.get("t0", 2.0)
    _require(isinstance(t0, (int, float)) and t0 >= 1, "clip.t0 must be >= 1")
    p = spec.get("p", "mckay-quintic")
    if p != "mckay-quintic":
        _require(isinstance(p, dict) and set(p) == {"spline"},
                 "clip.p must be 'mckay-quintic' or {spline: {...}}")
        sp = p["spline"]
        _require(isinstance(sp, dict) and set(sp) == {"breaks", "coeffs"},
                 "clip.p.spline needs keys breaks and coeffs")
    return {"c": None if c is None else float(c), "t0": float(t0), "p": p}


def from_dict(doc: Any) -> ExperimentConfig:
    _require(isinstance(doc, dict), "config root must be a mapping")
    unknown = set(doc) - _SCHEMA
    _require(not unknown, f"unknown config keys {sorted(unknown)}")
    cfg = dict(doc)
    kernel = _check_kernel_spec(cfg.get("kernel", dict(DEFAULT_KERNEL)))
    clip = _check_clip_spec(cfg.get("clip", dict(DEFAULT_CLIP)))
    outputs = cfg.get("outputs", {})
    _require(isinstance(outputs, dict), "outputs must be a mapping")
    unknown_out = set(outputs) - set(DEFAULT_OUTPUTS)
    _require(not unknown_out, f"unknown output keys {sorted(unknown_out)}")
    out = dict(DEFAULT_OUTPUTS)
    out.update({k: str(v) for k, v in outputs.items()})

    estimator = cfg.get("estimator", "mckay_real")
    density = cfg.get("density", "gaussian-1d")
    mode = cfg.get("mode", "h4")
    _require(mode in ("h4", "h6"), f"mode must be h4 or h6, got {mode!r}")
    seed = cfg.get("seed", 777)
    _require(isinstance(seed, int) and seed >= 0,
             "seed must be a nonnegative integer")
    n = cfg.get("n", 100)
    _require(isinstance(n, int) and n >= 1, "n must be a positive integer")
    n_values = cfg.get("n_values",
                       list(ExperimentConfig.__dataclass_fields__
                            ["n_values"].default))
    _require(isinstance(n_values, (list, tuple))
             and all(isinstance(v, int) and v >= 2 for v in n_values),
             "n_values must be a list of integers >= 2")
    replications = cfg.get("replications", 20)
    _require(isinstance(replications, int) and replications >= 1,
             "replications must be a positive integer")
    region_r = cfg.get("region_r", 0.05)
    _require(isinstance(region_r, (int, float)) and region_r > 0,
             "region_r must be positive")
    grid_points = cfg.get("grid_points")
    _require(grid_points is None
             or (isinstance(grid_points, int) and grid_points >= 8),
             "grid_points must be an integer >= 8 or null")
    bandwidth = cfg.get("bandwidth")
    _require(bandwidth is None
             or (isinstance(bandwidth, (int, float)) and bandwidth > 0),
             "bandwidth must be positive or null")
    hhm_B = cfg.get("hhm_B")
    _require(hhm_B is None or (isinstance(hhm_B, (int, float)) and hhm_B > 0),
             "hhm_B must be positive or null")
    scan_points = cfg.get("scan_points", [0.3])
    _require(isinstance(scan_points, (list, tuple)) and len(scan_points) > 0
             and all(isinstance(v, (int, float)) for v in scan_points),
             "scan_points must be a nonempty list of numbers")
    h_values = cfg.get("h_values")
    _require(h_values is None
             or (isinstance(h_values, (list, tuple)) and len(h_values) >= 3
                 and all(isinstance(v, (int, float)) and v > 0
                         for v in h_values)),
             "h_values must be null or >= 3 positive numbers")
    return ExperimentConfig(
        estimator=str(estimator), density=str(density), mode=str(mode),
        seed=seed, kernel=kernel, clip=clip, n=n,
        n_values=tuple(int(v) for v in n_values), replications=replications,
        region_r=float(region_r), grid_points=grid_points,
        bandwidth=None if bandwidth is None else float(bandwidth),
        hhm_B=None if hhm_B is None else float(hhm_B),
        scan_points=tuple(float(v) for v in scan_points),
        h_values=None if h_values is None else tuple(float(v)
                                                     for v in h_values),
        outputs=out)


def to_dict(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["n_values"] = list(cfg.n_values)
    doc["scan_points"] = list(cfg.scan_points)
    doc["h_values"] = None if cfg.h_values is None else list(cfg.h_values)
    return doc


def from_yaml(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    if doc is None:
        doc = {}
    return from_dict(doc)


def to_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=True,
                          default_flow_style=False)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return from_yaml(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def resolved_dict(cfg: ExperimentConfig) -> dict:
    """Concrete values for embedding: optional fields filled in."""
    doc = to_dict(cfg)
    if doc["clip"]["c"] is None:
        doc["clip"]["c"] = cli_clip_constant(cfg.region_r, doc["clip"]["t0"])
    if doc["h_values"] is None:
        doc["h_values"] = list(DEFAULT_H_VALUES)
    return doc


def build_kernel(cfg: ExperimentConfig, dim: int):
    spec = cfg.kernel
    if spec == DEFAULT_KERNEL:
        return make_default_profile(dim)
    return make_radial_kernel(spec["coeffs"], spec["T"], dim)


def build_clip(cfg: ExperimentConfig):
    spec = cfg.clip
    c = spec["c"]
    if c is None:
        c = cli_clip_constant(cfg.region_r, spec["t0"])
    if spec["p"] == "mckay-quintic":
        return make_clipping(c, spec["t0"])
    sp = spec["p"]["spline"]
    taper = PiecewisePoly(tuple(float(b) for b in sp["breaks"]),
                          tuple(tuple(float(v) for v in row)
                                for row in sp["coeffs"]))
    return make_clipping(c, spec["t0"], taper=taper)
