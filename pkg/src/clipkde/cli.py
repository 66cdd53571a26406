"""Command-line entry point.

Each subcommand resolves the config, runs the matching library operation,
renders every output file in memory, and only then writes them atomically,
so a failing run leaves nothing on disk.  Outputs embed the resolved
config; `validate --reproduce FILE` re-runs that embedded config and
compares bytes.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .bias import bias_scan, scale_family
from .clipping import BetaSpec, make_clipping
from .config import (ExperimentConfig, build_clip, build_kernel, from_dict,
                     load_config, to_dict, to_yaml)
from .densities import get_density, list_densities
from .errors import (BandwidthError, ClipKdeError, ClippingDomainError,
                     ConfigError, DensityRegistrationError, DimensionError,
                     InsufficientDataError, KernelConstructionError,
                     MomentOrderError, QuadratureError, RegionError,
                     ScheduleError, UnknownIdError, ZeroScaleError)
from .estimators import (classical_kde, draw_samples, ideal_abramson,
                         ideal_hhm, ideal_jkh, ideal_mckay, real_jkh,
                         real_mckay, schedule_for)
from .experiments import gap_experiment, rate_experiment
from .kernels import (kernel_eval, make_default_profile,
                      make_fourth_order_kernel, moments)
from .serialize import (atomic_write_text, bias_scan_to_csv, embedded_config,
                        field_to_csv, field_to_json, report_to_json,
                        report_to_plot_data, report_to_raw_csv,
                        report_to_summary_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNKNOWN_ID = 3
EXIT_REGION = 4
EXIT_MODE_DIM = 5
EXIT_NUMERIC = 6
EXIT_IO = 7

_EXIT_DOC = """exit codes:
  0  success
  2  config file missing, unparseable, or schema-invalid
  3  unknown estimator/density/kernel id
  4  invalid region (floor vs clipping threshold, empty mask)
  5  unsupported mode/dimension combination or bad schedule
  6  numeric failure (quadrature, bandwidth, scale, kernel construction)
  7  output files could not be written
"""

ENV_OUT_DIR = "CLIPKDE_OUT_DIR"


def _out_dir(args) -> Path:
    if args.out_dir is not None:
        return Path(args.out_dir)
    env = os.environ.get(ENV_OUT_DIR)
    return Path(env) if env else Path.cwd()


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else from_dict({})
    if args.seed is not None:
        doc = to_dict(cfg)
        doc["seed"] = args.seed
        cfg = from_dict(doc)
    return cfg


def _embed(cfg: ExperimentConfig, subcommand: str) -> dict:
    from .config import resolved_dict

    doc = resolved_dict(cfg)
    doc["subcommand"] = subcommand
    return doc


def _write_all(payload: dict[Path, str]) -> None:
    for path, text in payload.items():
        atomic_write_text(path, text)


def _fail(msg: str, code: int) -> int:
    print(json.dumps({"error": msg, "exit_code": code}), file=sys.stderr)
    return code


def _grid_for(density, points: int | None) -> np.ndarray:
    pts = points if points is not None else (1024 if density.dim == 1 else 128)
    axes = [np.linspace(lo, hi, pts) for lo, hi in density.grid_box]
    if density.dim == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, density.dim)


def _estimate_field(cfg: ExperimentConfig):
    density = get_density(cfg.density)
    kernel = build_kernel(cfg, density.dim)
    clip = build_clip(cfg)
    samples = draw_samples(density, cfg.n, cfg.seed)
    grid = _grid_for(density, cfg.grid_points)
    schedule = schedule_for(cfg.n, density.dim, cfg.mode)
    h = cfg.bandwidth if cfg.bandwidth is not None else schedule.h2
    est = cfg.estimator
    if est == "classical":
        h1 = cfg.bandwidth if cfg.bandwidth is not None else schedule.h1
        return classical_kde(samples, kernel, h1, grid)
    if est == "mckay_real":
        return real_mckay(samples, kernel, schedule, clip, grid)
    if est == "mckay_ideal":
        return ideal_mckay(samples, kernel, h, clip, density, grid)
    if est == "abramson_ideal":
        return ideal_abramson(samples, kernel, h, density, grid)
    if est == "hhm_ideal":
        B = cfg.hhm_B
        if B is None:
            B = float(np.sqrt(kernel.support)) / clip.c
        return ideal_hhm(samples, kernel, h, B, density, grid)
    if est == "jkh_ideal":
        table = moments(kernel, 4)
        bs = BetaSpec(clip, lambda x: density.pdf(x),
                      lambda x: density.deriv(x, 1),
                      lambda x: density.deriv(x, 2),
                      table.tau(2), table.tau(4))
        return ideal_jkh(samples, kernel, h, clip, bs, grid)
    if est == "jkh_real":
        if cfg.mode != "h6":
            raise ScheduleError("jkh_real needs mode: h6 in the config")
        G = make_fourth_order_kernel()
        return real_jkh(samples, kernel, G, schedule, clip, grid)
    raise UnknownIdError(f"unknown estimator {cfg.estimator!r} for estimate")


def cmd_estimate(args) -> int:
    cfg = _load(args)
    field = _estimate_field(cfg)
    embed = _embed(cfg, "estimate")
    base = _out_dir(args) / cfg.outputs["field"]
    if args.format == "json":
        payload = {base.with_suffix(".json"): field_to_json(field, embed)}
    else:
        payload = {base.with_suffix(".csv"): field_to_csv(field, embed)}
    _write_all(payload)
    print(f"wrote {', '.join(str(p) for p in payload)}")
    return EXIT_OK


def _report_payload(report, embed: dict, cfg: ExperimentConfig,
                    out: Path) -> dict[Path, str]:
    return {
        out / (cfg.outputs["report"] + ".json"): report_to_json(report, embed),
        out / (cfg.outputs["raw"] + ".csv"): report_to_raw_csv(report, embed),
        out / (cfg.outputs["summary"] + ".csv"):
            report_to_summary_csv(report, embed),
        out / (cfg.outputs["plot"] + ".dat"):
            report_to_plot_data(report, embed),
    }


def cmd_rates(args) -> int:
    cfg = _load(args)
    clip = build_clip(cfg)
    report = rate_experiment(cfg.estimator, cfg.density, cfg.n_values,
                             cfg.replications, cfg.seed, mode=cfg.mode,
                             r=cfg.region_r, clip_c=clip.c,
                             grid_points=cfg.grid_points, workers=args.workers)
    payload = _report_payload(report, _embed(cfg, "rates"), cfg,
                              _out_dir(args))
    _write_all(payload)
    print(f"slope {report.slope:.4f} over n = {list(report.n_values)}")
    print(f"wrote {', '.join(str(p) for p in payload)}")
    return EXIT_OK


def cmd_gap(args) -> int:
    cfg = _load(args)
    clip = build_clip(cfg)
    report = gap_experiment(cfg.density, cfg.n_values, cfg.replications,
                            cfg.seed, r=cfg.region_r, clip_c=clip.c,
                            grid_points=cfg.grid_points, workers=args.workers)
    payload = _report_payload(report, _embed(cfg, "gap"), cfg, _out_dir(args))
    _write_all(payload)
    med = ", ".join(f"{v:.5f}" for v in report.medians)
    print(f"gap medians: {med}")
    print(f"wrote {', '.join(str(p) for p in payload)}")
    return EXIT_OK


_FAMILY_OF = {"classical": "classical", "abramson_ideal": "sqrt-clip",
              "hhm_ideal": "sqrt-clip", "mckay_ideal": "sqrt-clip",
              "mckay_real": "sqrt-clip", "jkh_ideal": "corrected",
              "jkh_real": "corrected"}


def cmd_bias_scan(args) -> int:
    cfg = _load(args)
    density = get_density(cfg.density)
    if density.dim != 1:
        raise DimensionError("bias-scan is one-dimensional")
    kernel = build_kernel(cfg, 1)
    clip = build_clip(cfg)
    family = _FAMILY_OF.get(cfg.estimator)
    if family is None:
        raise UnknownIdError(
            f"unknown estimator {cfg.estimator!r} for bias-scan")
    scale_fn = scale_family(family, clip, density, kernel)
    h_grid = cfg.h_values if cfg.h_values is not None else tuple(
        float(v) for v in np.geomspace(0.05, 0.4, 8))
    rows, slopes = bias_scan(density, kernel, scale_fn, cfg.scan_points,
                             h_grid=h_grid)
    embed = _embed(cfg, "bias-scan")
    path = _out_dir(args) / (cfg.outputs["scan"] + ".csv")
    _write_all({path: bias_scan_to_csv(rows, slopes, embed)})
    for t, s in slopes.items():
        print(f"t = {t:g}: fitted slope {s:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_moments(args) -> int:
    cfg = _load(args)
    kernel = build_kernel(cfg, 1)
    table = moments(kernel, 4)
    for order in (0, 2, 4):
        print(f"tau{order} = {table.tau(order):.12f}")
    return EXIT_OK


def _check_norm(dim: int) -> bool:
    from scipy import integrate

    k = make_default_profile(dim)
    if dim == 1:
        val, _ = integrate.quad(lambda s: kernel_eval(k, np.array([[s]]))[0],
                                -1, 1)
    else:
        val, _ = integrate.dblquad(
            lambda y, x: kernel_eval(k, np.array([[x, y]]))[0],
            -1, 1, -1, 1)
    return abs(val - 1.0) < 1e-8


def _check_fourth() -> bool:
    from scipy import integrate

    G = make_fourth_order_kernel()
    ints = [integrate.quad(lambda z, i=i: z ** i * G(z), -1, 1)[0]
            for i in range(5)]
    return (abs(ints[0] - 1) < 1e-8 and all(abs(v) < 1e-8 for v in ints[1:4])
            and abs(ints[4]) > 1e-3)


def _check_registry() -> bool:
    return all(get_density(ident).ident == ident for ident in list_densities())


def _check_clip() -> bool:
    return make_clipping(0.1).smoothness_order >= 5


def _check_schedules() -> bool:
    s4 = schedule_for(1000, 1, "h4")
    s6 = schedule_for(1000, 1, "h6")
    q = np.log(1000) / 1000
    return (abs(s4.h1 - q ** 0.2) < 1e-15 and abs(s4.h2 - q ** (1 / 9)) < 1e-15
            and abs(s6.h2 - q ** (1 / 13)) < 1e-15)


_CHECKS = [
    ("kernel normalization d=1", lambda: _check_norm(1)),
    ("kernel normalization d=2", lambda: _check_norm(2)),
    ("fourth-order kernel moment gates", _check_fourth),
    ("registered densities resolvable", _check_registry),
    ("default clip taper smoothness", _check_clip),
    ("schedule formulas", _check_schedules),
]


def cmd_validate(args) -> int:
    if args.reproduce:
        return _reproduce(args)
    failures = 0
    for name, check in _CHECKS:
        try:
            ok = bool(check())
        except ClipKdeError:
            ok = False
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def _reproduce(args) -> int:
    """Re-run an output file's embedded config and compare bytes."""
    path = Path(args.reproduce)
    original = path.read_text()
    doc = embedded_config(original)
    sub = doc.pop("subcommand", None)
    runner = {"estimate": cmd_estimate, "rates": cmd_rates, "gap": cmd_gap,
              "bias-scan": cmd_bias_scan}.get(sub)
    if runner is None:
        return _fail(
            f"file was not produced by a reproducible subcommand ({sub!r})",
            EXIT_CONFIG)
    cfg = from_dict(doc)
    fmt = "json" if path.suffix == ".json" else "csv"
    with tempfile.TemporaryDirectory() as tmp:
        cfg_path = Path(tmp) / "reproduce.yaml"
        cfg_path.write_text(to_yaml(cfg))
        ns = argparse.Namespace(config=str(cfg_path), seed=None,
                                workers=args.workers, out_dir=tmp, format=fmt)
        runner(ns)
        candidate = Path(tmp) / path.name
        if not candidate.exists():
            return _fail(
                f"reproduction did not emit a file named {path.name}",
                EXIT_CONFIG)
        produced = candidate.read_text()
    if produced == original:
        print(f"PASS  {path.name} reproduced byte-identically")
        return EXIT_OK
    print(f"FAIL  {path.name} differs from reproduction")
    return EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipkde",
        description="Clipped variable-bandwidth kernel density estimation: "
                    "estimates, bias scans, and Monte Carlo rate reports.",
        epilog=_EXIT_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"clipkde {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config path")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel worker processes (default 1); "
                             "results are byte-identical for any value")
    common.add_argument("--out-dir",
                        help=f"output directory (default ${ENV_OUT_DIR} "
                             "or the working directory)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="estimate output format (default csv)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common],
                   help="evaluate one estimator on one seeded sample"
                   ).set_defaults(func=cmd_estimate)
    sub.add_parser("rates", parents=[common],
                   help="Monte Carlo sup-norm rate report"
                   ).set_defaults(func=cmd_rates)
    sub.add_parser("gap", parents=[common],
                   help="real-vs-ideal gap report"
                   ).set_defaults(func=cmd_gap)
    sub.add_parser("bias-scan", parents=[common],
                   help="deterministic bias table over (t, h)"
                   ).set_defaults(func=cmd_bias_scan)
    sub.add_parser("moments", parents=[common],
                   help="print default kernel moments"
                   ).set_defaults(func=cmd_moments)
    vp = sub.add_parser("validate", parents=[common],
                        help="run registration/kernel checks, or --reproduce "
                             "an output file from its embedded config")
    vp.add_argument("--reproduce", metavar="FILE",
                    help="re-run FILE's embedded config and compare bytes")
    vp.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except (UnknownIdError, DensityRegistrationError) as exc:
        return _fail(str(exc), EXIT_UNKNOWN_ID)
    except RegionError as exc:
        return _fail(str(exc), EXIT_REGION)
    except (ScheduleError, DimensionError) as exc:
        return _fail(str(exc), EXIT_MODE_DIM)
    except (QuadratureError, BandwidthError, ZeroScaleError,
            ClippingDomainError, KernelConstructionError, MomentOrderError,
            InsufficientDataError) as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    except ClipKdeError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    except OSError as exc:
        return _fail(str(exc), EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
