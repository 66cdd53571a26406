"""Region construction, sup-norm errors, and the convergence-rate harness.

Replications are independent work items keyed by (master seed, n, rep); a
counter-based generator makes each item's sample stream a pure function of
that key, so reports are bitwise identical for any worker count.  Error
aggregation uses medians over replications and regresses log(median error)
on log((log n)/n).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from .clipping import ClippingSpec, make_clipping
from .densities import DensityModel, get_density
from .errors import (ConfigError, DimensionError, QuadratureError, RegionError,
                     ScheduleError, UnknownIdError)
from .estimators import (BandwidthSchedule, EstimateField, classical_kde,
                         draw_samples, field_integral, ideal_jkh, ideal_mckay,
                         ideal_real_gap, padded_grid, preliminary_fit,
                         real_jkh, real_mckay, schedule_for, support_pad)
from .kernels import make_default_profile, make_fourth_order_kernel, moments

DEFAULT_R = 0.05
DEFAULT_T0 = 2.0
GRID_POINTS_1D = 1024
GRID_POINTS_2D = 128
INTEGRAL_POINTS_1D = 2049
INTEGRAL_POINTS_2D = 129
INTEGRAL_TOL = {1: 1e-6, 2: 1e-4}

RATE_ESTIMATORS = ("classical", "mckay_real", "jkh_real")


def default_clip_constant(r: float, t0: float = DEFAULT_T0) -> float:
    """Harness clip floor keeping t0 c^2 = 2r/5, well below the region floor.

    At the default r = 0.05 this puts the taper threshold at 0.02, so the
    square-root identity is active with margin on the whole region even for
    preliminary fits that wobble below r near the region edge.
    """
    return float(np.sqrt(0.4 * r / t0))


@dataclass(frozen=True, eq=False)
class Region:
    """Boolean mask over an evaluation grid.

    kind "oracle" keeps points with f(t) > r; kind "estimated" keeps points
    with a preliminary fit above 2r.  Both intersect with |t| < 1/r.
    """

    kind: str
    r: float
    grid: np.ndarray
    mask: np.ndarray


def build_region(kind: str, source, r: float, clip: ClippingSpec | None,
                 grid) -> Region:
    """Region from a density (oracle) or a preliminary fit field (estimated).

    The defining inequality of the oracle region requires the floor r to
    sit above the clipping threshold t0 c^2, so the square-root identity is
    active throughout; violating that is a RegionError.  The estimated kind
    takes an EstimateField holding the preliminary classical fit on the
    same grid and keeps points where it exceeds 2r.
    """
    if not r > 0:
        raise RegionError(f"region floor must be positive, got {r}")
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    norms = np.sqrt(np.einsum("ij,ij->i", g, g))
    box = norms < 1.0 / r
    if kind == "oracle":
        if not isinstance(source, DensityModel):
            raise RegionError("oracle region needs a DensityModel")
        if clip is not None and not r > clip.t0 * clip.c ** 2:
            raise RegionError(
                f"r = {r} must exceed the clipping threshold "
                f"t0 c^2 = {clip.t0 * clip.c ** 2:.6g}")
        vals = np.asarray(source.pdf(g[:, 0] if g.shape[1] == 1 else g),
                          dtype=float)
        mask = (vals > r) & box
    elif kind == "estimated":
        if not isinstance(source, EstimateField):
            raise RegionError("estimated region needs a preliminary-fit field")
        if source.grid.shape != g.shape or not np.array_equal(source.grid, g):
            raise RegionError("preliminary fit grid does not match region grid")
        if clip is not None and not 2.0 * r > clip.t0 * clip.c ** 2:
            raise RegionError(
                f"2r = {2 * r} must exceed the clipping threshold "
                f"t0 c^2 = {clip.t0 * clip.c ** 2:.6g}")
        mask = (source.values > 2.0 * r) & box
    else:
        raise RegionError(f"unknown region kind {kind!r}")
    return Region(kind, float(r), g, mask)


def sup_error(field: EstimateField, density: DensityModel, region: Region) -> float:
    """Max over the region mask of |field - f|."""
    if field.grid.shape != region.grid.shape or not np.array_equal(field.grid,
                                                                   region.grid):
        raise DimensionError("field and region are on different grids")
    if not np.any(region.mask):
        raise RegionError("region mask is empty")
    g = region.grid[:, 0] if region.grid.shape[1] == 1 else region.grid
    ref = np.asarray(density.pdf(g), dtype=float)
    return float(np.max(np.abs(field.values[region.mask] - ref[region.mask])))


@dataclass(frozen=True, eq=False)
class RateReport:
    """Aggregated Monte Carlo errors and the fitted log-log slope."""

    quantity: str
    estimator_id: str
    density_id: str
    mode: str
    n_values: tuple[int, ...]
    raw_errors: np.ndarray
    medians: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    slope: float
    intercept: float
    replications: int
    master_seed: int
    r: float
    clip_c: float
    clamp_events: int
    max_integral_dev: float


def _region_axes(density: DensityModel, points: int) -> tuple[np.ndarray, ...]:
    return tuple(np.linspace(lo, hi, points) for lo, hi in density.grid_box)


def _flat_grid(axes: tuple[np.ndarray, ...]) -> np.ndarray:
    if len(axes) == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(axes))


def _rep_seed(master_seed: int, n: int, rep: int) -> int:
    ss = np.random.SeedSequence((int(master_seed), int(n), int(rep)))
    return int(ss.generate_state(1, np.uint64)[0])


def _one_replication(args: tuple) -> tuple[float, float, float, int]:
    (density_id, estimator_id, mode, n, rep, master_seed, r, c,
     grid_points, want_gap) = args
    density = get_density(density_id)
    kernel = make_default_profile(density.dim)
    clip = make_clipping(c)
    samples = draw_samples(density, n, _rep_seed(master_seed, n, rep))
    schedule = schedule_for(n, density.dim, mode)
    axes = _region_axes(density, grid_points)
    grid = _flat_grid(axes)
    region = build_region("oracle", density, r, clip, grid)
    clamped = 0
    gap = float("nan")
    integral_dev = 0.0
    scaled_method = "grid" if density.dim == 1 else "auto"
    if estimator_id == "classical":
        field = classical_kde(samples, kernel, schedule.h1, grid)
    elif estimator_id == "mckay_real":
        fit = preliminary_fit(samples, kernel, schedule)
        field = real_mckay(samples, kernel, schedule, clip, grid,
                           method=scaled_method, fit=fit)
        if want_gap:
            ideal = ideal_mckay(samples, kernel, schedule.h2, clip, density,
                                grid, method=scaled_method)
            gap = ideal_real_gap(ideal, field)
        integral_dev = _integral_deviation(samples, kernel, schedule, clip, fit,
                                           scaled_method)
    elif estimator_id == "jkh_real":
        G = make_fourth_order_kernel()
        fit = preliminary_fit(samples, kernel, schedule, G)
        field = real_jkh(samples, kernel, G, schedule, clip, grid,
                         method=scaled_method, fit=fit)
        clamped = int(field.metadata["clamped"])
        if want_gap:
            from .clipping import BetaSpec

            table = moments(kernel, 4)
            bs = BetaSpec(clip, lambda x: density.pdf(x),
                          lambda x: density.deriv(x, 1),
                          lambda x: density.deriv(x, 2),
                          table.tau(2), table.tau(4))
            ideal = ideal_jkh(samples, kernel, schedule.h2, clip, bs, grid,
                              method=scaled_method)
            gap = ideal_real_gap(ideal, field)
    else:
        raise UnknownIdError(f"unknown rate estimator {estimator_id!r}")
    err = sup_error(field, density, region)
    if not np.isfinite(err):
        raise QuadratureError(f"sup error is not finite at n={n}, rep={rep}")
    return float(err), float(gap), float(integral_dev), clamped


def _integral_deviation(samples, kernel, schedule: BandwidthSchedule,
                        clip: ClippingSpec, fit, method: str = "auto") -> float:
    pad = support_pad(kernel, schedule.h2, clip.c)
    points = INTEGRAL_POINTS_1D if samples.dim == 1 else INTEGRAL_POINTS_2D
    grid, axes = padded_grid(samples, pad, points)
    refit = real_mckay(samples, kernel, schedule, clip, grid, method=method,
                       fit=fit)
    dev = abs(field_integral(refit, axes) - 1.0)
    tol = INTEGRAL_TOL[samples.dim]
    if dev > tol:
        raise QuadratureError(
            f"estimate integrates to 1 {'+' if dev > 0 else '-'} {dev:.3g}, "
            f"beyond the {tol:g} tolerance")
    return float(dev)


def _validate_harness_args(estimator_id: str, n_values, replications: int,
                           mode: str) -> tuple[int, ...]:
    if estimator_id not in RATE_ESTIMATORS:
        raise UnknownIdError(
            f"unknown rate estimator {estimator_id!r}; known: {RATE_ESTIMATORS}")
    ns = tuple(int(v) for v in n_values)
    if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n_values must be increasing with at least 3 entries")
    if replications < 1:
        raise ConfigError("need at least one replication")
    if estimator_id == "jkh_real" and mode != "h6":
        raise ScheduleError("jkh_real runs on the h6 schedule")
    if estimator_id in ("classical", "mckay_real") and mode != "h4":
        raise ScheduleError(f"{estimator_id} runs on the h4 schedule")
    return ns


def _harness(estimator_id: str, density_id: str, n_values, replications: int,
             seed: int, mode: str, r: float, clip_c: float | None,
             grid_points: int | None, workers: int,
             want_gap: bool) -> tuple[np.ndarray, np.ndarray, float, int, float]:
    ns = _validate_harness_args(estimator_id, n_values, replications, mode)
    density = get_density(density_id)
    if mode == "h6" and density.dim != 1:
        raise ScheduleError("the h6 schedule is one-dimensional")
    c = default_clip_constant(r) if clip_c is None else float(clip_c)
    if grid_points is None:
        grid_points = GRID_POINTS_1D if density.dim == 1 else GRID_POINTS_2D
    tasks = [(density_id, estimator_id, mode, n, rep, int(seed), float(r), c,
              int(grid_points), want_gap)
             for n in ns for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_replication, tasks, chunksize=1))
    else:
        results = [_one_replication(t) for t in tasks]
    errs = np.array([res[0] for res in results]).reshape(len(ns), replications)
    gaps = np.array([res[1] for res in results]).reshape(len(ns), replications)
    max_dev = float(max(res[2] for res in results))
    clamps = int(sum(res[3] for res in results))
    return errs, gaps, max_dev, clamps, c


def _fit_report(quantity: str, estimator_id: str, density_id: str, mode: str,
                ns: tuple[int, ...], raw: np.ndarray, replications: int,
                seed: int, r: float, c: float, clamps: int,
                max_dev: float) -> RateReport:
    medians = np.median(raw, axis=1)
    q25 = np.quantile(raw, 0.25, axis=1)
    q75 = np.quantile(raw, 0.75, axis=1)
    logq = np.log(np.log(np.array(ns, dtype=float)) / np.array(ns, dtype=float))
    slope, intercept = np.polyfit(logq, np.log(medians), 1)
    return RateReport(quantity, estimator_id, density_id, mode, ns, raw,
                      medians, q25, q75, float(slope), float(intercept),
                      replications, int(seed), float(r), float(c), clamps,
                      max_dev)


def rate_experiment(estimator_id: str, density_id: str, n_values,
                    replications: int, seed: int, mode: str = "h4",
                    r: float = DEFAULT_R, clip_c: float | None = None,
                    grid_points: int | None = None,
                    workers: int = 1) -> RateReport:
    """Sup-norm errors over the oracle region across a ladder of sample sizes.

    Every replication draws its own sample from a (seed, n, rep)-keyed
    stream, builds the deterministic schedule, and measures the sup error
    over the oracle region; the report carries the fitted slope of
    log(median error) against log((log n)/n).
    """
    ns = _validate_harness_args(estimator_id, n_values, replications, mode)
    errs, _gaps, max_dev, clamps, c = _harness(
        estimator_id, density_id, ns, replications, seed, mode, r, clip_c,
        grid_points, workers, want_gap=False)
    return _fit_report("sup_error", estimator_id, density_id, mode, ns, errs,
                       replications, seed, r, c, clamps, max_dev)


def gap_experiment(density_id: str, n_values, replications: int, seed: int,
                   r: float = DEFAULT_R, clip_c: float | None = None,
                   grid_points: int | None = None,
                   workers: int = 1) -> RateReport:
    """Sup over the full grid of |real - ideal| for the two-stage estimator."""
    ns = _validate_harness_args("mckay_real", n_values, replications, "h4")
    _errs, gaps, max_dev, clamps, c = _harness(
        "mckay_real", density_id, ns, replications, seed, "h4", r, clip_c,
        grid_points, workers, want_gap=True)
    return _fit_report("gap", "mckay_real", density_id, "h4", ns, gaps,
                       replications, seed, r, c, clamps, max_dev)


def rate_and_gap(density_id: str, n_values, replications: int, seed: int,
                 r: float = DEFAULT_R, clip_c: float | None = None,
                 grid_points: int | None = None,
                 workers: int = 1) -> tuple[RateReport, RateReport]:
    """Rate and gap reports for the two-stage estimator from one shared pass."""
    ns = _validate_harness_args("mckay_real", n_values, replications, "h4")
    errs, gaps, max_dev, clamps, c = _harness(
        "mckay_real", density_id, ns, replications, seed, "h4", r, clip_c,
        grid_points, workers, want_gap=True)
    rate = _fit_report("sup_error", "mckay_real", density_id, "h4", ns, errs,
                       replications, seed, r, c, clamps, max_dev)
    gap = _fit_report("gap", "mckay_real", density_id, "h4", ns, gaps,
                      replications, seed, r, c, clamps, max_dev)
    return rate, gap


def _one_containment(args: tuple) -> bool:
    density_id, n, rep, master_seed, r, c, grid_points = args
    density = get_density(density_id)
    kernel = make_default_profile(density.dim)
    clip = make_clipping(c)
    samples = draw_samples(density, n, _rep_seed(master_seed, n, rep))
    schedule = schedule_for(n, density.dim, "h4")
    axes = _region_axes(density, grid_points)
    grid = _flat_grid(axes)
    fit = classical_kde(samples, kernel, schedule.h1, grid)
    est = build_region("estimated", fit, r, clip, grid)
    oracle = build_region("oracle", density, r, clip, grid)
    return bool(np.all(oracle.mask[est.mask]))


def containment_experiment(density_id: str, n: int, replications: int,
                           seed: int, r: float = DEFAULT_R,
                           clip_c: float | None = None,
                           grid_points: int | None = None,
                           workers: int = 1) -> np.ndarray:
    """Per-replication indicator that the estimated region sits inside the
    oracle region for the same floor r."""
    density = get_density(density_id)
    c = default_clip_constant(r) if clip_c is None else float(clip_c)
    if grid_points is None:
        grid_points = GRID_POINTS_1D if density.dim == 1 else GRID_POINTS_2D
    tasks = [(density_id, int(n), rep, int(seed), float(r), c, int(grid_points))
             for rep in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_containment, tasks, chunksize=1))
    else:
        results = [_one_containment(t) for t in tasks]
    return np.array(results, dtype=bool)
