"""Density estimators: classical, square-root-law variants, and plug-ins.

All estimators share three engineering contracts.  Samples are sorted
lexicographically once at ingestion, so any permutation of the same data
produces bitwise-identical output.  Sums are evaluated by the fastsum
engines, which accumulate in canonical sample order.  Every estimator
returns an EstimateField carrying enough metadata to reproduce it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import fastsum
from .clipping import BetaSpec, ClippingSpec, alpha, gamma_h6
from .densities import DensityModel
from .errors import (BandwidthError, DimensionError, InsufficientDataError,
                     ScheduleError, ZeroScaleError)
from .kernels import FourthOrderKernelSpec, RadialKernelSpec, as_points, moments

_P = np.polynomial.polynomial

ESTIMATOR_IDS = ("classical", "abramson_ideal", "hhm_ideal", "mckay_ideal",
                 "mckay_real", "jkh_ideal", "jkh_real", "deriv1", "deriv2")

DENSITY_ESTIMATOR_IDS = ("classical", "abramson_ideal", "hhm_ideal",
                         "mckay_ideal", "mckay_real", "jkh_ideal", "jkh_real")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Immutable observations, sorted lexicographically at construction."""

    points: np.ndarray
    dim: int
    n: int
    source: str | None = None
    seed: int | None = None


def make_sample_set(points, dim: int | None = None, source: str | None = None,
                    seed: int | None = None) -> SampleSet:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if (dim is None or dim == 1) else pts[None, :]
    if pts.ndim != 2:
        raise DimensionError(f"samples must be (n, d), got shape {pts.shape}")
    if dim is not None and pts.shape[1] != dim:
        raise DimensionError(f"expected dimension {dim}, got {pts.shape[1]}")
    if pts.shape[0] < 1:
        raise InsufficientDataError("need at least one observation")
    if not np.all(np.isfinite(pts)):
        raise DimensionError("observations must be finite")
    order = np.lexsort(tuple(pts[:, j] for j in reversed(range(pts.shape[1]))))
    pts = np.ascontiguousarray(pts[order])
    pts.setflags(write=False)
    return SampleSet(pts, pts.shape[1], pts.shape[0], source, seed)


def draw_samples(density: DensityModel, n: int, seed: int) -> SampleSet:
    return make_sample_set(density.sampler(int(seed), int(n)), dim=density.dim,
                           source=density.ident, seed=int(seed))


@dataclass(frozen=True)
class BandwidthSchedule:
    """Role-tagged bandwidths derived from a sample size.

    h1 feeds the preliminary classical fit, h2 the final smoothing, h3 and
    h4 the first- and second-derivative estimates (h6 mode only).
    """

    h1: float
    h2: float
    h3: float | None
    h4: float | None
    n: int
    dim: int
    mode: str


def schedule_for(n: int, d: int, mode: str = "h4") -> BandwidthSchedule:
    """Deterministic bandwidth schedules.

    h4 mode: h1 = ((log n)/n)^{1/(4+d)}, h2 = ((log n)/n)^{1/(8+d)}.
    h6 mode (d = 1): h1 at exponent 1/5, h2 = h4 at 1/13, h3 at 1/11.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ScheduleError(f"need integer n >= 2, got {n!r}")
    if mode not in ("h4", "h6"):
        raise ScheduleError(f"unknown schedule mode {mode!r}")
    if mode == "h6" and d != 1:
        raise ScheduleError("the h6 schedule is one-dimensional")
    q = np.log(n) / n
    if mode == "h4":
        return BandwidthSchedule(float(q ** (1.0 / (4 + d))),
                                 float(q ** (1.0 / (8 + d))),
                                 None, None, int(n), int(d), mode)
    return BandwidthSchedule(float(q ** (1.0 / 5.0)), float(q ** (1.0 / 13.0)),
                             float(q ** (1.0 / 11.0)), float(q ** (1.0 / 13.0)),
                             int(n), int(d), mode)


@dataclass(frozen=True, eq=False)
class EstimateField:
    """Estimator values over a grid plus reproduction metadata."""

    grid: np.ndarray
    values: np.ndarray
    estimator_id: str
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PreliminaryFit:
    """Plug-in inputs evaluated at the sample points themselves."""

    fhat_at_samples: np.ndarray
    deriv1_at_samples: np.ndarray | None = None
    deriv2_at_samples: np.ndarray | None = None


def _check_grid(samples: SampleSet, grid) -> np.ndarray:
    g = as_points(grid, samples.dim)
    if g.shape[1] != samples.dim:
        raise DimensionError(
            f"grid dimension {g.shape[1]} does not match samples ({samples.dim})")
    return g


def _field_meta(samples: SampleSet, kernel, **extra) -> dict[str, Any]:
    meta: dict[str, Any] = {"n": samples.n, "d": samples.dim,
                            "kernel": getattr(kernel, "ident", None),
                            "source": samples.source, "seed": samples.seed}
    meta.update(extra)
    return meta


def _classical_values(samples: SampleSet, kernel: RadialKernelSpec, h: float,
                      targets: np.ndarray, method: str = "auto") -> np.ndarray:
    if kernel.dim != samples.dim:
        raise DimensionError(
            f"kernel dimension {kernel.dim} does not match samples ({samples.dim})")
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    pref = kernel.normalization / (samples.n * h ** samples.dim)
    if samples.dim == 1:
        # grid/cells are scaled-engine names; stage-one targets are samples
        if method in ("grid", "cells"):
            method = "auto"
        scoeffs = fastsum.profile_scoeffs(kernel.profile_coeffs, h)
        radius = h * kernel.radius()
        sums = fastsum.poly_sum(samples.points[:, 0], None, targets[:, 0],
                                scoeffs, radius, method=method)
    else:
        if method in ("grid", "block", "window"):
            method = "auto"
        sums = fastsum.scaled_sum(samples.points, np.ones(samples.n), None,
                                  targets, kernel.profile_coeffs, kernel.support,
                                  h, method=method)
    return pref * sums


def classical_kde(samples: SampleSet, kernel: RadialKernelSpec, h: float,
                  grid, method: str = "auto") -> EstimateField:
    """Fixed-bandwidth kernel density estimate on a grid."""
    g = _check_grid(samples, grid)
    vals = _classical_values(samples, kernel, h, g, method)
    return EstimateField(g, vals, "classical",
                         _field_meta(samples, kernel, h=float(h)))


def _scaled_values(samples: SampleSet, kernel: RadialKernelSpec, h: float,
                   scales: np.ndarray, targets: np.ndarray,
                   method: str = "auto") -> np.ndarray:
    pref = kernel.normalization / (samples.n * h ** samples.dim)
    pts = samples.points[:, 0] if samples.dim == 1 else samples.points
    sums = fastsum.scaled_sum(pts, scales, scales ** samples.dim, targets,
                              kernel.profile_coeffs, kernel.support, h,
                              method=method)
    return pref * sums


def ideal_mckay(samples: SampleSet, kernel: RadialKernelSpec, h: float,
                clip: ClippingSpec, density: DensityModel, grid,
                method: str = "auto") -> EstimateField:
    """Square-root-law estimator with the smooth clip and the true density.

    Each observation contributes a kernel bump scaled by
    a_i = alpha(f(X_i)); the a_i^d weight keeps every summand a probability
    density, so the whole estimate integrates to one.
    """
    g = _check_grid(samples, grid)
    if kernel.dim != samples.dim or density.dim != samples.dim:
        raise DimensionError("kernel, density, and samples must share a dimension")
    fx = np.asarray(density.pdf(_points_arg(samples)), dtype=float)
    scales = alpha(clip, fx)
    vals = _scaled_values(samples, kernel, h, scales, g, method)
    return EstimateField(g, vals, "mckay_ideal",
                         _field_meta(samples, kernel, h=float(h), clip=clip.ident,
                                     density=density.ident))


def _points_arg(samples: SampleSet) -> np.ndarray:
    return samples.points[:, 0] if samples.dim == 1 else samples.points


def real_mckay(samples: SampleSet, kernel: RadialKernelSpec,
               schedule: BandwidthSchedule, clip: ClippingSpec, grid,
               method: str = "auto",
               fit: PreliminaryFit | None = None) -> EstimateField:
    """Two-stage plug-in: classical preliminary fit, then the scaled sum.

    The preliminary estimate at each X_i includes the i-th term itself.
    Passing a precomputed fit skips stage one; callers evaluating the same
    sample on several grids share it.
    """
    if schedule.mode != "h4":
        raise ScheduleError("real_mckay expects an h4-mode schedule")
    if schedule.dim != samples.dim:
        raise DimensionError("schedule dimension does not match samples")
    g = _check_grid(samples, grid)
    if fit is None:
        fhat = _classical_values(samples, kernel, schedule.h1, samples.points,
                                 method)
    else:
        fhat = fit.fhat_at_samples
    scales = alpha(clip, fhat)
    vals = _scaled_values(samples, kernel, schedule.h2, scales, g, method)
    meta = _field_meta(samples, kernel, h1=schedule.h1, h2=schedule.h2,
                       clip=clip.ident, min_scale=float(np.min(scales)))
    return EstimateField(g, vals, "mckay_real", meta)


def preliminary_fit(samples: SampleSet, kernel: RadialKernelSpec,
                    schedule: BandwidthSchedule,
                    G: FourthOrderKernelSpec | None = None,
                    method: str = "auto") -> PreliminaryFit:
    """Classical fit at the samples; adds derivative fits in h6 mode."""
    fhat = _classical_values(samples, kernel, schedule.h1, samples.points, method)
    if schedule.mode != "h6":
        return PreliminaryFit(fhat)
    if G is None:
        raise ScheduleError("h6 preliminary fit needs a fourth-order kernel")
    d1, d2 = deriv_estimates(samples, G, schedule.h3, schedule.h4,
                             samples.points, method=method)
    return PreliminaryFit(fhat, d1, d2)


def ideal_abramson(samples: SampleSet, kernel: RadialKernelSpec, h: float,
                   density: DensityModel, grid) -> EstimateField:
    """Square-root law with the hard per-pair clip max(f(X_i), f(t)/10).

    The pair scale depends on the evaluation point, so this estimator is
    computed by chunked dense evaluation; it is a reference object, not a
    production path.  Pairs whose scale is zero contribute nothing unless
    the evaluation point coincides with the observation, which is an error.
    """
    g = _check_grid(samples, grid)
    if kernel.dim != samples.dim or density.dim != samples.dim:
        raise DimensionError("kernel, density, and samples must share a dimension")
    x = samples.points
    fx = np.asarray(density.pdf(_points_arg(samples)), dtype=float)
    coeffs = np.asarray(kernel.profile_coeffs, dtype=float)
    out = np.empty(g.shape[0])
    chunk = max(1, int(2_000_000 // max(1, samples.n)))
    for start in range(0, g.shape[0], chunk):
        gc = g[start:start + chunk]
        ft = np.asarray(density.pdf(gc[:, 0] if samples.dim == 1 else gc),
                        dtype=float)
        gam2 = np.maximum(fx[None, :], ft[:, None] / 10.0)
        d = gc[:, None, :] - x[None, :, :]
        dist2 = np.einsum("mnd,mnd->mn", d, d)
        zero = gam2 <= 0.0
        if np.any(zero & (dist2 == 0.0)):
            raise ZeroScaleError(
                "evaluation point coincides with an observation of zero scale")
        u = dist2 * gam2 / (h * h)
        inside = (u <= kernel.support) & ~zero
        vals = _P.polyval(np.where(inside, u, 0.0), coeffs)
        vals *= inside
        vals *= np.where(zero, 0.0, gam2) ** (samples.dim / 2.0)
        out[start:start + chunk] = np.sum(vals, axis=1)
    pref = kernel.normalization / (samples.n * h ** samples.dim)
    return EstimateField(g, pref * out, "abramson_ideal",
                         _field_meta(samples, kernel, h=float(h),
                                     density=density.ident))


def ideal_hhm(samples: SampleSet, kernel: RadialKernelSpec, h: float, B: float,
              density: DensityModel, grid) -> EstimateField:
    """Truncated square-root law: scale sqrt(f(X_i)), cut at |t - X_i| < hB."""
    if samples.dim != 1:
        raise DimensionError("the truncated estimator is one-dimensional")
    if not B > 0:
        raise BandwidthError(f"truncation constant must be positive, got {B}")
    g = _check_grid(samples, grid)
    fx = np.asarray(density.pdf(samples.points[:, 0]), dtype=float)
    s = np.sqrt(fx)
    keep = s > 0.0
    x = samples.points[keep, 0]
    sk = s[keep]
    if x.size == 0:
        vals = np.zeros(g.shape[0])
    else:
        vals = fastsum.scaled_sum(x, sk, sk, g[:, 0], kernel.profile_coeffs,
                                  kernel.support, h, hard_radius=h * float(B))
    pref = kernel.normalization / (samples.n * h)
    return EstimateField(g, pref * vals, "hhm_ideal",
                         _field_meta(samples, kernel, h=float(h), B=float(B),
                                     density=density.ident))


def ideal_jkh(samples: SampleSet, kernel: RadialKernelSpec, h: float,
              clip: ClippingSpec, beta_spec: BetaSpec, grid,
              method: str = "auto") -> EstimateField:
    """Corrected-scale estimator using the true density in the correction."""
    if samples.dim != 1:
        raise DimensionError("the corrected estimator is one-dimensional")
    g = _check_grid(samples, grid)
    scales = gamma_h6(beta_spec, samples.points[:, 0], h)
    vals = _scaled_values(samples, kernel, h, scales, g, method)
    return EstimateField(g, vals, "jkh_ideal",
                         _field_meta(samples, kernel, h=float(h), clip=clip.ident))


def deriv_estimates(samples: SampleSet, G: FourthOrderKernelSpec, h3: float,
                    h4: float, at, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Plug-in first and second density derivatives via the fourth-order kernel.

    Returns sums of G'((x - X_i)/h3) / (n h3^2) and G''((x - X_i)/h4) / (n h4^3).
    """
    if samples.dim != 1:
        raise DimensionError("derivative estimation is one-dimensional")
    if not (h3 > 0 and h4 > 0):
        raise BandwidthError("derivative bandwidths must be positive")
    targets = as_points(at, 1)[:, 0]
    x = samples.points[:, 0]
    g1 = _P.polyder(G.poly_coeffs, 1)
    g2 = _P.polyder(G.poly_coeffs, 2)
    s1 = fastsum.poly_sum(x, None, targets, fastsum.zpoly_scoeffs(g1, h3),
                          h3 * G.radius(), method=method)
    s2 = fastsum.poly_sum(x, None, targets, fastsum.zpoly_scoeffs(g2, h4),
                          h4 * G.radius(), method=method)
    return s1 / (samples.n * h3 ** 2), s2 / (samples.n * h4 ** 3)


def real_jkh(samples: SampleSet, kernel: RadialKernelSpec,
             G: FourthOrderKernelSpec, schedule: BandwidthSchedule,
             clip: ClippingSpec, grid, method: str = "auto",
             correction_bandwidth: float | None = None,
             fit: PreliminaryFit | None = None) -> EstimateField:
    """Four-bandwidth plug-in with the curvature-corrected scale.

    The per-sample scale is alpha(fhat) / (1 + h2^2 betahat) with betahat
    assembled from the preliminary density and derivative fits.  Samples
    whose corrected scale leaves [c/2, 2 max alpha-hat] (in particular any
    with a nonpositive denominator) are clamped to that interval and
    counted in metadata["clamped"]; healthy runs clamp nothing.

    correction_bandwidth overrides the h2 used inside the correction factor
    only; 0 switches the correction off, reducing this to the two-stage
    plug-in with the same h1 and final h2.
    """
    if schedule.mode != "h6":
        raise ScheduleError("real_jkh expects an h6-mode schedule")
    if samples.dim != 1:
        raise DimensionError("the corrected estimator is one-dimensional")
    g = _check_grid(samples, grid)
    if fit is None:
        fit = preliminary_fit(samples, kernel, schedule, G, method=method)
    elif fit.deriv1_at_samples is None or fit.deriv2_at_samples is None:
        raise ScheduleError("precomputed fit lacks derivative estimates")
    table = moments(kernel, 4)
    ahat = alpha(clip, fit.fhat_at_samples)
    betahat = (table.tau(4)
               * (fit.deriv2_at_samples * fit.fhat_at_samples
                  - 2.0 * fit.deriv1_at_samples ** 2)
               / (24.0 * table.tau(2) * ahat ** 6))
    hc = schedule.h2 if correction_bandwidth is None else float(correction_bandwidth)
    denom = 1.0 + hc * hc * betahat
    hi = 2.0 * float(np.max(ahat))
    lo = clip.c / 2.0
    raw = np.where(denom > 0.0, ahat / np.where(denom > 0.0, denom, 1.0), np.inf)
    scales = np.clip(raw, lo, hi)
    clamped = int(np.count_nonzero(scales != raw))
    vals = _scaled_values(samples, kernel, schedule.h2, scales, g, method)
    meta = _field_meta(samples, kernel, h1=schedule.h1, h2=schedule.h2,
                       h3=schedule.h3, h4=schedule.h4, clip=clip.ident,
                       G=G.ident, clamped=clamped,
                       min_scale=float(np.min(scales)))
    return EstimateField(g, vals, "jkh_real", meta)


def ideal_real_gap(ideal: EstimateField, real: EstimateField) -> float:
    """Sup over the common grid of |real - ideal|."""
    if ideal.grid.shape != real.grid.shape or not np.array_equal(ideal.grid,
                                                                 real.grid):
        raise DimensionError("fields are on different grids")
    return float(np.max(np.abs(real.values - ideal.values)))


def padded_grid(samples: SampleSet, pad: float, points_per_axis: int):
    """Uniform grid covering the data hull extended by pad on every side.

    Returns (grid, axes): grid is (m, d) points in row-major axis order,
    axes the per-axis coordinate arrays.
    """
    if not pad >= 0:
        raise BandwidthError(f"pad must be nonnegative, got {pad}")
    axes = []
    for j in range(samples.dim):
        lo = float(np.min(samples.points[:, j])) - pad
        hi = float(np.max(samples.points[:, j])) + pad
        axes.append(np.linspace(lo, hi, int(points_per_axis)))
    if samples.dim == 1:
        return axes[0][:, None], tuple(axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, samples.dim), tuple(axes)


def field_integral(field_: EstimateField, axes) -> float:
    """Simpson quadrature of a field sampled on a product grid."""
    from scipy.integrate import simpson

    if len(axes) == 1:
        return float(simpson(field_.values, x=axes[0]))
    shape = tuple(a.size for a in axes)
    vals = field_.values.reshape(shape)
    inner = simpson(vals, x=axes[1], axis=1)
    return float(simpson(inner, x=axes[0]))


def support_pad(kernel: RadialKernelSpec, h: float, min_scale: float) -> float:
    """Distance beyond which no kernel bump of scale >= min_scale reaches."""
    if not min_scale > 0:
        raise ZeroScaleError("minimum scale must be positive")
    return float(h) * kernel.radius() / float(min_scale)
