"""Deterministic bias oracle for the ideal estimators.

expected_ideal computes E fbar(t; h) = int gamma(s)^d h^{-d}
K((t - s) gamma(s) / h) f(s) ds by adaptive quadrature.  bias_coefficients
computes the even-order expansion coefficients

    a_{2k}(t) = sum_{|v| = 2k} (tau_v / v!) D_v (f / gamma^{2k})(t)

using truncated Taylor (jet) arithmetic over the density's analytic
derivatives, so no finite differencing enters.  For the h-coupled corrected
scale the reported coefficients are the effective ones after the correction
bandwidth is tied to the smoothing bandwidth; the first two of them cancel
structurally, which is the whole point of that estimator.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb, factorial
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .clipping import ClipSmoothnessWarning, ClippingSpec, MAX_PROBE_ORDER, alpha
from .densities import DensityModel
from .errors import (BandwidthError, DimensionError, InsufficientDataError,
                     MomentOrderError, QuadratureError, UnknownIdError)
from .kernels import RadialKernelSpec, moments

SCALE_FAMILIES = ("classical", "sqrt-clip", "corrected")

DEFAULT_H_GRID = tuple(np.geomspace(0.05, 0.4, 8))

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
BIAS_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# univariate jet arithmetic: arrays of Taylor coefficients around one point


def _jmul(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    return np.convolve(a, b)[: K + 1]


def _jrecip(a: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros(K + 1)
    out[0] = 1.0 / a[0]
    for k in range(1, K + 1):
        out[k] = -np.dot(a[1 : k + 1], out[k - 1 :: -1]) / a[0]
    return out


def _jsqrt(a: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros(K + 1)
    out[0] = np.sqrt(a[0])
    for k in range(1, K + 1):
        inner = np.dot(out[1:k], out[k - 1 : 0 : -1]) if k >= 2 else 0.0
        out[k] = (a[k] - inner) / (2.0 * out[0])
    return out


def _jpoly(coeffs, a: np.ndarray, K: int) -> np.ndarray:
    # Horner composition P(a) in the jet ring
    out = np.zeros(K + 1)
    out[0] = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        out = _jmul(out, a, K)
        out[0] += c
    return out


def _f_jet(density: DensityModel, t: float, K: int, base_order: int = 0) -> np.ndarray:
    """Jet of the base_order-th derivative of f at t, to jet order K."""
    need = K + base_order
    if need > 6:
        raise MomentOrderError(
            f"jet of order {K} over derivative {base_order} needs density "
            f"derivatives to order {need}, beyond the available 6")
    return np.array([density.deriv(np.array([t]), base_order + j)[0]
                     / factorial(j) for j in range(K + 1)])


def _alpha_jet(clip: ClippingSpec, fj: np.ndarray, K: int) -> np.ndarray:
    """Jet of alpha(f(x)) = c * sqrt(p(f(x)/c^2)) from the jet of f."""
    c2 = clip.c ** 2
    arg = fj / c2
    piece = int(np.searchsorted(clip.taper.breaks, arg[0], side="right"))
    pj = _jpoly(clip.taper.coeffs[piece], arg, K)
    return clip.c * _jsqrt(pj, K)


def _beta_jet(density: DensityModel, clip: ClippingSpec, t: float, K: int,
              tau2: float, tau4: float) -> np.ndarray:
    fj = _f_jet(density, t, K)
    f1j = _f_jet(density, t, K, base_order=1)
    f2j = _f_jet(density, t, K, base_order=2)
    aj = _alpha_jet(clip, fj, K)
    num = tau4 * (_jmul(f2j, fj, K) - 2.0 * _jmul(f1j, f1j, K))
    den = 24.0 * tau2 * _jmul(_jmul(aj, aj, K), _jmul(_jmul(aj, aj, K),
                                                      _jmul(aj, aj, K), K), K)
    return _jmul(num, _jrecip(den, K), K)


# ---------------------------------------------------------------------------
# bivariate jets truncated at total degree K (d = 2 coefficient support)


def _jmul2(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1))
    for i in range(K + 1):
        for j in range(K + 1 - i):
            if a[i, j] == 0.0:
                continue
            out[i : K + 1, j : K + 1 - i][: K + 1 - i - j, : K + 1 - i - j] += (
                a[i, j] * b[: K + 1 - i - j, : K + 1 - i - j])
    mask = np.add.outer(np.arange(K + 1), np.arange(K + 1)) > K
    out[mask] = 0.0
    return out


def _jrecip2(a: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1))
    out[0, 0] = 1.0 / a[0, 0]
    for total in range(1, K + 1):
        for i in range(total + 1):
            j = total - i
            acc = 0.0
            for p in range(i + 1):
                for q in range(j + 1):
                    if p == 0 and q == 0:
                        continue
                    acc += a[p, q] * out[i - p, j - q]
            out[i, j] = -acc / a[0, 0]
    return out


def _jpoly2(coeffs, a: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1))
    out[0, 0] = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        out = _jmul2(out, a, K)
        out[0, 0] += c
    return out


def _f_jet2(density: DensityModel, t: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1))
    pt = np.asarray(t, dtype=float).reshape(1, 2)
    for i in range(K + 1):
        for j in range(K + 1 - i):
            out[i, j] = density.partial(pt, (i, j))[0] / (factorial(i) * factorial(j))
    return out


# ---------------------------------------------------------------------------
# scale families


def scale_family(family: str, clip: ClippingSpec | None,
                 density: DensityModel | None,
                 kernel: RadialKernelSpec) -> Callable[[np.ndarray, float], np.ndarray]:
    """Closure (x, h) -> per-point scale gamma_h(x) for a named family.

    classical: gamma = 1.  sqrt-clip: gamma = alpha(f(x)), h-independent.
    corrected: gamma = alpha(f(x)) / (1 + h^2 beta(x)), which requires
    h^2 |beta| < 1/2 wherever it is evaluated.
    """
    if family == "classical":
        return lambda x, h: np.ones_like(np.asarray(x, dtype=float))
    if family not in SCALE_FAMILIES:
        raise UnknownIdError(f"unknown scale family {family!r}; known: "
                             f"{list(SCALE_FAMILIES)}")
    if clip is None or density is None:
        raise UnknownIdError(f"scale family {family!r} needs a clip and a density")
    if family == "sqrt-clip":
        return lambda x, h: alpha(clip, density.pdf(np.asarray(x, dtype=float)))
    if clip.smoothness_order < MAX_PROBE_ORDER:
        warnings.warn(
            f"corrected-scale oracle with a C^{clip.smoothness_order} clipping "
            f"function; fitted orders may degrade beyond h^4",
            ClipSmoothnessWarning, stacklevel=2)
    table = moments(kernel, 4)
    tau2, tau4 = table.tau(2), table.tau(4)

    def corrected(x, h):
        x = np.asarray(x, dtype=float)
        fx = np.asarray(density.pdf(x), dtype=float)
        a = alpha(clip, fx)
        b = (tau4 * (density.deriv(x, 2) * fx - 2.0 * density.deriv(x, 1) ** 2)
             / (24.0 * tau2 * a ** 6))
        if np.any(h * h * np.abs(b) >= 0.5):
            raise BandwidthError(
                f"h = {h} too large for the corrected scale: "
                f"max h^2 |beta| = {np.max(h * h * np.abs(b)):.4g}")
        return a / (1.0 + h * h * b)

    return corrected


# ---------------------------------------------------------------------------
# expectation by quadrature


def expected_ideal(density: DensityModel, kernel: RadialKernelSpec, h: float,
                   scale_fn: Callable[[np.ndarray, float], np.ndarray],
                   t: float, min_scale: float | None = None) -> float:
    """E fbar(t; h) for the ideal estimator with per-point scale scale_fn.

    One-dimensional adaptive quadrature over the kernel's reach around t.
    The reach is |s - t| <= h sqrt(T) / min gamma; the minimum scale is
    found by fixpoint probing unless supplied.

    Raises
    ------
    QuadratureError
        If the integrator reports non-convergence or the achieved absolute
        error exceeds 1e-9.
    """
    if density.dim != 1 or kernel.dim != 1:
        raise DimensionError("the bias oracle integrates one-dimensional models")
    if not h > 0:
        raise BandwidthError(f"bandwidth must be positive, got {h}")
    reach0 = h * kernel.radius()
    if min_scale is None:
        width = reach0
        for _ in range(3):
            probe = np.linspace(t - width, t + width, 4097)
            min_scale = float(np.min(scale_fn(probe, h)))
            if not min_scale > 0:
                raise BandwidthError("scale function reached zero on the window")
            width = reach0 / min_scale
    window = reach0 / float(min_scale)

    coeffs = np.asarray(kernel.profile_coeffs, dtype=float)

    def integrand(s: float) -> float:
        sa = np.array([s])
        g = float(scale_fn(sa, h)[0])
        z = (t - s) * g / h
        u = z * z
        if u > kernel.support:
            return 0.0
        val = float(np.polynomial.polynomial.polyval(u, coeffs))
        return g * kernel.normalization * val * float(density.pdf(sa)[0]) / h

    val, abserr, info, *rest = quad(integrand, t - window, t + window,
                                    epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                    limit=400, points=[t], full_output=1)
    if rest:
        raise QuadratureError(
            f"expectation quadrature did not converge: {rest[0]} "
            f"(achieved abs error {abserr:.3g})")
    if abserr > 1e-9:
        raise QuadratureError(
            f"expectation quadrature achieved only {abserr:.3g} absolute error")
    return float(val)


# ---------------------------------------------------------------------------
# expansion coefficients


@dataclass(frozen=True, eq=False)
class BiasExpansion:
    """Even-order bias coefficients over a grid.

    coefficients[2k] holds a_{2k} on the grid; a_{2k} are the effective
    coefficients when family is "corrected" (correction bandwidth tied to
    the smoothing bandwidth).  h_grid and fitted_order are filled by the
    scan path and absent (None) for pure coefficient computations.
    """

    grid: np.ndarray
    coefficients: dict[int, np.ndarray]
    family: str
    density: str
    h_grid: tuple[float, ...] | None = None
    fitted_order: float | None = None


def _coeff_1d(density: DensityModel, clip: ClippingSpec | None,
              kernel: RadialKernelSpec, t: float, k: int, family: str,
              table) -> float:
    K = 2 * k
    if family == "classical":
        if k == 0:
            return float(density.pdf(np.array([t]))[0])
        return table.tau(K) * float(density.deriv(np.array([t]), K)[0]) / factorial(K)
    fj = _f_jet(density, t, K)
    if family == "sqrt-clip":
        if k == 0:
            return fj[0]
        aj = _alpha_jet(clip, fj, K)
        a2k = fj.copy()
        inv = _jrecip(_jmul(aj, aj, K), K)
        for _ in range(k):
            a2k = _jmul(a2k, inv, K)
        return table.tau(K) * a2k[K]
    # corrected: effective coefficient of h^{2k} after delta = h coupling
    total = 0.0
    for m in range(0, k + 1):
        j = k - m
        if j > 2 * m:
            continue
        Km = 2 * m
        if m == 0:
            # a_0,delta = f exactly; only the j = 0 term survives
            if j == 0:
                total += fj[0]
            continue
        fjm = _f_jet(density, t, Km)
        ajm = _alpha_jet(clip, fjm, Km)
        u = fjm.copy()
        inv = _jrecip(_jmul(ajm, ajm, Km), Km)
        for _ in range(m):
            u = _jmul(u, inv, Km)
        if j > 0:
            bj = _beta_jet(density, clip, t, Km, table.tau(2), table.tau(4))
            bpow = bj.copy()
            for _ in range(j - 1):
                bpow = _jmul(bpow, bj, Km)
            u = comb(2 * m, j) * _jmul(u, bpow, Km)
        total += table.tau(Km) * u[Km]
    return total


def _coeff_2d(density: DensityModel, clip: ClippingSpec | None,
              kernel: RadialKernelSpec, t: np.ndarray, k: int, family: str,
              table) -> float:
    K = 2 * k
    if k == 0:
        return float(density.pdf(np.asarray(t, dtype=float).reshape(1, 2))[0])
    fj = _f_jet2(density, t, K)
    if family == "classical":
        u = fj
    else:
        # alpha^2 = c^2 p(f / c^2); build its reciprocal once
        arg = fj / clip.c ** 2
        piece = int(np.searchsorted(clip.taper.breaks, arg[0, 0], side="right"))
        a2 = clip.c ** 2 * _jpoly2(clip.taper.coeffs[piece], arg, K)
        inv = _jrecip2(a2, K)
        u = fj.copy()
        for _ in range(k):
            u = _jmul2(u, inv, K)
    total = 0.0
    for i in range(K + 1):
        v = (i, K - i)
        tau_v = table.multi.get(v, 0.0)
        if tau_v == 0.0:
            continue
        total += tau_v * u[v[0], v[1]]
    return total


def bias_coefficients(density: DensityModel, clip: ClippingSpec | None,
                      kernel: RadialKernelSpec, grid, k_max: int,
                      family: str = "sqrt-clip") -> BiasExpansion:
    """Expansion coefficients a_{2k}, k = 0..k_max, over a grid of points.

    family selects the scale: "classical" (gamma = 1), "sqrt-clip"
    (gamma = alpha(f)), or "corrected" (d = 1 only; coefficients are the
    effective ones with the correction bandwidth tied to h).
    """
    if family not in SCALE_FAMILIES:
        raise UnknownIdError(f"unknown scale family {family!r}")
    if k_max not in (1, 2, 3):
        raise MomentOrderError(f"k_max must be 1, 2, or 3, got {k_max}")
    if family != "classical" and clip is None:
        raise UnknownIdError(f"scale family {family!r} needs a clipping spec")
    if family == "corrected" and density.dim != 1:
        raise DimensionError("the corrected family is one-dimensional")
    if density.dim == 2 and k_max > 2:
        raise MomentOrderError(
            "two-dimensional densities provide derivatives to total order 4")
    table = moments(kernel, 2 * k_max)
    pts = np.asarray(grid, dtype=float)
    if density.dim == 1:
        pts1 = pts.reshape(-1)
        coeffs = {2 * k: np.array([_coeff_1d(density, clip, kernel, float(t), k,
                                             family, table) for t in pts1])
                  for k in range(k_max + 1)}
        out_grid = pts1[:, None]
    else:
        pts2 = pts.reshape(-1, 2)
        coeffs = {2 * k: np.array([_coeff_2d(density, clip, kernel, t, k,
                                             family, table) for t in pts2])
                  for k in range(k_max + 1)}
        out_grid = pts2
    return BiasExpansion(out_grid, coeffs, family, density.ident)


def fit_bias_order(density: DensityModel, kernel: RadialKernelSpec,
                   scale_fn: Callable[[np.ndarray, float], np.ndarray],
                   t: float, h_grid=DEFAULT_H_GRID) -> float:
    """Log-log slope of |E fbar(t; h) - f(t)| against h.

    Bandwidths whose bias sits below the quadrature floor of 1e-12 are
    skipped; fewer than three usable points raise InsufficientDataError.
    """
    ft = float(density.pdf(np.array([t]))[0])
    hs, biases = [], []
    for h in h_grid:
        b = abs(expected_ideal(density, kernel, float(h), scale_fn, t) - ft)
        if b < BIAS_FLOOR:
            continue
        hs.append(float(h))
        biases.append(b)
    if len(hs) < 3:
        raise InsufficientDataError(
            f"only {len(hs)} bandwidths above the bias floor; need >= 3")
    slope = np.polyfit(np.log(hs), np.log(biases), 1)[0]
    return float(slope)


def bias_scan(density: DensityModel, kernel: RadialKernelSpec,
              scale_fn: Callable[[np.ndarray, float], np.ndarray],
              t_values, h_grid=DEFAULT_H_GRID):
    """Signed biases over (t, h) plus the per-t fitted order.

    Returns (rows, slopes): rows is a list of (t, h, bias) in scan order,
    slopes maps each t to the slope fitted on |bias| > floor, or nan when
    fewer than three bandwidths clear the floor.
    """
    rows = []
    slopes: dict[float, float] = {}
    for t in t_values:
        t = float(t)
        ft = float(density.pdf(np.array([t]))[0])
        biases = [expected_ideal(density, kernel, float(h), scale_fn, t) - ft
                  for h in h_grid]
        rows.extend((t, float(h), b) for h, b in zip(h_grid, biases))
        usable = [(float(h), abs(b)) for h, b in zip(h_grid, biases)
                  if abs(b) >= BIAS_FLOOR]
        if len(usable) < 3:
            slopes[t] = float("nan")
        else:
            hs, mags = zip(*usable)
            slopes[t] = float(np.polyfit(np.log(hs), np.log(mags), 1)[0])
    return rows, slopes
