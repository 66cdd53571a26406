"""Smooth clipping of the square-root bandwidth law.

The clipping function p is piecewise polynomial: identically 1 left of 0,
equal to the identity beyond the knot t0 >= 1, joined by a taper with several
continuous derivatives.  The local bandwidth scale is
alpha(x) = c * sqrt(p(x / c^2)), so alpha(x) = sqrt(x) wherever x >= t0 c^2
and alpha >= c everywhere.  beta is the curvature functional used by the
h^6 correction gamma_h(x) = alpha(f(x)) / (1 + h^2 beta(x)).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

from .errors import BandwidthError, ClippingDomainError

PROBE_STEP = 1e-3
PROBE_TOL = 1e-4
MAX_PROBE_ORDER = 7


class ClipSmoothnessWarning(UserWarning):
    """Clipping function has fewer continuous derivatives than the theory asks."""


class PiecewisePoly:
    """Polynomial pieces on intervals split by ascending interior breakpoints.

    Piece i covers [breaks[i-1], breaks[i]) with the first and last pieces
    extending to -inf and +inf.  Coefficients are ascending in t.
    """

    def __init__(self, breaks, coeff_lists):
        self.breaks = np.asarray(breaks, dtype=float)
        if self.breaks.ndim != 1 or np.any(np.diff(self.breaks) <= 0):
            raise ClippingDomainError("breakpoints must be strictly increasing")
        if len(coeff_lists) != self.breaks.size + 1:
            raise ClippingDomainError(
                f"need {self.breaks.size + 1} coefficient lists for "
                f"{self.breaks.size} breakpoints, got {len(coeff_lists)}"
            )
        self.coeffs = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coeff_lists]

    def eval_piece(self, i: int, t) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.coeffs[i])

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t, side="right")
        out = np.empty_like(t)
        for i in range(len(self.coeffs)):
            m = idx == i
            if np.any(m):
                out[m] = self.eval_piece(i, t[m])
        return out

    def derivative(self, order: int = 1) -> "PiecewisePoly":
        der = PiecewisePoly.__new__(PiecewisePoly)
        der.breaks = self.breaks
        der.coeffs = [
            np.polynomial.polynomial.polyder(c, order)
            if c.size > order
            else np.zeros(1)
            for c in self.coeffs
        ]
        return der


def _one_sided_first_derivative(poly: PiecewisePoly, piece: int, knot: float, side: int,
                                step: float = PROBE_STEP) -> float:
    # third-order one-sided stencil, all evaluations on a single piece
    h = side * step
    vals = [poly.eval_piece(piece, knot + j * h) for j in range(4)]
    return float((-11 * vals[0] + 18 * vals[1] - 9 * vals[2] + 2 * vals[3]) / (6 * h))


def probe_smoothness(poly: PiecewisePoly, max_order: int = MAX_PROBE_ORDER,
                     step: float = PROBE_STEP, tol: float = PROBE_TOL) -> int:
    """Number of derivatives continuous across every knot, by finite differences.

    At each knot the left and right one-sided estimates of derivative k are
    compared; the estimates come from the exact piece polynomials of
    derivative k-1, so only one level of differencing is ever applied.
    """
    for k in range(1, max_order + 1):
        lower = poly.derivative(k - 1) if k > 1 else poly
        for j, knot in enumerate(poly.breaks):
            left = _one_sided_first_derivative(lower, j, float(knot), -1, step)
            right = _one_sided_first_derivative(lower, j + 1, float(knot), +1, step)
            if abs(left - right) > tol * max(1.0, abs(left), abs(right)):
                return k - 1
    return max_order


def _quintic_taper_coeffs(t0: float) -> np.ndarray:
    """Taper piece on [0, t0]: 1 + t^6 * T4[g](t) with g(t) = (t - 1) / t^6.

    T4[g] is the fourth-degree Taylor polynomial of g at t0, which makes the
    piece meet the identity branch with five continuous derivatives.  For
    t0 = 2 this reproduces the familiar quintic taper with dyadic
    coefficients 1, -2, 9/4, -7/4, 7/8 over 64.
    """
    P = np.polynomial.polynomial

    def g_deriv(k: int) -> float:
        # g = t^-5 - t^-6
        lead5 = (-1) ** k * factorial(4 + k) / factorial(4) * t0 ** (-5 - k)
        lead6 = (-1) ** k * factorial(5 + k) / factorial(5) * t0 ** (-6 - k)
        return lead5 - lead6

    taylor = np.zeros(5)
    shifted = np.array([1.0])
    for k in range(5):
        term = g_deriv(k) / factorial(k)
        taylor = P.polyadd(taylor, term * shifted)[: 10]
        shifted = P.polymul(shifted, np.array([-t0, 1.0]))
    t6 = np.zeros(7)
    t6[6] = 1.0
    return P.polyadd(np.array([1.0]), P.polymul(t6, taylor))


@dataclass(frozen=True, eq=False)
class ClippingSpec:
    """Validated clipping function with its scale constant.

    Attributes
    ----------
    c : float
        Lower bound of the local bandwidth scale; alpha >= c everywhere.
    t0 : float
        Knot beyond which p is the identity, so alpha(x) = sqrt(x) for
        x >= t0 * c^2.
    taper : PiecewisePoly
        The full piecewise-polynomial clipping function p.
    smoothness_order : int
        Probed number of continuous derivatives of p across its knots.
    ident : str
        Short identifier recorded in estimate metadata.
    """

    c: float
    t0: float
    taper: PiecewisePoly
    smoothness_order: int
    ident: str


def _validate_taper(p: PiecewisePoly, t0: float) -> None:
    lo, hi = min(-2.0, -t0), 3.0 * t0
    grid = np.linspace(lo, hi, 8193)
    vals = p(grid)
    if np.min(vals) < 1.0 - 1e-12:
        raise ClippingDomainError("clipping function drops below 1")
    if np.min(np.diff(vals)) < -1e-12:
        raise ClippingDomainError("clipping function is not nondecreasing")
    left = grid <= 0.0
    if np.max(np.abs(vals[left] - 1.0)) > 1e-9:
        raise ClippingDomainError("clipping function must be identically 1 left of 0")
    right = grid >= t0
    if np.max(np.abs(vals[right] - grid[right])) > 1e-9 * max(1.0, hi):
        raise ClippingDomainError("clipping function must equal the identity beyond t0")
    for j, knot in enumerate(p.breaks):
        lv = p.eval_piece(j, knot)
        rv = p.eval_piece(j + 1, knot)
        if abs(float(lv) - float(rv)) > 1e-9:
            raise ClippingDomainError(f"clipping function jumps at knot {knot}")


def make_clipping(c: float, t0: float = 2.0, taper="quintic") -> ClippingSpec:
    """Build a clipping spec from the built-in quintic taper or a user spline.

    Parameters
    ----------
    c : float
        Scale floor, must be positive.
    t0 : float
        Identity knot, must be >= 1.
    taper : "quintic" or PiecewisePoly
        A user taper must be a PiecewisePoly whose first piece is the
        constant 1, whose last piece is the identity starting at t0, and
        which stays nondecreasing and >= 1.

    Notes
    -----
    A taper with fewer than five probed continuous derivatives is accepted
    but reported through ClipSmoothnessWarning; downstream h^6 operations
    warn again when the order is below seven.
    """
    c = float(c)
    t0 = float(t0)
    if not c > 0.0:
        raise ClippingDomainError(f"clip constant c must be positive, got {c}")
    if not t0 >= 1.0:
        raise ClippingDomainError(f"clip knot t0 must be >= 1, got {t0}")
    if isinstance(taper, str):
        if taper != "quintic":
            raise ClippingDomainError(f"unknown taper {taper!r}")
        p = PiecewisePoly([0.0, t0], [[1.0], _quintic_taper_coeffs(t0), [0.0, 1.0]])
        ident = f"quintic-clip-c{c:g}-t0{t0:g}"
    elif isinstance(taper, PiecewisePoly):
        p = taper
        ident = f"spline-clip-c{c:g}-t0{t0:g}"
    else:
        raise ClippingDomainError("taper must be 'quintic' or a PiecewisePoly")
    _validate_taper(p, t0)
    order = probe_smoothness(p)
    if order < 5:
        warnings.warn(
            f"clipping taper has only {order} continuous derivatives (5 expected)",
            ClipSmoothnessWarning,
            stacklevel=2,
        )
    return ClippingSpec(c, t0, p, order, ident)


def p_eval(spec: ClippingSpec, t, deriv: int = 0) -> np.ndarray:
    """Evaluate the clipping function p, or one of its piecewise derivatives."""
    poly = spec.taper if deriv == 0 else spec.taper.derivative(deriv)
    return poly(t)


def alpha(spec: ClippingSpec, x) -> np.ndarray:
    """Clipped square-root bandwidth scale alpha(x) = c * sqrt(p(x / c^2)).

    Raises
    ------
    ClippingDomainError
        If any input is negative; the scale is defined for density values.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ClippingDomainError("alpha is defined for nonnegative arguments only")
    return spec.c * np.sqrt(spec.taper(x / spec.c**2))


@dataclass(frozen=True, eq=False)
class BetaSpec:
    """Inputs of the curvature functional beta.

    f, f1, f2 evaluate the target density and its first two derivatives;
    tau2 and tau4 are scalar moments of the smoothing kernel.
    """

    clip: ClippingSpec
    f: Callable[[np.ndarray], np.ndarray]
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    tau2: float
    tau4: float


def beta(spec: BetaSpec, x) -> np.ndarray:
    """beta(x) = tau4 [f''(x) f(x) - 2 f'(x)^2] / (24 tau2 alpha(f(x))^6)."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(spec.f(x), dtype=float)
    a = alpha(spec.clip, fx)
    num = spec.tau4 * (np.asarray(spec.f2(x), dtype=float) * fx
                       - 2.0 * np.asarray(spec.f1(x), dtype=float) ** 2)
    return num / (24.0 * spec.tau2 * a**6)


def gamma_h6(spec: BetaSpec, x, h: float) -> np.ndarray:
    """Corrected scale alpha(f(x)) / (1 + h^2 beta(x)) for the h^6 estimator.

    Raises
    ------
    BandwidthError
        If h^2 |beta(x)| >= 1/2 at any requested point, i.e. the bandwidth
        is too large for the correction to stay a perturbation.
    """
    x = np.asarray(x, dtype=float)
    if spec.clip.smoothness_order < MAX_PROBE_ORDER:
        warnings.warn(
            f"h^6 correction run with a C^{spec.clip.smoothness_order} clipping "
            f"function; the supporting theory asks for C^{MAX_PROBE_ORDER}",
            ClipSmoothnessWarning,
            stacklevel=2,
        )
    b = beta(spec, x)
    hb = h * h * np.abs(b)
    if np.any(hb >= 0.5):
        raise BandwidthError(
            f"bandwidth too large for the h^6 correction: max h^2 |beta| = {hb.max():.4g}"
        )
    return alpha(spec.clip, np.asarray(spec.f(x), dtype=float)) / (1.0 + h * h * b)
