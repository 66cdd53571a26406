"""Compactly supported radial kernels and the fourth-order derivative kernel.

A radial kernel is K(t) = norm * profile(||t||^2) where the profile is a
polynomial on [0, T] and zero beyond.  The normalization and all kernel
moments are computed by adaptive quadrature on the radial reduction, with
angular factors handled in closed form.  The fourth-order kernel G used by
the derivative estimators is (A + B z^2)(1 - z^2)^4 on [-1, 1], with A and B
solved from its moment conditions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import DimensionError, KernelConstructionError, MomentOrderError

DEFAULT_PROFILE_COEFFS = (1.0, -3.0, 3.0, -1.0)  # (1 - u)^3
MAX_MOMENT_ORDER = 6

_QUAD_OPTS = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


def _poly_eval(coeffs, u):
    return np.polynomial.polynomial.polyval(u, np.asarray(coeffs, dtype=float))


def _sphere_area(d: int) -> float:
    # surface area of the unit sphere in R^d
    return 2.0 * np.pi ** (d / 2.0) / np.exp(gammaln(d / 2.0))


@dataclass(frozen=True)
class RadialKernelSpec:
    """Validated radial kernel K(t) = normalization * profile(||t||^2).

    Attributes
    ----------
    profile_coeffs : tuple of float
        Ascending polynomial coefficients of the profile in u = ||t||^2.
    support : float
        The profile vanishes for u > support; the kernel support is the
        closed ball of radius sqrt(support).
    dim : int
        Spatial dimension d >= 1.
    normalization : float
        Constant making the kernel integrate to one over R^d.
    """

    profile_coeffs: tuple[float, ...]
    support: float
    dim: int
    normalization: float = field(default=0.0)

    @property
    def ident(self) -> str:
        cs = ",".join(f"{c:g}" for c in self.profile_coeffs)
        return f"radial-poly[{cs}]-T{self.support:g}-d{self.dim}"

    def profile(self, u: np.ndarray) -> np.ndarray:
        """Evaluate the unnormalized profile, zero outside [0, support]."""
        u = np.asarray(u, dtype=float)
        inside = (u >= 0.0) & (u <= self.support)
        out = np.zeros_like(u)
        out[inside] = _poly_eval(self.profile_coeffs, u[inside])
        return out

    def radius(self) -> float:
        """Support radius sqrt(T) of the kernel in ||t||."""
        return float(np.sqrt(self.support))


def _radial_integral(coeffs, support: float, power: int) -> float:
    """integral_0^sqrt(T) r^power * profile(r^2) dr by adaptive quadrature."""
    val, err = quad(
        lambda r: r**power * _poly_eval(coeffs, r * r),
        0.0,
        np.sqrt(support),
        **_QUAD_OPTS,
    )
    return val


def make_radial_kernel(
    profile_coeffs=DEFAULT_PROFILE_COEFFS, support: float = 1.0, dim: int = 1
) -> RadialKernelSpec:
    """Build and validate a radial kernel spec from profile coefficients.

    Raises
    ------
    DimensionError
        If dim is not a positive integer.
    KernelConstructionError
        If the profile is negative somewhere on [0, T], does not vanish to
        first order at the support edge, or integrates to a non-positive
        value.
    """
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool) or dim <= 0:
        raise DimensionError(f"kernel dimension must be a positive integer, got {dim!r}")
    support = float(support)
    if not support > 0.0:
        raise KernelConstructionError(f"kernel support must be positive, got {support}")
    coeffs = tuple(float(c) for c in np.atleast_1d(profile_coeffs))
    if len(coeffs) == 0:
        raise KernelConstructionError("profile needs at least one coefficient")

    probe = _poly_eval(coeffs, np.linspace(0.0, support, 4097))
    if probe.min() < -1e-12 * max(1.0, probe.max()):
        raise KernelConstructionError("profile is negative inside [0, T]")
    scale = max(1.0, float(np.abs(probe).max()))
    edge = _poly_eval(coeffs, np.array(support))
    dcoeffs = np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=float))
    edge1 = _poly_eval(dcoeffs, np.array(support)) if len(coeffs) > 1 else 0.0
    if abs(float(edge)) > 1e-9 * scale or abs(float(edge1)) > 1e-9 * scale * len(coeffs):
        raise KernelConstructionError(
            "profile must vanish with its first derivative at the support edge"
        )

    total = _sphere_area(dim) * _radial_integral(coeffs, support, dim - 1)
    if not total > 0.0:
        raise KernelConstructionError("profile integrates to a non-positive value")
    return RadialKernelSpec(coeffs, support, int(dim), 1.0 / total)


def make_default_profile(dim: int = 1) -> RadialKernelSpec:
    """Default kernel: profile (1 - u)^3 on [0, 1], normalized for dim."""
    return make_radial_kernel(DEFAULT_PROFILE_COEFFS, 1.0, dim)


def as_points(points, dim: int) -> np.ndarray:
    """Coerce input to an (m, dim) float array, validating the dimension."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        if dim == 1:
            pts = pts[:, None]
        elif pts.shape[0] == dim:
            pts = pts[None, :]
        else:
            raise DimensionError(
                f"1-d point array of length {pts.shape[0]} does not match dim={dim}"
            )
    elif pts.ndim == 2:
        if pts.shape[1] != dim:
            raise DimensionError(
                f"points have dimension {pts.shape[1]}, kernel has dim={dim}"
            )
    else:
        raise DimensionError(f"points array must be 1-d or 2-d, got ndim={pts.ndim}")
    return pts


def kernel_eval(spec: RadialKernelSpec, points) -> np.ndarray:
    """Evaluate the normalized kernel at the given points.

    Points may be an (m, d) array, or a 1-d array interpreted as m scalar
    points when d = 1 and as a single point when d > 1.
    """
    pts = as_points(points, spec.dim)
    u = np.einsum("ij,ij->i", pts, pts)
    return spec.normalization * spec.profile(u)


# ---------------------------------------------------------------------------
# fourth-order kernel


@dataclass(frozen=True)
class FourthOrderKernelSpec:
    """Kernel G(z) = (coeff_const + coeff_quad z^2) * weight(z) on [-1, 1].

    Satisfies int G = 1, int z^j G = 0 for j = 1, 2, 3 and a nonzero fourth
    moment, stored in fourth_moment.
    """

    coeff_const: float
    coeff_quad: float
    weight_coeffs: tuple[float, ...]
    poly_coeffs: tuple[float, ...]
    fourth_moment: float

    @property
    def ident(self) -> str:
        return f"fourth-order[{self.coeff_const:.6g},{self.coeff_quad:.6g}]"

    def radius(self) -> float:
        """Half-width of the support interval [-1, 1]."""
        return 1.0

    def __call__(self, z, deriv: int = 0) -> np.ndarray:
        """Evaluate G (deriv=0), G' (deriv=1) or G'' (deriv=2), zero outside [-1, 1]."""
        if deriv not in (0, 1, 2):
            raise MomentOrderError(f"derivative order must be 0, 1 or 2, got {deriv}")
        z = np.asarray(z, dtype=float)
        c = np.asarray(self.poly_coeffs, dtype=float)
        for _ in range(deriv):
            c = np.polynomial.polynomial.polyder(c)
        out = np.zeros_like(z)
        inside = np.abs(z) <= 1.0
        out[inside] = _poly_eval(tuple(c), z[inside])
        return out


DEFAULT_WEIGHT_COEFFS = (1.0, 0.0, -4.0, 0.0, 6.0, 0.0, -4.0, 0.0, 1.0)  # (1 - z^2)^4


def make_fourth_order_kernel(weight_coeffs=DEFAULT_WEIGHT_COEFFS) -> FourthOrderKernelSpec:
    """Solve the moment system for the fourth-order kernel over a weight.

    The weight is a polynomial on [-1, 1] (default (1 - z^2)^4).  A and B in
    (A + B z^2) * weight(z) are chosen so the kernel integrates to one with
    vanishing first, second and third moments.

    Raises
    ------
    KernelConstructionError
        If the 2x2 moment system is singular or the post-conditions fail.
    """
    w = tuple(float(c) for c in np.atleast_1d(weight_coeffs))

    def wmoment(k: int) -> float:
        val, _ = quad(lambda z: z**k * _poly_eval(w, z), -1.0, 1.0, **_QUAD_OPTS)
        return val

    m0, m2, m4 = wmoment(0), wmoment(2), wmoment(4)
    system = np.array([[m0, m2], [m2, m4]])
    det = np.linalg.det(system)
    if abs(det) < 1e-12 * max(1.0, abs(m0 * m4)):
        raise KernelConstructionError("moment system for the fourth-order kernel is singular")
    coeff_const, coeff_quad = np.linalg.solve(system, np.array([1.0, 0.0]))
    poly = tuple(np.polynomial.polynomial.polymul([coeff_const, 0.0, coeff_quad], w))

    def gmoment(k: int) -> float:
        val, _ = quad(lambda z: z**k * _poly_eval(poly, z), -1.0, 1.0, **_QUAD_OPTS)
        return val

    checks = [gmoment(j) for j in range(5)]
    if abs(checks[0] - 1.0) > 1e-8:
        raise KernelConstructionError(f"fourth-order kernel mass is {checks[0]!r}, not 1")
    for j in (1, 2, 3):
        if abs(checks[j]) > 1e-8:
            raise KernelConstructionError(f"moment {j} of the fourth-order kernel is {checks[j]!r}")
    if abs(checks[4]) <= 1e-3:
        raise KernelConstructionError("fourth moment of the fourth-order kernel is degenerate")
    return FourthOrderKernelSpec(
        float(coeff_const), float(coeff_quad), w, poly, float(checks[4])
    )


# ---------------------------------------------------------------------------
# moment tables


@dataclass(frozen=True)
class MomentTable:
    """Scalar moments tau_r = int K(x) ||x||^r dx for r in {2, 4, 6} and
    multi-index moments tau_v = int x^v K(x) dx for |v| <= max_order.

    Entries with any odd component are exactly 0.0, set analytically.
    """

    dim: int
    max_order: int
    scalar: dict[int, float]
    multi: dict[tuple[int, ...], float]

    def tau(self, r: int) -> float:
        return self.scalar[r]


def _multi_indices(dim: int, max_order: int):
    for v in product(range(max_order + 1), repeat=dim):
        if sum(v) <= max_order:
            yield v


def _angular_factor(v: tuple[int, ...]) -> float:
    # integral over the unit sphere of prod omega_i^{v_i}, all v_i even
    d = len(v)
    log_num = sum(gammaln((vi + 1) / 2.0) for vi in v)
    return 2.0 * np.exp(log_num - gammaln((sum(v) + d) / 2.0))


@lru_cache(maxsize=64)
def _moment_table_cached(spec: RadialKernelSpec, max_order: int) -> MomentTable:
    coeffs, support, d = spec.profile_coeffs, spec.support, spec.dim
    scalar = {
        r: spec.normalization * _sphere_area(d) * _radial_integral(coeffs, support, r + d - 1)
        for r in (0, 2, 4, 6)
    }
    multi: dict[tuple[int, ...], float] = {}
    for v in _multi_indices(d, max_order):
        if any(vi % 2 for vi in v):
            multi[v] = 0.0
            continue
        radial = _radial_integral(coeffs, support, sum(v) + d - 1)
        multi[v] = spec.normalization * _angular_factor(v) * radial
    return MomentTable(d, max_order, scalar, multi)


def moments(spec: RadialKernelSpec, max_order: int = MAX_MOMENT_ORDER) -> MomentTable:
    """Moment table of a radial kernel up to the given total order.

    Raises
    ------
    MomentOrderError
        If max_order is outside [1, 6].
    """
    if not isinstance(max_order, (int, np.integer)) or not 1 <= max_order <= MAX_MOMENT_ORDER:
        raise MomentOrderError(f"max_order must be an integer in [1, {MAX_MOMENT_ORDER}]")
    return _moment_table_cached(spec, int(max_order))
