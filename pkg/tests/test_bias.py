"""Deterministic bias oracle: quadrature expectations and jet coefficients."""
import numpy as np
import pytest

from clipkde.bias import (bias_coefficients, bias_scan, expected_ideal,
                          fit_bias_order, scale_family)
from clipkde.clipping import ClipSmoothnessWarning, alpha, make_clipping
from clipkde.densities import get_density
from clipkde.errors import (BandwidthError, DimensionError,
                            InsufficientDataError, MomentOrderError,
                            UnknownIdError)
from clipkde.kernels import make_default_profile

GAUSS = get_density("gaussian-1d")
K1 = make_default_profile(1)
CLIP = make_clipping(0.22360679774997896, 2.0)
# soft clip: taper fully inactive wherever f > 0.05
CLIP_SOFT = make_clipping(0.1, 2.0)


def _corrected(clip):
    with pytest.warns(ClipSmoothnessWarning):
        return scale_family("corrected", clip, GAUSS, K1)


def test_scale_family_classical_is_unit():
    fn = scale_family("classical", None, None, K1)
    x = np.linspace(-2, 2, 7)
    assert np.array_equal(fn(x, 0.3), np.ones(7))


def test_scale_family_sqrt_clip_matches_alpha():
    fn = scale_family("sqrt-clip", CLIP, GAUSS, K1)
    x = np.linspace(-2, 2, 7)
    expect = alpha(CLIP, GAUSS.pdf(x))
    assert np.allclose(fn(x, 0.1), expect, rtol=1e-15)
    # h plays no role for this family
    assert np.array_equal(fn(x, 0.1), fn(x, 0.7))


def test_scale_family_guards():
    with pytest.raises(UnknownIdError):
        scale_family("cubic-root", CLIP, GAUSS, K1)
    with pytest.raises(UnknownIdError):
        scale_family("sqrt-clip", None, GAUSS, K1)
    fn = _corrected(CLIP_SOFT)
    # far out the curvature term explodes and large h must be refused
    with pytest.raises(BandwidthError):
        fn(np.array([2.3]), 0.8)


def test_expected_ideal_matches_dense_simpson():
    # independent reference: E fbar(t) = int gamma(s)/h K(((t-s)gamma/h)) f(s) ds
    # on the exact reach window, by composite Simpson on a dense grid
    from scipy.integrate import simpson

    fn = scale_family("sqrt-clip", CLIP, GAUSS, K1)
    t, h = 0.3, 0.2
    val = expected_ideal(GAUSS, K1, h, fn, t)

    width = h * K1.radius()
    for _ in range(3):
        probe = np.linspace(t - width, t + width, 4097)
        width = h * K1.radius() / float(np.min(fn(probe, h)))
    s = np.linspace(t - width, t + width, 160001)
    g = fn(s, h)
    u = ((t - s) * g / h) ** 2
    integ = np.where(u <= 1.0, g * (35.0 / 32.0) * (1 - np.minimum(u, 1.0)) ** 3
                     * GAUSS.pdf(s) / h, 0.0)
    ref = float(simpson(integ, x=s))
    assert val == pytest.approx(ref, abs=1e-9)


def test_expected_ideal_classical_recovers_smoothed_density():
    fn = scale_family("classical", None, None, K1)
    t, h = 0.0, 0.25
    val = expected_ideal(GAUSS, K1, h, fn, t)
    # classical expectation = (K_h * f)(t), here by direct Simpson
    from scipy.integrate import simpson

    s = np.linspace(t - h, t + h, 80001)
    u = ((t - s) / h) ** 2
    ref = float(simpson((35.0 / 32.0) * (1 - u) ** 3 * GAUSS.pdf(s) / h, x=s))
    assert val == pytest.approx(ref, abs=1e-9)
    assert val < float(GAUSS.pdf(np.array([0.0]))[0])


def test_expected_ideal_guards():
    fn = scale_family("classical", None, None, K1)
    with pytest.raises(BandwidthError):
        expected_ideal(GAUSS, K1, 0.0, fn, 0.3)
    with pytest.raises(DimensionError):
        expected_ideal(get_density("gaussian-2d"), make_default_profile(2),
                       0.2, fn, 0.3)


def test_a2_vanishes_where_clip_is_inactive():
    # inside the pure square-root region f / alpha^2 is constant, so the
    # h^2 coefficient collapses to rounding noise
    pts = np.linspace(-2.0, 2.0, 20)
    exp = bias_coefficients(GAUSS, CLIP_SOFT, K1, pts, 1, family="sqrt-clip")
    assert np.max(np.abs(exp.coefficients[2])) < 1e-6
    assert np.allclose(exp.coefficients[0], GAUSS.pdf(pts), rtol=1e-13)


def test_a2_alive_for_classical():
    pts = np.array([0.0, 0.3, 1.0])
    exp = bias_coefficients(GAUSS, None, K1, pts, 1, family="classical")
    # tau2 f''/2 with tau2 = 1/9
    expect = (1.0 / 9.0) * GAUSS.deriv(pts, 2) / 2.0
    assert np.allclose(exp.coefficients[2], expect, rtol=1e-12)


def test_corrected_family_kills_b2_and_b4():
    pts = np.linspace(-1.5, 1.5, 9)
    exp = bias_coefficients(GAUSS, CLIP, K1, pts, 3, family="corrected")
    assert np.max(np.abs(exp.coefficients[2])) < 1e-12
    assert np.max(np.abs(exp.coefficients[4])) < 1e-12
    assert np.max(np.abs(exp.coefficients[6])) > 1e-5


def test_frozen_sixth_order_coefficient():
    # value cross-checked against the quadrature oracle: bias(h)/h^6 at
    # h = 0.12..0.28 extrapolates to -3.905e-4 in h^2, matching the jet
    exp = bias_coefficients(GAUSS, CLIP, K1, [0.3], 3, family="corrected")
    assert exp.coefficients[6][0] == pytest.approx(-3.9216710829e-4, rel=1e-6)


def test_bias_coefficients_2d_classical_hand_formula():
    gauss2 = get_density("gaussian-2d")
    t = np.array([0.3, -0.2])
    exp = bias_coefficients(gauss2, None, make_default_profile(2),
                            t.reshape(1, 2), 1, family="classical")
    x, y = t
    f = float(gauss2.pdf(t.reshape(1, 2))[0])
    fxx = (x * x - 1.0) * f
    fyy = (y * y - 1.0) * f
    # tau_(2,0) = tau_(0,2) = 0.1, jets carry the 1/2! already
    expect = 0.1 * fxx / 2.0 + 0.1 * fyy / 2.0
    assert exp.coefficients[2][0] == pytest.approx(expect, rel=1e-12)
    assert exp.coefficients[0][0] == pytest.approx(f, rel=1e-14)


def test_bias_coefficients_guards():
    with pytest.raises(UnknownIdError):
        bias_coefficients(GAUSS, CLIP, K1, [0.0], 1, family="nope")
    with pytest.raises(MomentOrderError):
        bias_coefficients(GAUSS, CLIP, K1, [0.0], 4)
    with pytest.raises(UnknownIdError):
        bias_coefficients(GAUSS, None, K1, [0.0], 1, family="sqrt-clip")
    gauss2 = get_density("gaussian-2d")
    with pytest.raises(DimensionError):
        bias_coefficients(gauss2, CLIP, make_default_profile(2),
                          np.zeros((1, 2)), 1, family="corrected")
    with pytest.raises(MomentOrderError):
        bias_coefficients(gauss2, CLIP, make_default_profile(2),
                          np.zeros((1, 2)), 3, family="sqrt-clip")


def test_fit_bias_order_classical_near_two():
    fn = scale_family("classical", None, None, K1)
    slope = fit_bias_order(GAUSS, K1, fn, 0.3, h_grid=(0.1, 0.16, 0.25, 0.4))
    assert 1.8 < slope < 2.2


def test_fit_bias_order_needs_three_points():
    fn = scale_family("classical", None, None, K1)
    with pytest.raises(InsufficientDataError):
        fit_bias_order(GAUSS, K1, fn, 0.3, h_grid=(0.1, 0.2))


def test_bias_scan_shape_and_slopes():
    fn = scale_family("classical", None, None, K1)
    rows, slopes = bias_scan(GAUSS, K1, fn, [0.0, 0.5],
                             h_grid=(0.1, 0.2, 0.3))
    assert len(rows) == 6
    assert set(slopes) == {0.0, 0.5}
    for t, h, b in rows:
        assert t in (0.0, 0.5) and h in (0.1, 0.2, 0.3)
        # classical bias has the sign of f'' at these points
        assert (b < 0) == (float(GAUSS.deriv(np.array([t]), 2)[0]) < 0)
    assert all(1.5 < s < 2.5 for s in slopes.values())
