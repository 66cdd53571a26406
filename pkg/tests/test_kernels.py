"""Kernel construction, normalization, and moment gates."""
import numpy as np
import pytest
from scipy import integrate

from clipkde.errors import KernelConstructionError, MomentOrderError
from clipkde.kernels import (FourthOrderKernelSpec, kernel_eval,
                             make_default_profile, make_fourth_order_kernel,
                             make_radial_kernel, moments)


def test_default_normalization_d1_exact():
    k = make_default_profile(1)
    # 1 / integral of (1-u^2)^3 over [-1, 1] = 35/32
    assert k.normalization == 35.0 / 32.0
    assert k.support == 1.0
    assert k.dim == 1


def test_default_normalization_d2_exact():
    k = make_default_profile(2)
    # 2*pi * int_0^1 (1-r^2)^3 r dr = pi/4
    assert abs(k.normalization - 4.0 / np.pi) < 1e-15


def test_integrates_to_one_by_quadrature():
    k = make_default_profile(1)
    val, err = integrate.quad(lambda z: kernel_eval(k, np.array([[z]]))[0],
                              -1.0, 1.0)
    assert abs(val - 1.0) < 1e-8

    k2 = make_default_profile(2)
    val2, _ = integrate.quad(
        lambda r: 2.0 * np.pi * r * kernel_eval(k2, np.array([[r, 0.0]]))[0],
        0.0, 1.0)
    assert abs(val2 - 1.0) < 1e-8


def test_profile_is_c2_at_boundary():
    # (1-u)^3 has value and first two u-derivatives equal to zero at u=1
    c = np.asarray(make_default_profile(1).profile_coeffs, dtype=float)
    d1 = np.polynomial.polynomial.polyder(c)
    d2 = np.polynomial.polynomial.polyder(c, 2)
    for coeffs in (c, d1, d2):
        assert abs(np.polynomial.polynomial.polyval(1.0, coeffs)) < 1e-15


def test_kernel_eval_values():
    k = make_default_profile(1)
    pts = np.array([[0.0], [0.5], [1.0], [2.0]])
    vals = kernel_eval(k, pts)
    want = 35.0 / 32.0 * np.array([1.0, (1 - 0.25) ** 3, 0.0, 0.0])
    assert np.allclose(vals, want, atol=1e-15)


def test_kernel_eval_radial_in_d2():
    k = make_default_profile(2)
    a = kernel_eval(k, np.array([[0.3, 0.4]]))
    b = kernel_eval(k, np.array([[0.5, 0.0]]))
    assert abs(a[0] - b[0]) < 1e-15


def test_scalar_moments_exact_rationals():
    m = moments(make_default_profile(1), 6)
    assert abs(m.tau(0) - 1.0) < 1e-14
    assert abs(m.tau(2) - 1.0 / 9.0) < 1e-14
    assert abs(m.tau(4) - 1.0 / 33.0) < 1e-14
    assert abs(m.tau(6) - 5.0 / 429.0) < 1e-14


def test_d2_moments():
    m = moments(make_default_profile(2), 4)
    assert abs(m.tau(0) - 1.0) < 1e-14
    assert abs(m.tau(2) - 0.2) < 1e-14      # 8 * int r^3 (1-r^2)^3 dr
    assert abs(m.multi[(2, 0)] - 0.1) < 1e-14
    assert m.multi[(1, 1)] == 0.0
    assert m.multi[(3, 0)] == 0.0


def test_odd_moments_vanish():
    m = moments(make_default_profile(1), 6)
    quad = integrate.quad
    k = make_default_profile(1)
    for order in (1, 3):
        val, _ = quad(lambda z: z ** order * kernel_eval(k, np.array([[z]]))[0],
                      -1.0, 1.0)
        assert abs(val) < 1e-12
    assert m.multi[(1,)] == 0.0


def test_moments_order_bounds():
    k = make_default_profile(1)
    with pytest.raises(MomentOrderError):
        moments(k, 0)
    with pytest.raises(MomentOrderError):
        moments(k, 7)


def test_custom_kernel_normalized():
    # (1 - u/2)^2 vanishes with its first derivative at u = 2
    k = make_radial_kernel((1.0, -1.0, 0.25), support=2.0, dim=1)
    val, _ = integrate.quad(lambda z: kernel_eval(k, np.array([[z]]))[0],
                            -np.sqrt(2.0), np.sqrt(2.0))
    assert abs(val - 1.0) < 1e-10


def test_rejects_bad_profiles():
    with pytest.raises(KernelConstructionError):
        make_radial_kernel((1.0, -3.0), support=-1.0)
    with pytest.raises(KernelConstructionError):
        make_radial_kernel((-1.0,), support=1.0)
    with pytest.raises(KernelConstructionError):
        # goes negative inside the support
        make_radial_kernel((1.0, -2.0), support=1.0)
    with pytest.raises(KernelConstructionError):
        # nonzero slope at the support edge
        make_radial_kernel((1.0, -1.0), support=1.0)


def test_fourth_order_constants_exact():
    G = make_fourth_order_kernel()
    assert isinstance(G, FourthOrderKernelSpec)
    # a, b solve  a m0 + b m2 = 1,  a m2 + b m4 = 0  for w = (1-z^2)^4
    assert abs(G.coeff_const - 2079.0 / 1024.0) < 1e-12
    assert abs(G.coeff_quad + 9009.0 / 1024.0) < 1e-11
    assert abs(G.fourth_moment + 1.0 / 65.0) < 1e-12


def test_fourth_order_moment_gates():
    G = make_fourth_order_kernel()
    g = lambda z: np.polynomial.polynomial.polyval(z, G.poly_coeffs)
    val, _ = integrate.quad(g, -1.0, 1.0)
    assert abs(val - 1.0) < 1e-8
    for i in (1, 2, 3):
        vi, _ = integrate.quad(lambda z: z ** i * g(z), -1.0, 1.0)
        assert abs(vi) < 1e-8
    v4, _ = integrate.quad(lambda z: z ** 4 * g(z), -1.0, 1.0)
    assert abs(v4) > 1e-3
    assert abs(v4 - G.fourth_moment) < 1e-10
