import math

import numpy as np
import pytest

mpmath = pytest.importorskip("mpmath")

from app.errors import BesselOverflowError, DomainError, InvalidParameterError
from app.services import specfun
from app.services.specfun import (
    asymptotic_switch,
    besselI_imag_real,
    besselI_imag_real_deriv,
    besselI_imag_real_deriv_scaled,
    besselI_imag_real_scaled,
    besselK_imag,
    besselK_imag_deriv,
    besselK_imag_deriv_scaled,
    besselK_imag_scaled,
    besselK_imag_series,
    gamma_modulus,
    gamma_phase,
    make_corner,
    mu_branch,
    solve_kappa,
    solve_mu,
)

STOKES_ALPHA = math.pi / 3
STOKES_RHO = math.sqrt(3) / 2
KAPPA = 1.07


def mp_bisect(func, lo, hi, width=1e-14):
    mpmath.mp.dps = 40
    lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
    f_lo = func(lo)
    while hi - lo > width:
        mid = (lo + hi) / 2
        f_mid = func(mid)
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def mp_gamma_phase(y):
    mpmath.mp.dps = 30
    y = mpmath.mpf(y)
    tail = mpmath.nsum(lambda n: y / n - mpmath.atan(y / n), [1, mpmath.inf])
    return float(-mpmath.euler * y + tail)


def mp_K(kappa, z):
    mpmath.mp.dps = 30
    return float(mpmath.re(mpmath.besselk(1j * mpmath.mpf(kappa), mpmath.mpf(z))))


def mp_I(kappa, z):
    mpmath.mp.dps = 30
    return float(mpmath.re(mpmath.besseli(1j * mpmath.mpf(kappa), mpmath.mpf(z))))


# ---- roots ----

def test_stokes_kappa_matches_published_constant():
    kappa = solve_kappa(STOKES_ALPHA, STOKES_RHO)
    assert 1.065 <= kappa <= 1.075
    assert abs(kappa * math.tanh(kappa * STOKES_ALPHA) - STOKES_RHO) <= 1e-12 * STOKES_RHO


def test_kappa_vanishes_with_rho0():
    kappa = solve_kappa(1.0, 1e-10)
    assert kappa < 1e-4
    assert kappa == pytest.approx(math.sqrt(1e-10), rel=1e-6)


def test_kappa_against_bisection_oracle():
    oracle = mp_bisect(lambda k: k * mpmath.tanh(k * mpmath.pi / 2) - 1, 0.0, 10.0)
    assert solve_kappa(math.pi / 2, 1.0) == pytest.approx(oracle, abs=1e-13)


@pytest.mark.parametrize("alpha_star, rho0", [(0.0, 1.0), (math.pi, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_invalid_corner_inputs_rejected(alpha_star, rho0):
    with pytest.raises(InvalidParameterError):
        solve_kappa(alpha_star, rho0)


def test_stokes_mu1_is_three_halves_tau1():
    mu1 = solve_mu(STOKES_ALPHA, STOKES_RHO, 1)
    assert mu1 == pytest.approx(2.7, abs=0.05)
    assert mu1 > 1.0


def test_mu_tends_to_branch_end_for_small_rho0():
    for k in (1, 2, 5):
        mu = solve_mu(1.2, 1e-9, k)
        assert mu == pytest.approx(k * math.pi / 1.2, rel=1e-8)


def test_mu_against_bisection_oracle():
    lo, hi = mu_branch(math.pi / 2, 2)
    oracle = mp_bisect(
        lambda m: m * mpmath.sin(m * mpmath.pi / 2) + 0.5 * mpmath.cos(m * mpmath.pi / 2), lo, hi
    )
    assert solve_mu(math.pi / 2, 0.5, 2) == pytest.approx(oracle, abs=1e-13)


def test_random_corner_residuals_and_branches():
    rng = np.random.default_rng(0)
    alphas = rng.uniform(0.1, math.pi - 0.1, 1000)
    rhos = rng.uniform(0.01, 10.0, 1000)
    for alpha_star, rho0 in zip(alphas, rhos):
        kappa = solve_kappa(alpha_star, rho0)
        assert abs(kappa * math.tanh(kappa * alpha_star) - rho0) <= 1e-12 * rho0
        for k in (1, 2, 3):
            mu = solve_mu(alpha_star, rho0, k)
            x = mu * alpha_star
            assert (k - 1) * math.pi + math.pi / 2 < x <= k * math.pi
            assert abs(mu * math.tan(x) + rho0) <= 1e-10 * max(1.0, mu)


def test_inadmissible_corner_fails():
    # a wide angle with a strong Robin constant pushes mu_1 below 1
    with pytest.raises(InvalidParameterError):
        make_corner(3.0, 5.0)


def test_make_corner_stokes():
    corner = make_corner(STOKES_ALPHA, STOKES_RHO, gamma=1.0, alpha=0.5)
    assert corner.kappa == pytest.approx(1.07, abs=0.005)
    assert list(corner.mu) == sorted(corner.mu)
    assert corner.ratio == pytest.approx(math.exp(math.pi / corner.kappa))
    with pytest.raises(Exception):
        corner.kappa = 2.0


# ---- gamma phase ----

def test_gamma_phase_vanishes_at_zero():
    assert abs(gamma_phase(1e-9)) < 1e-8


def test_gamma_modulus_identity():
    for kappa in np.linspace(0.01, 20.0, 97):
        lhs, rhs = gamma_modulus(kappa)
        assert abs(math.expm1(lhs - rhs)) <= 1e-12


def test_gamma_phase_against_series_oracle():
    for kappa in np.linspace(0.05, 10.0, 100):
        assert gamma_phase(kappa) == pytest.approx(mp_gamma_phase(kappa), abs=1e-10)


def test_gamma_phase_stokes_value():
    assert gamma_phase(KAPPA) == pytest.approx(mp_gamma_phase(KAPPA), abs=1e-12)
    assert -0.35 < gamma_phase(KAPPA) < -0.25


# ---- Bessel K ----

def test_K_large_argument_ratio():
    z = 50.0
    ratio = besselK_imag(KAPPA, z) / (math.sqrt(math.pi / (2 * z)) * math.exp(-z))
    assert ratio == pytest.approx(1.0, abs=0.03)


def test_K_small_argument_limit():
    z = 1e-6
    gk = gamma_phase(KAPPA)
    expected = -math.sqrt(math.pi / (KAPPA * math.sinh(math.pi * KAPPA))) * math.sin(
        KAPPA * math.log(z / 2) - gk
    )
    assert besselK_imag(KAPPA, z) == pytest.approx(expected, abs=1e-6)


def test_K_reference_value():
    assert besselK_imag(1.0, 1.0) == pytest.approx(mp_K(1.0, 1.0), rel=1e-10)


@pytest.mark.parametrize("z", [1e-8, 1e-3, 0.3, 1.0, 3.0, 10.0, 24.0, 26.0, 60.0, 300.0, 690.0])
def test_K_against_mpmath(z):
    expected = mp_K(KAPPA, z)
    got = besselK_imag(KAPPA, z)
    # below the last zero only absolute accuracy is meaningful
    scale = max(abs(expected), 1e-3) if z < 0.3 else abs(expected)
    assert abs(got - expected) <= 1e-10 * scale


def test_K_cross_regime_integral_vs_series():
    z = np.geomspace(0.05, 2.0, 15)
    assert np.allclose(besselK_imag(KAPPA, z), besselK_imag_series(KAPPA, z), rtol=1e-8, atol=1e-12)


def test_K_cross_regime_integral_vs_asymptotic():
    z = np.linspace(20.0, 30.0, 11)
    integral = specfun._k_integral(KAPPA, z, derivative=False)
    value, _ = specfun._asymptotic_sums(KAPPA, z, alternating=False)
    assert np.allclose(integral, math.sqrt(math.pi / 2) * value, rtol=1e-8, atol=0.0)


def test_K_underflows_beyond_range():
    assert besselK_imag(KAPPA, 800.0) == 0.0
    assert besselK_imag_scaled(KAPPA, 800.0) > 0.0


def test_K_domain_error():
    with pytest.raises(DomainError):
        besselK_imag(KAPPA, 0.0)
    with pytest.raises(DomainError):
        besselK_imag(KAPPA, np.array([1.0, -1.0]))


def test_K_vectorized_matches_scalar():
    z = np.array([0.2, 2.0, 40.0])
    vec = besselK_imag(KAPPA, z)
    assert vec.shape == (3,)
    for zi, vi in zip(z, vec):
        assert vi == pytest.approx(besselK_imag(KAPPA, float(zi)), rel=1e-14)


# ---- Bessel Ĩ ----

def test_I_small_argument_limit():
    z = 1e-6
    gk = gamma_phase(KAPPA)
    expected = math.sqrt(math.sinh(math.pi * KAPPA) / (math.pi * KAPPA)) * math.cos(
        KAPPA * math.log(z / 2) - gk
    )
    assert besselI_imag_real(KAPPA, z) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("z", [1e-4, 0.5, 1.0, 5.0, 20.0, 30.0, 100.0])
def test_I_against_mpmath(z):
    expected = mp_I(KAPPA, z)
    assert besselI_imag_real(KAPPA, z) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_I_growth_rate():
    z = 30.0
    normalized = besselI_imag_real(KAPPA, z) * math.sqrt(2 * math.pi * z) / math.exp(z)
    assert normalized == pytest.approx(1.0, abs=0.05)


def test_I_cross_regime_series_vs_asymptotic():
    z = np.linspace(20.0, 30.0, 11)
    series, _ = specfun.besselI_imag_complex(KAPPA, z)
    value, _ = specfun._asymptotic_sums(KAPPA, z, alternating=True)
    asymptotic = value * np.exp(z) / math.sqrt(2 * math.pi)
    assert np.allclose(np.real(series), asymptotic, rtol=1e-8, atol=0.0)


def test_I_overflow_is_explicit():
    with pytest.raises(BesselOverflowError):
        besselI_imag_real(KAPPA, 800.0)
    with pytest.raises(OverflowError):
        besselI_imag_real_deriv(KAPPA, 701.0)
    assert np.isfinite(besselI_imag_real_scaled(KAPPA, 800.0))


# ---- derivatives and Wronskian ----

@pytest.mark.parametrize("z", [0.1, 1.0, 10.0])
def test_wronskian(z):
    w = besselI_imag_real(KAPPA, z) * besselK_imag_deriv(KAPPA, z) - besselI_imag_real_deriv(
        KAPPA, z
    ) * besselK_imag(KAPPA, z)
    assert w == pytest.approx(-1.0 / z, rel=1e-9)


@pytest.mark.parametrize("z", [1e-6, 0.01, 3.0, 24.9, 25.1, 40.0, 200.0, 650.0])
def test_wronskian_scaled_across_range(z):
    w = besselI_imag_real_scaled(KAPPA, z) * besselK_imag_deriv_scaled(
        KAPPA, z
    ) - besselI_imag_real_deriv_scaled(KAPPA, z) * besselK_imag_scaled(KAPPA, z)
    assert w == pytest.approx(-1.0 / z, rel=1e-9)


def test_K_derivative_negative_past_last_extremum():
    z = np.geomspace(1.0, 600.0, 40)
    assert np.all(besselK_imag_deriv(KAPPA, z) < 0.0)


def test_K_derivative_finite_difference():
    z, h = 2.0, 1e-5
    fd = (besselK_imag(KAPPA, z + h) - besselK_imag(KAPPA, z - h)) / (2 * h)
    assert besselK_imag_deriv(KAPPA, z) == pytest.approx(fd, abs=1e-7)


def test_I_derivative_finite_difference():
    z, h = 3.0, 1e-5
    fd = (besselI_imag_real(KAPPA, z + h) - besselI_imag_real(KAPPA, z - h)) / (2 * h)
    assert besselI_imag_real_deriv(KAPPA, z) == pytest.approx(fd, rel=1e-7)


# ---- large orders ----

LARGE_ORDER_POINTS = [
    (5.0, 30.0), (5.0, 45.0), (5.0, 55.0),
    (8.0, 26.0), (8.0, 120.0), (8.0, 140.0),
    (12.0, 40.0), (12.0, 260.0), (12.0, 320.0),
]


def test_asymptotic_switch_grows_with_order():
    assert asymptotic_switch(KAPPA) == specfun.LARGE_Z
    assert asymptotic_switch(8.0) == pytest.approx(128.0)
    assert asymptotic_switch(12.0) > asymptotic_switch(8.0)


@pytest.mark.parametrize("kappa, z", LARGE_ORDER_POINTS)
def test_K_large_order_against_mpmath(kappa, z):
    expected = mp_K(kappa, z)
    assert besselK_imag(kappa, z) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kappa, z", LARGE_ORDER_POINTS)
def test_I_large_order_against_mpmath(kappa, z):
    expected = mp_I(kappa, z)
    assert besselI_imag_real(kappa, z) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kappa", [5.0, 8.0, 12.0])
def test_large_order_wronskian_on_both_sides_of_switch(kappa):
    for z in (0.95 * asymptotic_switch(kappa), 1.05 * asymptotic_switch(kappa)):
        w = besselI_imag_real_scaled(kappa, z) * besselK_imag_deriv_scaled(
            kappa, z
        ) - besselI_imag_real_deriv_scaled(kappa, z) * besselK_imag_scaled(kappa, z)
        assert w == pytest.approx(-1.0 / z, rel=1e-9)
