import math

import numpy as np
import pytest

from app.errors import DomainError, InvalidParameterError, PoleError, ResolutionWarning
from app.services.model1d import (
    boundary_value_scaling,
    extension_constant,
    extension_window,
    halfline_fd_modes,
    halfline_fd_oracle,
    halfline_ladder,
    interval_eigenfunction,
    interval_eigenvalues,
    interval_fd_oracle,
    interval_psi,
    interval_Q,
    localization_fraction,
    mode_norm_closed,
    mode_norm_constant,
    moment_scalings,
    oracle_correlation,
    robin_residual,
    secular_residual,
)
from app.services.specfun import (
    besselI_imag_real,
    besselI_imag_real_deriv,
    besselK_imag,
    besselK_imag_deriv,
    ladder_prediction,
    make_corner,
)


@pytest.fixture(scope="module")
def corner():
    return make_corner(math.pi / 3, math.sqrt(3) / 2, gamma=0.0, alpha=0.5)


@pytest.fixture(scope="module")
def oracle(corner):
    r_min = 0.01 / (2 * ladder_prediction(corner, 2))
    r_max = 30.0 / ladder_prediction(corner, 0)
    return halfline_fd_modes(corner, r_min, r_max, 10_000)


@pytest.fixture(scope="module")
def spectrum(corner):
    return interval_eigenvalues(corner, 1.0, None, (1, 3))


# ---- half-line ladder ----

def test_ladder_ratio_is_exact(corner):
    ladder = halfline_ladder(corner, (-2, 4))
    taus = np.array(ladder.tau)
    assert np.allclose(taus[1:] / taus[:-1], math.exp(math.pi / corner.kappa), rtol=1e-13)
    assert ladder.ratio == pytest.approx(math.exp(math.pi / 1.07), rel=0.01)
    assert np.allclose(ladder.tau_factor2, 2 * taus)


def test_ladder_phase_relation(corner):
    ladder = halfline_ladder(corner, range(0, 4))
    for k, tau in zip(ladder.k, ladder.tau):
        assert corner.kappa * math.log(tau) - corner.gamma - corner.gamma_kappa == pytest.approx(k * math.pi)


def test_gamma_shift_by_pi_moves_one_rung(corner):
    shifted = corner.model_copy(update={"gamma": corner.gamma + math.pi})
    a = halfline_ladder(shifted, (0, 3)).tau
    b = halfline_ladder(corner, (1, 4)).tau
    assert np.allclose(a, b, rtol=1e-13)


def test_gamma_shift_covariance(corner):
    moved = corner.model_copy(update={"gamma": 1.3})
    base = np.array(halfline_ladder(corner, (0, 3)).tau)
    new = np.array(halfline_ladder(moved, (0, 3)).tau)
    assert np.allclose(new / base, math.exp(1.3 / corner.kappa), rtol=1e-13)


def test_empty_k_range_gives_empty_ladder(corner):
    ladder = halfline_ladder(corner, (3, 2))
    assert ladder.tau == ()


# ---- half-line oracle ----

def test_oracle_decides_normalization(corner, oracle):
    taus = np.sqrt(-np.asarray(oracle.eigenvalues))[::-1]
    assert taus.size == 3
    plain = np.array([ladder_prediction(corner, k) for k in range(3)])
    assert np.allclose(taus, plain, rtol=1e-3)
    assert not np.allclose(taus, 2 * plain, rtol=0.1)


def test_oracle_ratio(corner, oracle):
    taus = np.sqrt(-np.asarray(oracle.eigenvalues))[::-1]
    ratios = taus[1:] / taus[:-1]
    assert np.allclose(ratios, math.exp(math.pi / corner.kappa), rtol=1e-3)


def test_oracle_eigenvalues_simple(corner, oracle):
    lam = -np.asarray(oracle.eigenvalues)[::-1]
    gaps = np.diff(lam)
    predicted = lam[:-1] * (corner.ratio ** 2 - 1)
    assert np.all(gaps > 0.5 * predicted)


def test_oracle_modes_are_bessel_K(corner, oracle):
    for index in range(len(oracle.eigenvalues)):
        assert oracle_correlation(corner, oracle, index) > 0.999


def test_oracle_converges_under_refinement(corner):
    r_min, r_max = 1e-3 / 14.0, 40.0
    target = ladder_prediction(corner, 1)
    errors = []
    for n in (1000, 4000):
        eigs = halfline_fd_oracle(corner, r_min, r_max, n, k_range=[1])
        errors.append(abs(math.sqrt(-eigs[0]) - target) / target)
    assert errors[1] < errors[0]


def test_coarse_grid_warns(corner):
    with pytest.warns(ResolutionWarning):
        halfline_fd_oracle(corner, 1e-4, 40.0, 40, k_range=[1])


def test_oracle_with_empty_range(corner):
    assert halfline_fd_oracle(corner, 1e-4, 40.0, 200, k_range=[]).size == 0


# ---- closure Q and phase ψ ----

def test_Q_exponential_scaling(corner):
    delta = 1.0
    for z in (40.0, 60.0, 100.0):
        q = interval_Q(corner, z / delta, delta)
        assert q < 0.0
        assert abs(q) * math.exp(2 * z) * z == pytest.approx(math.pi / 4, rel=0.08)
    # τδ = 20: |Q| stays below the leading bound πe^{−2τδ}/(4τδ)
    assert abs(interval_Q(corner, 20.0, delta)) * math.exp(40.0) <= math.pi / 80


def test_Q_log_bounded(corner):
    logs = [math.log(abs(interval_Q(corner, z, 1.0))) + 2 * z for z in np.linspace(10, 30, 21)]
    assert max(logs) - min(logs) < 2.0


def test_Q_satisfies_robin_condition_directly(corner):
    tau, delta = 20.0, 1.0
    kappa = corner.kappa
    q = interval_Q(corner, tau, delta)
    z = tau * delta
    h = besselK_imag(kappa, z) - q * besselI_imag_real(kappa, z)
    dh = tau * (besselK_imag_deriv(kappa, z) - q * besselI_imag_real_deriv(kappa, z))
    assert abs(dh + tau * h) <= 1e-10 * tau * besselK_imag(kappa, z)


def test_Q_with_nonzero_alpha(corner):
    alpha_fn = lambda s: 0.4 + s
    tau, delta = 12.0, 1.0
    kappa = corner.kappa
    q = interval_Q(corner, tau, delta, alpha_fn)
    a = alpha_fn(1 / tau)
    h = besselK_imag(kappa, tau) - q * besselI_imag_real(kappa, tau)
    dh = tau * (besselK_imag_deriv(kappa, tau) - q * besselI_imag_real_deriv(kappa, tau))
    assert abs(dh + (tau - a) * h) <= 1e-10 * tau * besselK_imag(kappa, tau)


def test_psi_follows_Q(corner):
    for tau in (9.0, 15.0, 25.0):
        q = interval_Q(corner, tau, 1.0)
        psi = interval_psi(corner, tau, 1.0)
        assert np.sign(psi) == np.sign(q)
        assert abs(psi) <= 10 * math.exp(-2 * tau)
    assert interval_psi(corner, 15.0, 1.0) == pytest.approx(
        math.atan(interval_Q(corner, 15.0, 1.0) * math.sinh(math.pi * corner.kappa) / math.pi)
    )


def test_Q_rejects_nonpositive_input(corner):
    with pytest.raises(DomainError):
        interval_Q(corner, -1.0, 1.0)


# ---- interval spectrum ----

@pytest.mark.parametrize("delta", [0.6, 1.0])
def test_interval_roots_follow_closed_form(corner, delta):
    spectrum = interval_eigenvalues(corner, delta, None, (1, 3))
    for entry in spectrum.entries:
        assert abs(entry.residual) <= 1e-12
        deviation = abs(entry.tau_hat - entry.tau_closed) / entry.tau_closed
        assert deviation <= 10 * math.exp(-2 * entry.tau_hat * delta)
        assert abs(secular_residual(corner, entry.tau_hat, entry.k, delta)) <= 1e-12


def test_interval_ratios(spectrum, corner):
    taus = np.array([e.tau_hat for e in spectrum.entries])
    assert np.allclose(taus[1:] / taus[:-1], corner.ratio, rtol=1e-9)


@pytest.mark.parametrize("delta", [0.6, 1.0])
def test_interval_fd_oracle_agrees(corner, delta):
    spectrum = interval_eigenvalues(corner, delta, None, (1, 3))
    for entry in spectrum.entries:
        tau_fd = interval_fd_oracle(corner, delta, entry.k)
        assert tau_fd == pytest.approx(entry.tau_hat, rel=1e-3)


def test_interval_fd_oracle_second_order(corner):
    values = [interval_fd_oracle(corner, 1.0, 1, n_points=n) for n in (400, 800, 1600)]
    rate = (values[0] - values[1]) / (values[1] - values[2])
    assert 3.0 < rate < 5.0


def test_interval_with_alpha_correction(corner):
    alpha_fn = lambda s: -0.5 + 0.1 * s
    spectrum = interval_eigenvalues(corner, 0.6, alpha_fn, [1], damping=0.7)
    entry = spectrum.entries[0]
    assert abs(entry.residual) <= 1e-12
    assert interval_fd_oracle(corner, 0.6, 1, alpha_fn) == pytest.approx(entry.tau_hat, rel=1e-3)


def test_interval_threads_match_serial(corner):
    serial = interval_eigenvalues(corner, 1.0, None, (1, 3))
    threaded = interval_eigenvalues(corner, 1.0, None, (1, 3), threads=3)
    assert [e.tau_hat for e in serial.entries] == [e.tau_hat for e in threaded.entries]


def test_interval_rejects_small_tau_delta(corner):
    with pytest.raises(InvalidParameterError):
        interval_eigenvalues(corner, 0.1, None, [0])


# ---- eigenfunctions ----

def test_eigenfunction_robin_residual(spectrum):
    for entry in spectrum.entries:
        assert robin_residual(spectrum, entry.k) <= 1e-10


def test_eigenfunction_phase_near_origin(spectrum, corner):
    tau = spectrum.entry(1).tau_hat
    r = np.geomspace(1e-9, 1e-5, 40) / tau
    phi = interval_eigenfunction(spectrum, 1, r)
    g = np.sin(corner.kappa * np.log(r / 2) + corner.gamma)
    c = np.dot(phi, g) / np.dot(g, g)
    assert np.max(np.abs(phi - c * g)) <= 1e-6 * abs(c)


def test_boundary_value_is_exponentially_small(spectrum):
    scaled = boundary_value_scaling(spectrum)
    assert all(0.0 < v < 10.0 for v in scaled)


def test_eigenfunction_domain(spectrum):
    with pytest.raises(DomainError):
        interval_eigenfunction(spectrum, 1, np.array([0.5, 1.5]))
    with pytest.raises(InvalidParameterError):
        interval_eigenfunction(spectrum, 9, np.array([0.5]))


def test_eigenfunction_localization(spectrum):
    for entry in spectrum.entries:
        assert localization_fraction(spectrum, entry.k) > 0.99


# ---- moments ----

def test_mode_norm_constant_closed_form(corner):
    assert mode_norm_constant(corner.kappa) == pytest.approx(mode_norm_closed(corner.kappa), rel=1e-8)


def test_l2_moment_tends_to_mode_norm(spectrum, corner):
    rows = moment_scalings(spectrum, 0.0, moments=("l2",))
    assert rows[-1].l2 == pytest.approx(mode_norm_closed(corner.kappa), rel=1e-6)


def test_moments_uniformly_bounded(corner):
    spectrum = interval_eigenvalues(corner, 1.0, None, (1, 5))
    rows = moment_scalings(spectrum, 1.5)
    for name in ("l2", "grad", "second"):
        column = np.array([getattr(row, name) for row in rows])
        assert np.all(column > 0)
        assert column.max() / column.min() < 1.5


def test_negative_beta_only_for_l2(spectrum):
    rows = moment_scalings(spectrum, -0.5, moments=("l2",))
    assert all(row.l2 > 0 for row in rows)
    with pytest.raises(DomainError):
        moment_scalings(spectrum, -0.5)
    with pytest.raises(DomainError):
        moment_scalings(spectrum, 0.5, moments=("second",))


# ---- extension constant ----

def manufactured_rhs(corner, c, tau):
    kappa, gamma = corner.kappa, corner.gamma

    def f(r):
        x = kappa * np.log(r / 2) + gamma
        zeta = np.exp(-r * r)
        return c * zeta * ((4 - 4 * r * r + tau * tau) * np.sin(x) + 4 * kappa * np.cos(x))

    return f


@pytest.mark.parametrize("k, log_shift", [(1, 0.2), (1, -0.4), (2, 0.05), (1, -0.75), (1, 0.75)])
def test_extension_constant_recovers_manufactured_value(k, log_shift):
    corner = make_corner(math.pi / 3, math.sqrt(3) / 2, gamma=0.5)
    tau_k = ladder_prediction(corner, k)
    # tau = tau_k e^{s π/κ}, anywhere inside the window |s| < 1
    tau = tau_k * math.exp(log_shift * math.pi / corner.kappa)
    c = extension_constant(manufactured_rhs(corner, 0.7, tau), corner, tau, tau_k)
    assert c == pytest.approx(0.7, rel=1e-8)


def test_extension_constant_vanishes_for_orthogonal_data(corner):
    tau_k = ladder_prediction(corner, 1)
    tau = 1.3 * tau_k
    f1 = lambda r: np.exp(-r)
    f2 = lambda r: np.exp(-2 * r)
    c1 = extension_constant(f1, corner, tau, tau_k)
    c2 = extension_constant(f2, corner, tau, tau_k)
    combined = lambda r: f1(r) - (c1 / c2) * f2(r)
    assert abs(extension_constant(combined, corner, tau, tau_k)) <= 1e-10 * abs(c1)


def test_extension_constant_blows_up_at_pole(corner):
    tau_k = ladder_prediction(corner, 1)
    f = lambda r: np.exp(-r * r)
    products = [extension_constant(f, corner, tau_k * (1 + eps), tau_k) * eps * tau_k for eps in (1e-2, 1e-3, 1e-4)]
    assert products[2] == pytest.approx(products[1], rel=0.01)
    assert products[1] == pytest.approx(products[0], rel=0.1)


def test_extension_constant_errors(corner):
    tau_k = ladder_prediction(corner, 1)
    f = lambda r: np.exp(-r * r)
    with pytest.raises(PoleError):
        extension_constant(f, corner, tau_k, tau_k)
    with pytest.raises(DomainError):
        extension_constant(f, corner, 1.01 * extension_window(corner) * tau_k, tau_k)


def test_extension_constant_from_samples(corner):
    tau_k = ladder_prediction(corner, 1)
    tau = 1.2 * tau_k
    f = manufactured_rhs(corner, 0.3, tau)
    r = np.geomspace(1e-10, 40.0 / tau, 20001)
    c = extension_constant((r, f(r)), corner, tau, tau_k)
    assert c == pytest.approx(0.3, rel=1e-6)


def test_extension_window_is_one_ladder_step(corner):
    q = extension_window(corner)
    assert q == pytest.approx(corner.ratio, rel=1e-14)
    assert q == pytest.approx(ladder_prediction(corner, 2) / ladder_prediction(corner, 1), rel=1e-12)
