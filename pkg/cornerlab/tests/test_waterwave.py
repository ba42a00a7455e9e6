import math

import numpy as np
import pytest

from app.errors import InvalidParameterError, StagnationError
from app.services.solver2d.compare import MeshParams, curved_vs_model_compare, ladder_run
from app.services.solver2d.eigen import fit_asymptotics
from app.services.solver2d.profile import build_straightened, crest_drop
from app.services.specfun import solve_mu
from app.services.waterwave import (
    STOKES_A0,
    STOKES_RHO0,
    crest_stream_function,
    profile_from_expansion,
    rho_coefficient,
    sigma_from_vorticity,
    stokes_corner_params,
    stokes_linearization,
    stokes_model_profile,
    surface_psi_y,
    tau1_root,
)


@pytest.fixture(scope="module")
def stokes():
    return stokes_model_profile()


@pytest.fixture(scope="module")
def straight():
    return profile_from_expansion(0.0, 0.0, 0.5)


@pytest.fixture(scope="module")
def rho(stokes):
    return rho_coefficient(stokes_linearization(stokes))


# ---- corner constants ----

def test_stokes_corner_constants():
    corner = stokes_corner_params()
    assert corner.alpha_star == pytest.approx(math.pi / 3)
    assert corner.rho0 == pytest.approx(math.sqrt(3) / 2)
    assert 1.065 <= corner.kappa <= 1.075
    assert corner.gamma_kappa == pytest.approx(-0.29, abs=0.02)
    assert corner.alpha == 0.5


def test_tau1_root():
    tau1 = tau1_root()
    assert 1.75 <= tau1 <= 1.85
    assert tau1 == pytest.approx(-math.cos(math.pi * tau1 / 2) / math.sin(math.pi * tau1 / 2) / math.sqrt(3), rel=1e-12)
    assert 1.5 * tau1 == pytest.approx(solve_mu(math.pi / 3, STOKES_RHO0, 1), abs=1e-10)


# ---- Robin coefficient ----

def test_rho_corner_limit(rho):
    assert float(rho(np.array([1e-12]))[0]) == pytest.approx(STOKES_RHO0, rel=1e-5)


def test_rho_remainder_exponent(rho):
    x = np.geomspace(1e-7, 1e-4, 20)
    slope = np.polyfit(np.log(x), np.log(np.abs(rho(x) - STOKES_RHO0)), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.05)


def test_straight_crest_has_constant_rho(straight):
    rho_straight = rho_coefficient(stokes_linearization(straight))
    x = np.geomspace(1e-12, 0.45, 60)
    assert np.allclose(rho_straight(x), STOKES_RHO0, rtol=1e-12)


def test_crest_drop_matches_difference(stokes):
    x = np.array([1e-3, 5e-3, 0.05, 0.3, 0.9])
    assert np.allclose(crest_drop(stokes, x), stokes.eta0 - stokes.eta(x), rtol=1e-10)
    tiny = np.array([1e-12])
    assert crest_drop(stokes, tiny)[0] == pytest.approx(STOKES_A0 * 1e-12, rel=1e-5)


def test_stagnation_below_crest(stokes):
    with pytest.raises(StagnationError):
        rho_coefficient(stokes_linearization(stokes, R=stokes.eta0 - 0.01))


def test_linearization_needs_stokes_corner():
    other = profile_from_expansion(0.0, 0.0, 0.5, a0=0.5)
    with pytest.raises(InvalidParameterError):
        stokes_linearization(other)


# ---- stream function ----

def test_stream_function_is_constant_on_straight_surface(straight):
    psi = crest_stream_function(straight, 1.0)
    x = np.linspace(0.01, 0.45, 20)
    assert np.allclose(psi(x, straight.eta(x)), 1.0, atol=1e-12)


def test_psi_y_is_the_vertical_derivative(stokes):
    psi = crest_stream_function(stokes, 1.0)
    psi_y = surface_psi_y(stokes)
    x = np.array([0.05, 0.1, 0.2])
    y = stokes.eta(x)
    h = 1e-6
    numeric = (psi(x, y + h) - psi(x, y - h)) / (2 * h)
    assert np.allclose(psi_y(x), numeric, rtol=1e-6)


def test_sigma_from_constant_vorticity(stokes):
    sigma = sigma_from_vorticity(lambda psi: np.full(np.shape(psi), 2.0), stokes, 1.0)
    assert np.allclose(sigma(np.array([0.1, 0.4]), np.array([0.5, 0.2])), -2.0)


# ---- curved crest end to end ----

@pytest.mark.slow
def test_curved_ladder_recovers_kappa(stokes, rho):
    corner = stokes_corner_params(gamma=1.0)
    report = ladder_run(stokes, corner, rho, (1, 3), MeshParams(), 0.1)
    fit = fit_asymptotics(report, corner)
    assert fit.kappa_fit == pytest.approx(corner.kappa, rel=0.05)


@pytest.mark.slow
def test_curved_vs_model_difference_is_bounded(stokes, rho):
    corner = stokes_corner_params(gamma=1.0)
    model = build_straightened(stokes, rho, 0.1, rho0=STOKES_RHO0)
    table = curved_vs_model_compare(stokes, model, corner, rho, (1, 3))
    normalized = np.abs(table.normalized)
    assert len(table.rows) == 3
    assert np.all(np.isfinite(normalized))
    assert np.max(normalized[1:]) <= 2.0 * normalized[0]
