import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from scipy.linalg import eigvalsh

from app.errors import DomainError, FitError, InvalidParameterError
from app.services.angle_modes import basis_eval, build_basis
from app.services.model1d import interval_eigenvalues
from app.services.solver2d.compare import MeshParams, closure_compare, ladder_run
from app.services.solver2d.dtn import dtn_alpha_fn, dtn_solve, outer_space
from app.services.solver2d.eigen import (
    EigenReport,
    arc_h_component,
    eigenfunction_profile,
    fit_asymptotics,
    mode_weighted_norms,
    solve_ladder,
    solve_negative_spectrum,
    surface_bc_residual,
    with_fit,
)
from app.services.solver2d.mesh import generate_mesh
from app.services.solver2d.space import (
    assemble,
    assemble_full,
    build_space,
    check_symmetry,
    enrichment_self_coupling,
    enrichment_wall_flux,
    evaluate_coefficients,
    locate_points,
)
from app.services.specfun import besselK_imag, besselK_imag_deriv, ladder_prediction, make_corner
from app.services.waterwave import STOKES_RHO0, profile_from_expansion

DELTA = 0.2


def constant_rho(x):
    return np.full(np.shape(x), STOKES_RHO0)


@pytest.fixture(scope="module")
def straight():
    return profile_from_expansion(0.0, 0.0, 0.5)


@pytest.fixture(scope="module")
def corner():
    return make_corner(math.pi / 3, STOKES_RHO0, gamma=1.0, alpha=0.5)


@pytest.fixture(scope="module")
def coarse_space(straight, corner):
    mesh = generate_mesh(straight, 0.25, 0.6, 15)
    return build_space(mesh, straight, corner, degree=2, delta=DELTA)


@pytest.fixture(scope="module")
def plain_space(straight, corner):
    mesh = generate_mesh(straight, 0.1, 0.7, 10)
    return build_space(mesh, straight, corner, degree=2, delta=DELTA, enrich=False)


@pytest.fixture(scope="module")
def coarse_system(coarse_space):
    return assemble(coarse_space, None, constant_rho)


@pytest.fixture(scope="module")
def desk(straight, corner):
    mesh = generate_mesh(straight, 0.1, 0.8, 55)
    space = build_space(mesh, straight, corner, degree=2, delta=DELTA)
    A, M = assemble(space, None, constant_rho)
    report = solve_ladder(space, A, M, (0, 3))
    return space, report


@pytest.fixture(scope="module")
def outer(straight, corner):
    return outer_space(straight, corner, DELTA)


# ---- space and assembly ----

def test_space_layout(coarse_space):
    assert coarse_space.singular_dofs == 1
    assert coarse_space.n_free == coarse_space.free_dofs.size + 1
    assert coarse_space.mesh.corner_vertex in coarse_space.dirichlet_dofs
    bottom = coarse_space.dof_coords[coarse_space.dirichlet_dofs]
    assert np.all((bottom[:, 1] == 0.0) | (bottom[:, 0] == 0.0))
    assert coarse_space.cutoff == (0.5 * DELTA, DELTA)


def test_reduced_matrices_are_symmetric(coarse_system):
    A, M = coarse_system
    assert check_symmetry(A) <= 1e-12
    assert check_symmetry(M) <= 1e-12


def test_stiffness_annihilates_constants(plain_space):
    A, _ = assemble_full(plain_space)
    ones = np.ones(plain_space.n_poly)
    assert np.abs(A @ ones).max() <= 1e-10 * abs(A).max()


def test_mass_integrates_domain_area(plain_space, straight):
    _, M = assemble_full(plain_space)
    nodes, weights = np.polynomial.legendre.leggauss(200)
    x = 0.5 * (nodes + 1.0) * straight.half_period
    area = 0.5 * straight.half_period * float(np.sum(weights * straight.eta(x)))
    assert M.sum() == pytest.approx(area, rel=1e-3)


def test_form_is_positive_without_robin(plain_space):
    A, M = assemble(plain_space)
    smallest = eigvalsh(A.toarray(), M.toarray(), subset_by_index=[0, 0])[0]
    assert smallest > 0.0


def test_self_coupling_converges(coarse_space):
    a1, m1, scale = enrichment_self_coupling(coarse_space, None, constant_rho, rule=(12, 16))
    a2, m2, _ = enrichment_self_coupling(coarse_space, None, constant_rho, rule=(20, 24))
    assert abs(a1 - a2) <= 1e-8 * scale
    assert m1 == pytest.approx(m2, rel=1e-8)
    assert m2 > 0.0


def test_singular_function_satisfies_corner_conditions(coarse_space, straight):
    singular = coarse_space.singular
    assert enrichment_wall_flux(coarse_space) <= 1e-12
    r = np.geomspace(1e-6, 0.9 * singular.cutoff[0], 40)
    x = r * math.sin(straight.alpha_star)
    y = straight.eta(x)
    gx, gy = singular.gradient(x, y)
    normal = np.array([straight.a0, 1.0]) / math.hypot(straight.a0, 1.0)
    flux = gx * normal[0] + gy * normal[1]
    robin = STOKES_RHO0 * singular.value(x, y) / r
    assert np.allclose(flux, robin, rtol=1e-8, atol=1e-8 * np.abs(robin).max())


def test_cutoff_must_stay_in_straight_region(coarse_space, straight, corner):
    mesh = coarse_space.mesh
    with pytest.raises(InvalidParameterError):
        build_space(mesh, straight, corner, delta=DELTA, cutoff=(0.1, 0.05))
    with pytest.raises(InvalidParameterError):
        build_space(mesh, straight, corner, delta=0.1, cutoff=(0.1, 0.35))
    with pytest.raises(InvalidParameterError):
        build_space(mesh, straight, corner, degree=3)


def test_potential_shift_moves_spectrum(coarse_space, coarse_system):
    A0, M = coarse_system
    c = -5.0
    Ac, _ = assemble(coarse_space, lambda x, y: np.full(np.shape(x), c), constant_rho)
    assert spla.norm(Ac - A0 - c * M) <= 1e-10 * spla.norm(c * M)
    shift = -ladder_prediction(coarse_space.corner, 1) ** 2
    base = solve_negative_spectrum(A0, M, 1, shift=shift, method="dense")
    moved = solve_negative_spectrum(Ac, M, 1, shift=shift + c, method="dense")
    assert np.allclose(np.array(moved.eigenvalues), np.array(base.eigenvalues) + c, rtol=1e-9)


# ---- point location ----

def test_affine_fields_are_reproduced(plain_space):
    coords = plain_space.dof_coords
    coeffs = coords[:, 0] + coords[:, 1]
    centroids = plain_space.mesh.nodes[plain_space.mesh.elements].mean(axis=1)
    values = evaluate_coefficients(plain_space, coeffs, 0.0, centroids[:, 0], centroids[:, 1])
    assert np.allclose(values, centroids.sum(axis=1), atol=1e-10)


def test_points_outside_domain_are_rejected(plain_space):
    with pytest.raises(DomainError):
        locate_points(plain_space, np.array([[0.5, 5.0]]))


# ---- eigensolver ----

def test_dense_and_iterative_agree(coarse_space, coarse_system):
    A, M = coarse_system
    assert 300 <= A.shape[0] <= 1500
    shift = -ladder_prediction(coarse_space.corner, 1) ** 2
    dense = solve_negative_spectrum(A, M, 3, shift=shift, method="dense")
    iterative = solve_negative_spectrum(A, M, 3, shift=shift, method="iterative")
    assert len(dense.eigenvalues) >= 1
    assert np.allclose(dense.eigenvalues, iterative.eigenvalues, rtol=1e-9)
    assert max(dense.residuals) <= 1e-8
    assert all(c >= 0.0 for c in dense.sing_coeffs)


def test_eigenvectors_are_mass_normalized(coarse_system):
    A, M = coarse_system
    report = solve_negative_spectrum(A, M, 2, method="dense")
    V = report.vectors
    assert np.allclose(V.T @ (M @ V), np.eye(V.shape[1]), atol=1e-9)


def test_iterative_path_needs_a_shift(coarse_system):
    A, M = coarse_system
    with pytest.raises(InvalidParameterError):
        solve_negative_spectrum(A, M, 2, method="iterative")


def test_unknown_method(coarse_system):
    A, M = coarse_system
    with pytest.raises(InvalidParameterError):
        solve_negative_spectrum(A, M, 2, method="lobpcg")


# ---- ladder fit ----

def synthetic_report(corner, ks):
    taus = ladder_prediction(corner, np.asarray(ks))
    n = len(ks)
    return EigenReport(
        eigenvalues=tuple(float(v) for v in -taus ** 2),
        sing_coeffs=(1.0,) * n,
        residuals=(0.0,) * n,
        vectors=np.zeros((1, n)),
        k=tuple(ks),
    )


def test_fit_of_exact_ladder(corner):
    fit = fit_asymptotics(synthetic_report(corner, [1, 2, 3, 4]), corner)
    assert fit.slope_over_pi == pytest.approx(1.0, rel=1e-12)
    assert fit.intercept_error == pytest.approx(0.0, abs=1e-10)
    assert fit.kappa_fit == pytest.approx(corner.kappa, rel=1e-12)
    assert fit.ratio_fit == pytest.approx(corner.ratio, rel=1e-12)
    assert np.allclose(fit.deviations, 0.0, atol=1e-10)
    assert fit.monotone


def test_fit_intercept_follows_gamma(corner):
    shifted = make_corner(corner.alpha_star, corner.rho0, gamma=corner.gamma + 0.4, alpha=corner.alpha)
    fit = fit_asymptotics(synthetic_report(shifted, [1, 2, 3]), corner)
    assert fit.intercept_error == pytest.approx(0.4, abs=1e-10)


def test_fit_needs_three_eigenvalues(corner):
    with pytest.raises(FitError):
        fit_asymptotics(synthetic_report(corner, [1, 2]), corner)


def test_report_selection(corner):
    report = synthetic_report(corner, [0, 1, 2, 3])
    sub = report.select([3, 1])
    assert sub.k == (3, 1)
    assert sub.eigenvalues[0] < sub.eigenvalues[1]
    with pytest.raises(InvalidParameterError):
        report.index_of(7)


# ---- arc projection ----

def test_arc_projection_of_separable_field(corner):
    basis = build_basis(corner, n_modes=0)
    tau = 5.0
    crest = (0.0, 1.0)

    def field(x, y):
        r = np.hypot(x - crest[0], crest[1] - y)
        theta = np.arctan2(x - crest[0], crest[1] - y)
        return besselK_imag(corner.kappa, tau * r) * basis_eval(basis, 0, theta)

    radii = np.linspace(0.01, 0.5, 7)
    h = arc_h_component(field, basis, crest, radii)
    assert np.allclose(h, besselK_imag(corner.kappa, tau * radii), rtol=1e-10)


# ---- desk ladder on the straight corner ----

@pytest.mark.slow
def test_desk_ladder_follows_prediction(desk, corner):
    _, report = desk
    assert set(report.k) == {0, 1, 2, 3}
    fit = fit_asymptotics(report.select([1, 2, 3]), corner)
    assert 0.95 <= fit.slope_over_pi <= 1.05
    assert abs(fit.intercept_error) < 0.1
    assert fit.monotone


@pytest.mark.slow
def test_desk_modes_are_bessel_profiles(desk, corner):
    space, report = desk
    basis = build_basis(corner, n_modes=4)
    samples = eigenfunction_profile(report, 1, space, basis, np.geomspace(1e-4, 0.3, 150))
    assert samples.correlation >= 0.99
    assert samples.w_fraction < 1e-3


@pytest.mark.slow
def test_desk_w_component_drops_along_ladder(desk, corner):
    space, report = desk
    basis = build_basis(corner, n_modes=4)
    radii = np.geomspace(1e-3, 0.45, 120)
    low = eigenfunction_profile(report, 0, space, basis, radii)
    high = eigenfunction_profile(report, 1, space, basis, radii)
    assert high.w_fraction < low.w_fraction


@pytest.mark.slow
def test_desk_profile_leaves_sector(desk, corner):
    space, report = desk
    basis = build_basis(corner, n_modes=0)
    with pytest.raises(DomainError):
        eigenfunction_profile(report, 1, space, basis, np.array([0.1, 0.8]))


@pytest.mark.slow
def test_desk_weighted_norms_are_scale_free(desk):
    space, report = desk
    norms = [mode_weighted_norms(report, space, k, 0.5) for k in (1, 2, 3)]
    l2 = np.array([n.l2_scaled for n in norms])
    grad = np.array([n.grad_scaled for n in norms])
    assert l2.max() / l2.min() < 1.2
    assert grad.max() / grad.min() < 1.2
    with pytest.raises(InvalidParameterError):
        mode_weighted_norms(report, space, 1, 0.0)


@pytest.mark.slow
def test_desk_surface_residual_drops_under_refinement(desk, straight, corner):
    space, report = desk
    fine = surface_bc_residual(report, space, 0, constant_rho)
    mesh = generate_mesh(straight, 0.2, 0.8, 58)
    coarse_space = build_space(mesh, straight, corner, delta=DELTA)
    A, M = assemble(coarse_space, None, constant_rho)
    coarse = solve_ladder(coarse_space, A, M, (0, 0))
    rough = surface_bc_residual(coarse, coarse_space, 0, constant_rho)
    assert fine < rough


@pytest.mark.slow
def test_desk_gamma_shift_moves_intercept(desk, straight, corner):
    _, report = desk
    shifted = make_corner(corner.alpha_star, corner.rho0, gamma=corner.gamma + 0.5, alpha=corner.alpha)
    other = ladder_run(straight, shifted, constant_rho, (1, 3), MeshParams(), DELTA)
    base_fit = with_fit(report.select([1, 2, 3]), corner).fit
    other_fit = with_fit(other, shifted).fit
    assert other_fit.intercept - base_fit.intercept == pytest.approx(0.5, abs=0.1)


# ---- Dirichlet-to-Neumann closure ----

@pytest.mark.slow
@pytest.mark.parametrize("tau", [40.0, 80.0, 160.0])
def test_dtn_matches_sector_solution(outer, corner, tau):
    result = dtn_solve(outer, tau, None, constant_rho)
    z = tau * DELTA
    exact = tau * (besselK_imag_deriv(corner.kappa, z) / besselK_imag(corner.kappa, z) + 1.0)
    assert result.h == 1.0
    assert result.alpha == pytest.approx(exact, abs=0.5)
    assert result.w_norm < 1e-2


@pytest.mark.slow
def test_dtn_rejects_non_coercive_form(outer):
    with pytest.raises(InvalidParameterError):
        dtn_solve(outer, 10.0, None, lambda x: np.full(np.shape(x), 50.0))


def test_dtn_needs_an_arc(coarse_space):
    with pytest.raises(InvalidParameterError):
        dtn_solve(coarse_space, 10.0)


@pytest.mark.slow
def test_closure_against_desk_ladder(desk, outer, corner):
    _, report = desk
    alpha_fn, samples = dtn_alpha_fn(outer, [40.0, 80.0, 160.0], None, constant_rho)
    assert len(samples) == 3
    rows = closure_compare(report, corner, DELTA, alpha_fn)
    assert sorted(row.k for row in rows) == [2, 3]
    for row in rows:
        assert row.error_dtn < 1e-2
        assert row.error_zero < 1e-2
    direct = interval_eigenvalues(corner, DELTA, alpha_fn, [2])
    row2 = next(row for row in rows if row.k == 2)
    assert direct.entry(2).tau_hat == pytest.approx(row2.tau_dtn)
