"""
Dirichlet-to-Neumann Service

Eliminates the part r > δ of the domain for a rung τ: the outer problem
(−Δ + σ + τ²)u = 0 with the surface Robin condition, u = 0 on the bottom and
the unit trace φ₀(θ) on the arc r = δ is solved, and the normal flux of its
solution gives the Robin closure h′(δ)/h(δ) = −τ + α(τ⁻¹) of the interval
model.
"""

import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.integrate import simpson
from scipy.linalg import eigvalsh
from scipy.sparse.linalg import eigsh, splu

from ...errors import InvalidParameterError, SolverError
from ..angle_modes import AngularBasis, basis_eval, build_basis, project_h
from ..specfun import CornerData
from .eigen import DENSE_LIMIT
from .mesh import generate_mesh
from .profile import SurfaceProfile
from .space import EnrichedSpace, RhoFn, SigmaFn, assemble_full, build_space, evaluate_coefficients

logger = logging.getLogger(__name__)

# Radial window of the W-norm, in units of 1/τ beyond δ.
_W_WINDOW = 3.0


class DtnResult(BaseModel):
    """Outer solution data at one τ"""
    model_config = ConfigDict(frozen=True)

    tau: float
    delta: float
    h: float
    h_prime: float
    alpha: float
    w_norm: float


def outer_space(profile: SurfaceProfile, corner: CornerData, delta: float, h_max: float = 0.05,
                grading: float = 0.7, n_layers: int = 12, n_angular: int = 8,
                degree: int = 2) -> EnrichedSpace:
    """Polynomial space on the domain with the disc r < δ around the crest removed."""
    mesh = generate_mesh(profile, h_max, grading, n_layers, n_angular=n_angular, hole_radius=delta)
    return build_space(mesh, profile, corner, degree=degree, delta=delta, enrich=False)


def _min_eigenvalue(K: sp.spmatrix, M: sp.spmatrix) -> float:
    if K.shape[0] <= DENSE_LIMIT:
        return float(eigvalsh(K.toarray(), M.toarray(), subset_by_index=[0, 0])[0])
    try:
        # eigenvalue of K nearest below zero, if any; otherwise the one just above
        nu = eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="SA", return_eigenvectors=False)
    except Exception as e:
        raise SolverError(f"Coercivity check failed: {e}") from e
    return float(1.0 / nu[0]) if nu[0] != 0.0 else 0.0


def dtn_solve(space: EnrichedSpace, tau: float, sigma: SigmaFn = None, rho: RhoFn = None,
              basis: Optional[AngularBasis] = None) -> DtnResult:
    """
    Solve the outer problem with unit φ₀-trace on r = δ and extract the Robin closure.

    Args:
        space: Outer space (mesh with a hole of radius δ)
        tau: Rung parameter τ > 0
        sigma: Potential σ(x, y)
        rho: Robin coefficient on the surface
        basis: Angular basis of the corner; built when omitted

    Returns:
        DtnResult with α = h′(δ)/h(δ) + τ

    Raises:
        InvalidParameterError: If the space has no arc or the outer form is not coercive at τ
    """
    if space.arc_dofs.size == 0:
        raise InvalidParameterError("DtN extraction needs an outer space with an arc boundary")
    if not tau > 0.0:
        raise InvalidParameterError(f"tau must be positive, got {tau!r}")
    corner = space.corner
    basis = build_basis(corner, n_modes=0) if basis is None else basis
    delta = space.mesh.hole_radius
    A, M = assemble_full(space, sigma, rho)
    K = (A + tau * tau * M).tocsr()

    free, arc = space.free_dofs, space.arc_dofs
    K_ff = K[free][:, free]
    lam_min = _min_eigenvalue(K_ff, M[free][:, free])
    if not lam_min > 0.0:
        raise InvalidParameterError(f"Outer form not coercive at tau={tau!r}: smallest eigenvalue {lam_min!r}")

    cx, cy = space.mesh.corner_point
    pts = space.dof_coords[arc]
    theta = np.clip(np.arctan2(pts[:, 0] - cx, cy - pts[:, 1]), 0.0, corner.alpha_star)
    trace = np.asarray(basis_eval(basis, 0, theta))
    u = np.zeros(space.n_poly)
    u[arc] = trace
    try:
        u[free] = splu(K_ff.tocsc()).solve(-(K[free][:, arc] @ trace))
    except RuntimeError as e:
        raise SolverError(f"Outer solve failed at tau={tau!r}: {e}") from e

    # discrete normal flux functional on the arc, tested with the trace itself
    residual = K @ u
    h = 1.0
    h_prime = -float(residual[arc] @ trace) / delta
    alpha = h_prime / h + tau

    radii = np.linspace(delta * (1.0 + 1e-6), delta + _W_WINDOW / tau, 9)
    w_norm = _w_norm(space, u, basis, radii)
    logger.info(f"DtN at tau={tau:.6g}: h'={h_prime:.8g}, alpha={alpha:.6g}, |W|={w_norm:.3e}")
    return DtnResult(tau=tau, delta=delta, h=h, h_prime=h_prime, alpha=alpha, w_norm=w_norm)


def _w_norm(space: EnrichedSpace, u: np.ndarray, basis: AngularBasis, radii: np.ndarray) -> float:
    """L² norm of U − hφ₀ over the annulus spanned by radii."""
    cx, cy = space.mesh.corner_point
    theta = basis.theta
    x = cx + radii[:, None] * np.sin(theta)[None, :]
    y = cy - radii[:, None] * np.cos(theta)[None, :]
    U = evaluate_coefficients(space, u, 0.0, x, y)
    h = np.asarray(project_h(U, basis))
    w_sq = np.maximum(U ** 2 @ basis.weights - h ** 2, 0.0)
    return float(math.sqrt(simpson(w_sq * radii, x=radii)))


def dtn_alpha(space: EnrichedSpace, tau: float, sigma: SigmaFn = None, rho: RhoFn = None) -> float:
    """α(τ⁻¹) of the outer problem."""
    return dtn_solve(space, tau, sigma, rho).alpha


def dtn_alpha_fn(space: EnrichedSpace, taus: Sequence[float], sigma: SigmaFn = None,
                 rho: RhoFn = None) -> Tuple[Callable[[float], float], Tuple[DtnResult, ...]]:
    """
    Sample α at the given τ and interpolate linearly in s = τ⁻¹.

    Returns:
        Tuple (α(s) callable for interval_eigenvalues, the sampled results);
        outside the sampled range the end values are held
    """
    if len(taus) < 1:
        raise InvalidParameterError("dtn_alpha_fn needs at least one tau")
    basis = build_basis(space.corner, n_modes=0)
    results = tuple(dtn_solve(space, float(t), sigma, rho, basis) for t in sorted(taus))
    s = np.array([1.0 / r.tau for r in results])[::-1]
    a = np.array([r.alpha for r in results])[::-1]

    def alpha_fn(s_value: float) -> float:
        return float(np.interp(s_value, s, a))

    return alpha_fn, results
