"""
Angular Modes Service

Orthonormal cross-sectional basis on (0, α*):

    φ_0(θ) = cosh(κθ)/v̂_0,   φ_k(θ) = cos(μ_kθ)/v̂_k  (k >= 1)

together with the symplectic form that classifies the self-adjoint
extensions of the corner operator.
"""

import logging
import math
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..errors import DomainError, InvalidParameterError, ResolutionError
from .quadrature import gauss_legendre
from .specfun import CornerData, solve_mu

logger = logging.getLogger(__name__)

MIN_QUAD_ORDER = 64
DEFAULT_N_MODES = 16

Coefficients = Tuple[complex, complex]


class AngularBasis(BaseModel):
    """Cross-sectional eigenbasis with its normalization constants and Gauss nodes"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    corner: CornerData
    n_modes: int
    norms: Tuple[float, ...]
    mu: Tuple[float, ...]
    theta: np.ndarray
    weights: np.ndarray


def build_basis(corner: CornerData, n_modes: int = DEFAULT_N_MODES,
                quad_order: int = 128) -> AngularBasis:
    """
    Build the angular basis with n_modes oscillatory modes.

    Args:
        corner: Corner data
        n_modes: Number of modes φ_1..φ_n retained next to φ_0
        quad_order: Gauss-Legendre order of the arc rule on (0, α*)

    Returns:
        AngularBasis

    Raises:
        InvalidParameterError: If n_modes is negative
        ResolutionError: If quad_order is below MIN_QUAD_ORDER
    """
    if n_modes < 0:
        raise InvalidParameterError(f"n_modes must be non-negative, got {n_modes!r}")
    if quad_order < MIN_QUAD_ORDER:
        raise ResolutionError(f"Arc quadrature needs at least {MIN_QUAD_ORDER} nodes, got {quad_order}")
    a, kappa = corner.alpha_star, corner.kappa
    mu = list(corner.mu[:n_modes])
    for k in range(len(mu) + 1, n_modes + 1):
        mu.append(solve_mu(a, corner.rho0, k))

    norms = [math.sqrt(a / 2.0 + math.sinh(2.0 * kappa * a) / (4.0 * kappa))]
    norms += [math.sqrt(a / 2.0 + math.sin(2.0 * m * a) / (4.0 * m)) for m in mu]
    theta, weights = gauss_legendre(quad_order, 0.0, a)
    theta.setflags(write=False)
    weights.setflags(write=False)
    return AngularBasis(
        corner=corner,
        n_modes=n_modes,
        norms=tuple(norms),
        mu=tuple(mu),
        theta=theta,
        weights=weights,
    )


def _check_index(basis: AngularBasis, k: int) -> None:
    if not 0 <= k <= basis.n_modes:
        raise InvalidParameterError(f"Mode index {k} outside 0..{basis.n_modes}")


def basis_eval(basis: AngularBasis, k: int, theta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Evaluate φ_k(θ).

    Raises:
        DomainError: If any θ lies outside [0, α*]
    """
    _check_index(basis, k)
    t = np.asarray(theta, dtype=float)
    a = basis.corner.alpha_star
    slack = 1e-14 * a
    if np.any(t < -slack) or np.any(t > a + slack):
        raise DomainError(f"theta outside [0, {a!r}]")
    if k == 0:
        value = np.cosh(basis.corner.kappa * t) / basis.norms[0]
    else:
        value = np.cos(basis.mu[k - 1] * t) / basis.norms[k]
    return float(value) if value.ndim == 0 else value


def basis_eval_deriv(basis: AngularBasis, k: int, theta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Evaluate dφ_k/dθ."""
    _check_index(basis, k)
    t = np.asarray(theta, dtype=float)
    if k == 0:
        kappa = basis.corner.kappa
        value = kappa * np.sinh(kappa * t) / basis.norms[0]
    else:
        m = basis.mu[k - 1]
        value = -m * np.sin(m * t) / basis.norms[k]
    return float(value) if value.ndim == 0 else value


def gram_matrix(basis: AngularBasis) -> np.ndarray:
    """Matrix of ∫φ_jφ_k dθ under the basis quadrature."""
    values = np.array([basis_eval(basis, k, basis.theta) for k in range(basis.n_modes + 1)])
    return (values * basis.weights) @ values.T


def _arc_samples(U: Union[Callable, Sequence[float], np.ndarray], basis: AngularBasis) -> np.ndarray:
    if callable(U):
        return np.asarray(U(basis.theta), dtype=float)
    samples = np.asarray(U, dtype=float)
    if samples.shape[-1] != basis.theta.size:
        raise ResolutionError(
            f"Arc samples must sit on the {basis.theta.size} basis nodes, got {samples.shape[-1]}"
        )
    return samples


def project(U: Union[Callable, Sequence[float], np.ndarray], basis: AngularBasis, k: int = 0) -> Union[float, np.ndarray]:
    """
    φ_k-coefficient ∫₀^{α*} U(θ)φ_k(θ) dθ of arc data.

    Args:
        U: Callable of θ, or samples at ``basis.theta`` (a trailing axis of
            that length; leading axes are independent arcs)
        basis: Angular basis
        k: Mode index

    Raises:
        ResolutionError: If the samples do not match the basis nodes
    """
    samples = _arc_samples(U, basis)
    coefficient = samples @ (basis.weights * basis_eval(basis, k, basis.theta))
    return float(coefficient) if np.ndim(coefficient) == 0 else coefficient


def project_h(U: Union[Callable, Sequence[float], np.ndarray], basis: AngularBasis) -> Union[float, np.ndarray]:
    """φ_0-coefficient h(r) of U on an arc r = const."""
    return project(U, basis, 0)


# --------------------------------------------------------------------------
# Symplectic form on the span of r^{±iκ}cosh(κθ)
# --------------------------------------------------------------------------

def real_extension_family(gamma: float, kappa: float) -> Coefficients:
    """
    Coefficients (a, b) of sin(κ log(r/2) + γ)cosh(κθ) in the basis
    r^{iκ}cosh(κθ), r^{−iκ}cosh(κθ). They satisfy |a| = |b|.
    """
    phase = gamma - kappa * math.log(2.0)
    a = np.exp(1j * phase) / 2j
    b = -np.exp(-1j * phase) / 2j
    return complex(a), complex(b)


def _radial_values(w: Coefficients, kappa: float, r: float) -> Tuple[complex, complex]:
    """Radial factor of w and r·∂_r of it."""
    a, b = w
    plus, minus = r ** (1j * kappa), r ** (-1j * kappa)
    return a * plus + b * minus, 1j * kappa * (a * plus - b * minus)


def symplectic_form(w1: Coefficients, w2: Coefficients, basis: AngularBasis, r: float = 1.0) -> complex:
    """
    q(w1, w2) = ∫₀^{α*} (∂_r w1 · conj(w2) − w1 · conj(∂_r w2)) r dθ by quadrature.

    Raises:
        DomainError: If r <= 0
    """
    if not r > 0.0:
        raise DomainError(f"Symplectic form needs r > 0, got {r!r}")
    kappa = basis.corner.kappa
    f1, rd1 = _radial_values(w1, kappa, r)
    f2, rd2 = _radial_values(w2, kappa, r)
    cosh_sq = np.cosh(kappa * basis.theta) ** 2
    angular = float(cosh_sq @ basis.weights)
    return complex((rd1 * np.conj(f2) - f1 * np.conj(rd2)) * angular)


def symplectic_form_closed(w1: Coefficients, w2: Coefficients, corner: CornerData) -> complex:
    """Closed form 2iκ(a₁ā₂ − b₁b̄₂)·v̂_0²."""
    kappa, a = corner.kappa, corner.alpha_star
    cosh_sq = a / 2.0 + math.sinh(2.0 * kappa * a) / (4.0 * kappa)
    return complex(2j * kappa * (w1[0] * np.conj(w2[0]) - w1[1] * np.conj(w2[1])) * cosh_sq)
