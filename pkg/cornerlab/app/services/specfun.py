"""
Special Functions Service

Scalar transcendental roots of the corner problem, the Gamma phase and the
modified Bessel functions of imaginary order K_{iκ} and Ĩ_{iκ} = Re I_{iκ}
for real positive arguments.

Evaluation regimes:

* K_{iκ}: integral representation ∫₀^T e^{-z cosh t} cos(κt) dt truncated
  where the integrand drops below double precision, switching to the
  large-argument expansion for z >= ``asymptotic_switch(κ)``.
* Ĩ_{iκ}: ascending series in complex arithmetic below the same switch, the
  exponential expansion above it. Values beyond ``OVERFLOW_Z`` raise.

All functions are pure and accept floats or numpy arrays.
"""

import logging
import math
from typing import Callable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.special import loggamma

from ..errors import (
    BesselOverflowError,
    BracketError,
    ConvergenceError,
    DomainError,
    InvalidParameterError,
    NumericalError,
)
from .quadrature import composite_gauss

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Switch-over radius between quadrature/series and the asymptotic expansions;
# raised to ASYMPTOTIC_KAPPA_FACTOR·κ² for large orders, see asymptotic_switch.
LARGE_Z = 25.0
ASYMPTOTIC_KAPPA_FACTOR = 2.0
OVERFLOW_Z = 700.0
# Truncation level of the scaled integrand e^{-z(cosh t - 1)}.
_LOG_TINY = 745.0
_PANEL_WIDTH = 0.5
# Panel width is also capped at these multiples of the integrand scales 1/√z and 1/κ.
_PANEL_PER_SQRT_Z = 8.0
_PANEL_PER_KAPPA = 4.0
_PANEL_ORDER = 20
_MAX_ITER = 200


# --------------------------------------------------------------------------
# 1. Pydantic Models
# --------------------------------------------------------------------------

class CornerData(BaseModel):
    """Spectral fingerprint of a corner: angle, Robin constant, roots and phases"""
    model_config = ConfigDict(frozen=True)

    alpha_star: float = Field(gt=0.0, lt=math.pi)
    rho0: float = Field(gt=0.0)
    kappa: float = Field(gt=0.0)
    gamma: float = Field(ge=0.0, lt=math.pi)
    gamma_kappa: float
    mu: Tuple[float, ...]
    alpha: float = Field(default=1.0, gt=0.0, le=1.0)

    @property
    def ratio(self) -> float:
        """Common ratio e^{π/κ} of the eigenvalue ladder."""
        return math.exp(math.pi / self.kappa)


# --------------------------------------------------------------------------
# 2. Root Finding
# --------------------------------------------------------------------------

def safeguarded_newton(func: Callable[[float], Tuple[float, float]], lo: float, hi: float,
                       x0: Optional[float] = None, xtol: float = 4e-16,
                       max_iter: int = _MAX_ITER) -> float:
    """
    Newton iteration kept inside a sign-change bracket, bisecting whenever a
    step leaves the bracket or fails to halve the bracket width.

    Args:
        func: Returns (f(x), f'(x))
        lo: Left end of the bracket
        hi: Right end of the bracket
        x0: Optional starting point inside the bracket
        xtol: Relative step tolerance
        max_iter: Iteration cap

    Returns:
        The root

    Raises:
        BracketError: If f does not change sign on [lo, hi]
        ConvergenceError: If the iteration cap is reached
    """
    f_lo, _ = func(lo)
    f_hi, _ = func(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"No sign change on [{lo!r}, {hi!r}]: f = ({f_lo!r}, {f_hi!r})")

    # orient so that f(lo) < 0
    if f_lo > 0.0:
        lo, hi = hi, lo

    x = 0.5 * (lo + hi) if x0 is None else x0
    dx_old = abs(hi - lo)
    dx = dx_old
    fx, dfx = func(x)
    for iteration in range(max_iter):
        newton_ok = dfx != 0.0 and ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) < 0.0
        if not newton_ok or abs(2.0 * fx) > abs(dx_old * dfx):
            dx_old = dx
            dx = 0.5 * (hi - lo)
            x = lo + dx
        else:
            dx_old = dx
            dx = fx / dfx
            x -= dx
        if abs(dx) <= xtol * max(abs(x), 1e-300):
            logger.debug(f"Newton converged after {iteration + 1} iterations at x={x!r}")
            return x
        fx, dfx = func(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
    raise ConvergenceError(f"Safeguarded Newton did not converge in {max_iter} iterations")


def _require_corner_inputs(alpha_star: float, rho0: float) -> None:
    if not (0.0 < alpha_star < math.pi):
        raise InvalidParameterError(f"alpha_star must lie in (0, π), got {alpha_star!r}")
    if not rho0 > 0.0:
        raise InvalidParameterError(f"rho0 must be positive, got {rho0!r}")


def solve_kappa(alpha_star: float, rho0: float) -> float:
    """
    Positive root of κ·tanh(κ·α*) = ρ₀.

    The left side increases strictly from 0, so the root is unique.

    Args:
        alpha_star: Opening angle in (0, π)
        rho0: Robin constant at the corner

    Returns:
        κ > 0

    Raises:
        InvalidParameterError: If an input is out of range
    """
    _require_corner_inputs(alpha_star, rho0)

    def residual(k: float) -> Tuple[float, float]:
        th = math.tanh(k * alpha_star)
        return k * th - rho0, th + k * alpha_star * (1.0 - th * th)

    # κ² α* >= κ tanh(κα*) and κ tanh(κα*) >= κ - 1/α* give the bracket
    lo = math.sqrt(rho0 / alpha_star) * 0.5
    while residual(lo)[0] > 0.0:
        lo *= 0.5
    hi = max(rho0 + 1.0 / alpha_star, math.sqrt(rho0 / alpha_star)) * 2.0
    kappa = safeguarded_newton(residual, lo, hi)
    logger.debug(f"solve_kappa(alpha_star={alpha_star!r}, rho0={rho0!r}) -> {kappa!r}")
    return kappa


def mu_branch(alpha_star: float, k: int) -> Tuple[float, float]:
    """Branch interval ((k−1)π + π/2, kπ)/α* that must contain μ_k."""
    return ((k - 1) * math.pi + 0.5 * math.pi) / alpha_star, k * math.pi / alpha_star


def solve_mu(alpha_star: float, rho0: float, k: int) -> float:
    """
    k-th positive root of μ·tan(μ·α*) = −ρ₀ on its mandated branch.

    The equation is solved in the pole-free form μ sin(μα*) + ρ₀ cos(μα*) = 0,
    whose values at the branch ends have opposite signs.

    Raises:
        InvalidParameterError: If an input is out of range
        BracketError: If the root cannot be bracketed on its branch
    """
    _require_corner_inputs(alpha_star, rho0)
    if k < 1:
        raise InvalidParameterError(f"Root index must be >= 1, got {k!r}")
    lo, hi = mu_branch(alpha_star, k)

    def residual(m: float) -> Tuple[float, float]:
        s = math.sin(m * alpha_star)
        c = math.cos(m * alpha_star)
        return m * s + rho0 * c, s + m * alpha_star * c - rho0 * alpha_star * s

    mu = safeguarded_newton(residual, lo, hi)
    if not (lo <= mu <= hi):
        raise BracketError(f"mu_{k} = {mu!r} left its branch ({lo!r}, {hi!r})")
    return mu


def gamma_modulus(kappa: float) -> Tuple[float, float]:
    """
    Both sides of |Γ(1+iκ)| = (πκ/sinh πκ)^{1/2}, as logarithms.

    Returns:
        Tuple (log|Γ(1+iκ)| from loggamma, log of the closed form)
    """
    lhs = float(np.real(loggamma(1.0 + 1j * kappa)))
    x = math.pi * kappa
    if x < 20.0:
        log_sinh = math.log(math.sinh(x))
    else:
        log_sinh = x + math.log1p(-math.exp(-2.0 * x)) - math.log(2.0)
    rhs = 0.5 * (math.log(x) - log_sinh)
    return lhs, rhs


def gamma_phase(kappa: float) -> float:
    """
    Continuous argument γ_κ of Γ(1+iκ), checked against the modulus identity.

    Raises:
        InvalidParameterError: If kappa is not positive
        NumericalError: If the modulus identity fails
    """
    if not kappa > 0.0:
        raise InvalidParameterError(f"kappa must be positive, got {kappa!r}")
    lhs, rhs = gamma_modulus(kappa)
    # relative error of the modulus itself
    if abs(math.expm1(lhs - rhs)) > 1e-12:
        raise NumericalError(f"Gamma modulus identity failed at kappa={kappa!r}: {lhs!r} vs {rhs!r}")
    return float(np.imag(loggamma(1.0 + 1j * kappa)))


def make_corner(alpha_star: float, rho0: float, gamma: float = 0.0, alpha: float = 1.0,
                n_mu: int = 16) -> CornerData:
    """
    Build and validate the CornerData of a corner.

    Args:
        alpha_star: Opening angle in (0, π)
        rho0: Robin constant at the corner
        gamma: Extension phase in [0, π)
        alpha: Hölder exponent of the profile remainder
        n_mu: Number of oscillatory roots μ_k to solve

    Returns:
        CornerData

    Raises:
        InvalidParameterError: If inputs are out of range or μ₁ <= 1
    """
    kappa = solve_kappa(alpha_star, rho0)
    mu = tuple(solve_mu(alpha_star, rho0, k) for k in range(1, n_mu + 1))
    if mu[0] <= 1.0:
        raise InvalidParameterError(f"Corner not admissible: mu_1 = {mu[0]!r} <= 1")
    try:
        corner = CornerData(
            alpha_star=alpha_star,
            rho0=rho0,
            kappa=kappa,
            gamma=gamma,
            gamma_kappa=gamma_phase(kappa),
            mu=mu,
            alpha=alpha,
        )
    except ValidationError as e:
        raise InvalidParameterError(f"Invalid corner parameters: {e}") from e
    logger.info(f"Corner alpha*={alpha_star:.6g}, rho0={rho0:.6g}: kappa={kappa:.12g}, "
                f"gamma_kappa={corner.gamma_kappa:.12g}, mu_1={mu[0]:.12g}")
    return corner


def ladder_prediction(corner: CornerData, k: ArrayLike, factor: float = 1.0) -> ArrayLike:
    """Closed-form ladder factor·e^{(γ+γ_κ+kπ)/κ}."""
    k = np.asarray(k, dtype=float)
    value = factor * np.exp((corner.gamma + corner.gamma_kappa + k * math.pi) / corner.kappa)
    return float(value) if value.ndim == 0 else value


# --------------------------------------------------------------------------
# 3. Bessel Functions of Imaginary Order
# --------------------------------------------------------------------------

def _as_positive_array(z: ArrayLike) -> np.ndarray:
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("Bessel functions of imaginary order need z > 0")
    return arr


def _finish(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def asymptotic_switch(kappa: float) -> float:
    """
    Smallest z at which the large-argument expansions are used for order iκ.

    The expansion terms shrink by about (4κ² + (2j−1)²)/(8jz), so z must grow
    like κ² before a few terms reach double precision.
    """
    return max(LARGE_Z, ASYMPTOTIC_KAPPA_FACTOR * kappa * kappa)


def _asymptotic_coefficients(kappa: float, z_min: float) -> np.ndarray:
    """a_k(iκ) = Π_{j<=k}(−4κ² − (2j−1)²)/(k! 8^k), truncated at the smallest term for z_min."""
    coeffs = [1.0]
    term = 1.0
    j = 1
    while True:
        term *= (-4.0 * kappa * kappa - (2 * j - 1) ** 2) / (8.0 * j)
        if abs(term) / z_min ** j > abs(coeffs[-1]) / z_min ** (j - 1) or j > 2 * z_min + 10:
            break
        coeffs.append(term)
        if abs(term) / z_min ** j < 1e-18:
            break
        j += 1
    return np.asarray(coeffs)


def _asymptotic_sums(kappa: float, z: np.ndarray, alternating: bool) -> Tuple[np.ndarray, np.ndarray]:
    """
    Σ a_k z^{-k-1/2} and its z-derivative (optionally with (−1)^k signs).
    """
    coeffs = _asymptotic_coefficients(kappa, float(np.min(z)))
    k = np.arange(coeffs.size)
    if alternating:
        coeffs = coeffs * (-1.0) ** k
    powers = z[..., None] ** (-(k + 0.5))
    value = powers @ coeffs
    deriv = (powers / z[..., None]) @ (-(k + 0.5) * coeffs)
    return value, deriv


def _k_integral(kappa: float, z: np.ndarray, derivative: bool) -> np.ndarray:
    """Scaled e^{z}K_{iκ}(z) (or e^{z}K′) from the truncated integral representation."""
    out = np.empty_like(z)
    for idx, zi in np.ndenumerate(z):
        t_max = math.acosh(1.0 + _LOG_TINY / zi)
        width = min(_PANEL_WIDTH, _PANEL_PER_SQRT_Z / math.sqrt(zi), _PANEL_PER_KAPPA / max(kappa, 1e-300))
        n_panels = max(int(math.ceil(t_max / width)), 1)
        t, w = composite_gauss(np.linspace(0.0, t_max, n_panels + 1), _PANEL_ORDER)
        ch = np.cosh(t)
        integrand = np.exp(-zi * (ch - 1.0)) * np.cos(kappa * t)
        if derivative:
            integrand = -integrand * ch
        out[idx] = integrand @ w
    return out


def besselK_imag_scaled(kappa: float, z: ArrayLike) -> ArrayLike:
    """e^{z}·K_{iκ}(z); finite for every z > 0."""
    arr = _as_positive_array(z)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    large = flat >= asymptotic_switch(kappa)
    if np.any(~large):
        out[~large] = _k_integral(kappa, flat[~large], derivative=False)
    if np.any(large):
        value, _ = _asymptotic_sums(kappa, flat[large], alternating=False)
        out[large] = math.sqrt(0.5 * math.pi) * value
    return _finish(out.reshape(arr.shape), z)


def besselK_imag(kappa: float, z: ArrayLike) -> ArrayLike:
    """
    Real-valued K_{iκ}(z) for z > 0; underflows to 0 for very large z.

    Raises:
        DomainError: If any z <= 0
    """
    scaled = np.asarray(besselK_imag_scaled(kappa, z))
    with np.errstate(under="ignore"):
        value = scaled * np.exp(-np.asarray(z, dtype=float))
    return _finish(value, z)


def besselK_imag_deriv_scaled(kappa: float, z: ArrayLike) -> ArrayLike:
    """e^{z}·K′_{iκ}(z)."""
    arr = _as_positive_array(z)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    large = flat >= asymptotic_switch(kappa)
    if np.any(~large):
        out[~large] = _k_integral(kappa, flat[~large], derivative=True)
    if np.any(large):
        value, deriv = _asymptotic_sums(kappa, flat[large], alternating=False)
        out[large] = math.sqrt(0.5 * math.pi) * (deriv - value)
    return _finish(out.reshape(arr.shape), z)


def besselK_imag_deriv(kappa: float, z: ArrayLike) -> ArrayLike:
    """d/dz K_{iκ}(z) via the differentiated integral representation."""
    scaled = np.asarray(besselK_imag_deriv_scaled(kappa, z))
    with np.errstate(under="ignore"):
        value = scaled * np.exp(-np.asarray(z, dtype=float))
    return _finish(value, z)


def besselI_imag_complex(kappa: float, z: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    I_{iκ}(z) and its derivative from the ascending series, complex valued.

    Used below ``asymptotic_switch(κ)`` for the Ĩ series regime and for the
    small-argument series form of K. Terms peak near m = z/2.
    """
    arr = np.atleast_1d(_as_positive_array(z)).astype(float)
    nu = 1j * kappa
    half = 0.5 * arr
    term = np.exp(nu * np.log(half) - loggamma(1.0 + nu))
    value = term.copy()
    deriv = term * nu / arr
    q = half * half
    for m in range(1, 400 + 2 * int(np.max(arr))):
        term = term * q / (m * (m + nu))
        value = value + term
        deriv = deriv + term * (2 * m + nu) / arr
        if np.all(np.abs(term) <= 1e-17 * np.abs(value)):
            break
    else:
        raise ConvergenceError("Ascending series of I_{iκ} did not converge")
    return value, deriv


def besselK_imag_series(kappa: float, z: ArrayLike) -> ArrayLike:
    """
    K_{iκ}(z) = −(π/sinh πκ)·Im I_{iκ}(z) from the ascending series.

    Loses about 2z/ln(10) digits to cancellation; intended for z <= 2.
    """
    value, _ = besselI_imag_complex(kappa, z)
    out = -math.pi / math.sinh(math.pi * kappa) * np.imag(value)
    return _finish(out.reshape(np.shape(z)), z)


def _check_overflow(arr: np.ndarray) -> None:
    if np.any(arr > OVERFLOW_Z):
        raise BesselOverflowError(f"Ĩ_iκ(z) overflows for z > {OVERFLOW_Z}, got max z = {arr.max()!r}")


def _i_real_scaled(kappa: float, z: ArrayLike, derivative: bool) -> ArrayLike:
    arr = _as_positive_array(z)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    large = flat >= asymptotic_switch(kappa)
    if np.any(~large):
        small_z = flat[~large]
        value, deriv = besselI_imag_complex(kappa, small_z)
        chosen = deriv if derivative else value
        out[~large] = np.real(chosen) * np.exp(-small_z)
    if np.any(large):
        value, deriv = _asymptotic_sums(kappa, flat[large], alternating=True)
        scale = 1.0 / math.sqrt(2.0 * math.pi)
        out[large] = scale * (value + deriv) if derivative else scale * value
    return _finish(out.reshape(arr.shape), z)


def besselI_imag_real_scaled(kappa: float, z: ArrayLike) -> ArrayLike:
    """e^{−z}·Ĩ_{iκ}(z); never overflows."""
    return _i_real_scaled(kappa, z, derivative=False)


def besselI_imag_real_deriv_scaled(kappa: float, z: ArrayLike) -> ArrayLike:
    """e^{−z}·Ĩ′_{iκ}(z)."""
    return _i_real_scaled(kappa, z, derivative=True)


def besselI_imag_real(kappa: float, z: ArrayLike) -> ArrayLike:
    """
    Ĩ_{iκ}(z) = (I_{iκ}(z) + I_{−iκ}(z))/2 = Re I_{iκ}(z).

    Raises:
        DomainError: If any z <= 0
        BesselOverflowError: If any z > OVERFLOW_Z
    """
    _check_overflow(np.asarray(z, dtype=float))
    scaled = np.asarray(besselI_imag_real_scaled(kappa, z))
    return _finish(scaled * np.exp(np.asarray(z, dtype=float)), z)


def besselI_imag_real_deriv(kappa: float, z: ArrayLike) -> ArrayLike:
    """d/dz Ĩ_{iκ}(z) by term-wise differentiation of the active regime."""
    _check_overflow(np.asarray(z, dtype=float))
    scaled = np.asarray(besselI_imag_real_deriv_scaled(kappa, z))
    return _finish(scaled * np.exp(np.asarray(z, dtype=float)), z)


def small_z_K(kappa: float, z: ArrayLike, gamma_kappa: Optional[float] = None) -> ArrayLike:
    """Leading small-argument form −(π/(κ sinh πκ))^{1/2} sin(κ ln(z/2) − γ_κ)."""
    gk = gamma_phase(kappa) if gamma_kappa is None else gamma_kappa
    amp = math.sqrt(math.pi / (kappa * math.sinh(math.pi * kappa)))
    return -amp * np.sin(kappa * np.log(np.asarray(z, dtype=float) / 2.0) - gk)


def small_z_I(kappa: float, z: ArrayLike, gamma_kappa: Optional[float] = None) -> ArrayLike:
    """Leading small-argument form (sinh(πκ)/(πκ))^{1/2} cos(κ ln(z/2) − γ_κ)."""
    gk = gamma_phase(kappa) if gamma_kappa is None else gamma_kappa
    amp = math.sqrt(math.sinh(math.pi * kappa) / (math.pi * kappa))
    return amp * np.cos(kappa * np.log(np.asarray(z, dtype=float) / 2.0) - gk)
