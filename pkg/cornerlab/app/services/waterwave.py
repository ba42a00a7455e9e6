"""
Water Wave Service

Corner constants of the extreme Stokes wave (120° crest), the Robin
coefficient ρ of the linearized wave problem, synthetic crest profiles from
the singular surface expansion, and the near-crest stream function used to
feed them.
"""

import logging
import math
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from ..errors import InvalidParameterError, StagnationError
from .quadrature import gauss_legendre
from .solver2d.profile import SurfaceProfile, crest_drop, make_profile, smoothstep, smoothstep_deriv
from .specfun import CornerData, make_corner, safeguarded_newton

logger = logging.getLogger(__name__)

STOKES_A0 = 1.0 / math.sqrt(3.0)
STOKES_ALPHA_STAR = math.pi / 3.0
STOKES_RHO0 = math.sqrt(3.0) / 2.0
STOKES_EXPONENT = 0.5

# Gauss order for ∫ η′ over the blend region.
_BLEND_ORDER = 40


# --------------------------------------------------------------------------
# 1. Pydantic Models
# --------------------------------------------------------------------------

class StokesLinearization(BaseModel):
    """Linearized extreme-wave quantities entering the Robin coefficient"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    omega_prime: Callable[[np.ndarray], np.ndarray]
    omega_surface: float = 0.0
    psi_y: Callable[[np.ndarray], np.ndarray]
    R: float
    m: float
    profile: SurfaceProfile

    @model_validator(mode="after")
    def _stokes_corner(self):
        if abs(self.profile.a0 - STOKES_A0) > 1e-12:
            raise ValueError(f"profile corner slope {self.profile.a0!r} is not 1/sqrt(3)")
        if self.profile.alpha != STOKES_EXPONENT:
            raise ValueError(f"profile exponent {self.profile.alpha!r} is not 1/2")
        return self


def stokes_linearization(profile: SurfaceProfile, m: float = 1.0, R: Optional[float] = None,
                         omega_surface: float = 0.0,
                         omega_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> StokesLinearization:
    """
    Linearization with ψ_y taken from the crest expansion of the stream function.

    Args:
        profile: Crest profile with slope −1/√3 and exponent 1/2
        m: Mass flux (ψ on the surface)
        R: Bernoulli constant; the crest height by default (stagnation at the crest)
        omega_surface: Vorticity value at the surface
        omega_prime: ω′(ψ); zero by default

    Raises:
        InvalidParameterError: If the profile is not a Stokes corner
    """
    if omega_prime is None:
        omega_prime = np.zeros_like
    try:
        return StokesLinearization(
            omega_prime=omega_prime,
            omega_surface=omega_surface,
            psi_y=surface_psi_y(profile),
            R=profile.eta0 if R is None else R,
            m=m,
            profile=profile,
        )
    except ValidationError as e:
        raise InvalidParameterError(f"Not a Stokes linearization: {e}") from e


# --------------------------------------------------------------------------
# 2. Corner constants
# --------------------------------------------------------------------------

def stokes_corner_params(gamma: float = 0.0) -> CornerData:
    """CornerData of the 120° crest: α* = π/3, ρ₀ = √3/2, Hölder exponent 1/2."""
    return make_corner(STOKES_ALPHA_STAR, STOKES_RHO0, gamma=gamma, alpha=STOKES_EXPONENT)


def tau1_root() -> float:
    """Smallest positive root of τ = −(1/√3)·cot(πτ/2); it lies in (1, 2)."""
    def f(tau):
        half = 0.5 * math.pi * tau
        s = math.sin(half)
        value = tau + STOKES_A0 * math.cos(half) / s
        deriv = 1.0 - STOKES_A0 * 0.5 * math.pi / (s * s)
        return value, deriv

    root = safeguarded_newton(f, 1.0, 2.0 - 1e-9)
    logger.debug(f"tau_1 = {root!r}")
    return root


# --------------------------------------------------------------------------
# 3. Crest profiles and the stream function
# --------------------------------------------------------------------------

def profile_from_expansion(a1: float, a2: float, cutoff: float, half_period: float = 1.0,
                           crest_height: float = 1.0, a0: float = STOKES_A0) -> SurfaceProfile:
    """
    Profile with η′ = −a₀ + a₁x^{1/2} + a₂x near the crest, multiplied by a
    smoothstep that brings η′ to zero at the trough.

    Args:
        a1: Coefficient of x^{1/2}
        a2: Coefficient of x
        cutoff: End of the pure expansion; the blend runs over [cutoff, Λ/2]
        half_period: Λ/2
        crest_height: η(0)
        a0: Corner slope

    Raises:
        InvalidParameterError: If cutoff is not in (0, Λ/2)
        GeometryError: If the resulting surface reaches the bottom
    """
    if not 0.0 < cutoff < half_period:
        raise InvalidParameterError(f"cutoff must lie in (0, {half_period!r}), got {cutoff!r}")
    width = half_period - cutoff
    nodes, weights = gauss_legendre(_BLEND_ORDER, -1.0, 1.0)

    def expansion(x):
        return crest_height - a0 * x + (2.0 / 3.0) * a1 * x ** 1.5 + 0.5 * a2 * x * x

    def raw_slope(x):
        return -a0 + a1 * np.sqrt(x) + a2 * x

    def gate(x):
        return 1.0 - smoothstep((x - cutoff) / width)

    def eta_prime(x):
        x = np.asarray(x, dtype=float)
        return gate(x) * raw_slope(x)

    def eta(x):
        x = np.asarray(x, dtype=float)
        out = expansion(np.minimum(x, cutoff))
        tail = x > cutoff
        if np.any(tail):
            xt = x[tail]
            half = 0.5 * (xt - cutoff)
            points = cutoff + half[:, None] * (nodes[None, :] + 1.0)
            out[tail] += (eta_prime(points) * weights[None, :]).sum(axis=1) * half
        return out

    def eta_second(x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0.0, x, 1.0)
        d_raw = np.where(x > 0.0, 0.5 * a1 / np.sqrt(safe), np.inf if a1 else 0.0) + a2
        d_gate = -smoothstep_deriv((x - cutoff) / width) / width
        return d_gate * raw_slope(x) + gate(x) * d_raw

    profile = make_profile(2.0 * half_period, eta, eta_prime, eta_second, a0, STOKES_EXPONENT)
    logger.info(f"Expansion profile a1={a1:.4g}, a2={a2:.4g}, cutoff={cutoff:.4g}: "
                f"eta(L) = {float(eta(np.array([half_period]))[0]):.6g}")
    return profile


def stokes_model_profile() -> SurfaceProfile:
    """Bundled Stokes-like crest (exponent 1/2) on a unit half period for desk runs."""
    return profile_from_expansion(0.3, 0.0, 0.5)


def _crest_polar(profile: SurfaceProfile, x: np.ndarray, y: np.ndarray):
    depth = profile.eta0 - y
    return np.hypot(x, depth), np.arctan2(x, depth)


def surface_psi_y(profile: SurfaceProfile) -> Callable[[np.ndarray], np.ndarray]:
    """ψ_y = r^{1/2}cos(θ/2) on the surface, from ψ = m − (2/3)r^{3/2}cos(3θ/2)."""
    def psi_y(x):
        x = np.asarray(x, dtype=float)
        r, theta = _crest_polar(profile, x, profile.eta(x))
        return np.sqrt(r) * np.cos(0.5 * theta)

    return psi_y


def crest_stream_function(profile: SurfaceProfile, m: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """ψ(x, y) = m − (2/3)r^{3/2}cos(3θ/2) around the crest."""
    def psi(x, y):
        r, theta = _crest_polar(profile, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return m - (2.0 / 3.0) * r ** 1.5 * np.cos(1.5 * theta)

    return psi


def sigma_from_vorticity(omega_prime: Callable[[np.ndarray], np.ndarray], profile: SurfaceProfile,
                         m: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Potential σ(x, y) = −ω′(ψ(x, y)) of the linearized problem."""
    psi = crest_stream_function(profile, m)

    def sigma(x, y):
        return -np.asarray(omega_prime(psi(x, y)), dtype=float)

    return sigma


# --------------------------------------------------------------------------
# 4. Robin coefficient
# --------------------------------------------------------------------------

def rho_coefficient(lin: StokesLinearization, n_check: int = 2001) -> Callable[[np.ndarray], np.ndarray]:
    """
    ρ(x) = r·[1 − ω_s(1 + η′²)ψ_y + η″ψ_y²] / [2(R − η)√(1 + η′²)] on (0, Λ/2].

    Raises:
        StagnationError: If R − η <= 0 at a sample point
    """
    profile = lin.profile

    def rho(x):
        x = np.asarray(x, dtype=float)
        drop = crest_drop(profile, x)
        depth = (lin.R - profile.eta0) + drop
        if np.any(~(depth > 0.0)):
            bad = float(np.asarray(x)[~(depth > 0.0)].flat[0])
            raise StagnationError(f"R - eta <= 0 at x={bad!r}")
        slope = 1.0 + profile.eta_prime(x) ** 2
        psi_y = lin.psi_y(x)
        r = np.hypot(x, drop)
        bracket = 1.0 - lin.omega_surface * slope * psi_y + profile.eta_second(x) * psi_y ** 2
        return r * bracket / (2.0 * depth * np.sqrt(slope))

    half = profile.half_period
    rho(np.linspace(half / n_check, half, n_check))
    return rho
