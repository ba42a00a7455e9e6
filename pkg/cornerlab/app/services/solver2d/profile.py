"""
Surface Profile Service

Free-surface profiles y = η(x) on the half period (0, Λ/2] with a corner of
slope −a₀ at the crest, and the straightened model surface ξ that is exactly
linear near the crest and coincides with η near the trough.
"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ...errors import GeometryError, InvalidParameterError
from ..quadrature import gauss_legendre

logger = logging.getLogger(__name__)

ProfileFn = Callable[[np.ndarray], np.ndarray]

# Tolerance on η′(Λ/2) = 0 at the trough.
FLATNESS_TOL = 1e-9
# Gauss order for the crest drop in the variable u = (t/x)^{1/2}.
_DROP_ORDER = 24
# Below this fraction of the half period the drop is integrated, above it differenced.
_DROP_SWITCH = 1e-2


# --------------------------------------------------------------------------
# 1. Smooth partitions
# --------------------------------------------------------------------------

def smoothstep(t: np.ndarray) -> np.ndarray:
    """Degree-7 step: 0 for t <= 0, 1 for t >= 1, C³ at both ends."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t ** 4 * (35.0 - 84.0 * t + 70.0 * t ** 2 - 20.0 * t ** 3)


def smoothstep_deriv(t: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 140.0 * t ** 3 * (1.0 - t) ** 3


def smoothstep_second(t: np.ndarray) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 420.0 * t ** 2 * (1.0 - t) ** 2 * (1.0 - 2.0 * t)


# --------------------------------------------------------------------------
# 2. Pydantic Models
# --------------------------------------------------------------------------

class SurfaceProfile(BaseModel):
    """Even periodic free surface reduced to the half period (0, Λ/2]"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    period: float = Field(gt=0.0)
    eta: ProfileFn
    eta_prime: ProfileFn
    eta_second: ProfileFn
    a0: float = Field(gt=0.0)
    alpha: float = Field(gt=0.0, le=1.0)
    eta0: float = Field(gt=0.0)

    @property
    def half_period(self) -> float:
        return 0.5 * self.period

    @property
    def alpha_star(self) -> float:
        """Angle between the vertical and the surface tangent at the crest."""
        return 0.5 * math.pi - math.atan(self.a0)


class StraightenedProfile(BaseModel):
    """Model surface ξ with its Robin coefficient χ and the measured deviations"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    base: SurfaceProfile
    delta: float
    rho0: float
    xi: ProfileFn
    xi_prime: ProfileFn
    chi: ProfileFn
    surface: SurfaceProfile
    geometry_constant: float
    rho_constant: float


class ProfileDiagnostics(BaseModel):
    """Fitted corner data of a profile"""
    model_config = ConfigDict(frozen=True)

    slope_at_crest: float
    remainder_exponent: Optional[float]
    trough_slope: float
    min_height: float


# --------------------------------------------------------------------------
# 3. Construction and checks
# --------------------------------------------------------------------------

def make_profile(period: float, eta: ProfileFn, eta_prime: ProfileFn, eta_second: ProfileFn,
                 a0: float, alpha: float, n_samples: int = 2001) -> SurfaceProfile:
    """
    Build a SurfaceProfile and check its invariants on a sample grid.

    Raises:
        InvalidParameterError: If the scalar fields are out of range
        GeometryError: If η <= 0 somewhere or η′(Λ/2) != 0
    """
    try:
        profile = SurfaceProfile(
            period=period,
            eta=eta,
            eta_prime=eta_prime,
            eta_second=eta_second,
            a0=a0,
            alpha=alpha,
            eta0=float(eta(np.array([0.0]))[0]),
        )
    except ValidationError as e:
        raise InvalidParameterError(f"Invalid surface profile: {e}") from e
    check_profile(profile, n_samples)
    return profile


def check_profile(profile: SurfaceProfile, n_samples: int = 2001) -> None:
    """Raise GeometryError unless η > 0 on (0, Λ/2] and η′(Λ/2) = 0."""
    half = profile.half_period
    x = np.linspace(0.0, half, n_samples)
    heights = profile.eta(x)
    if np.any(~(heights > 0.0)):
        raise GeometryError(f"Surface touches the bottom: min eta = {float(np.min(heights))!r}")
    trough = float(profile.eta_prime(np.array([half]))[0])
    if abs(trough) > FLATNESS_TOL:
        raise GeometryError(f"Profile is not flat at the trough: eta'(L) = {trough!r}")


def profile_diagnostics(profile: SurfaceProfile, x_range: Tuple[float, float] = (1e-6, 1e-2),
                        n_fit: int = 25) -> ProfileDiagnostics:
    """
    Corner slope, exponent of the remainder η′(x) + a₀ = O(x^α) from a log-log
    fit near the crest, and trough flatness.

    The exponent is None when the remainder vanishes on the fit range
    (a corner that is straight there).
    """
    half = profile.half_period
    x = np.geomspace(x_range[0] * half, x_range[1] * half, n_fit)
    remainder = np.abs(profile.eta_prime(x) + profile.a0)
    exponent = None
    if np.all(remainder > 1e-13):
        exponent = float(np.polyfit(np.log(x), np.log(remainder), 1)[0])
    grid = np.linspace(0.0, half, 2001)
    return ProfileDiagnostics(
        slope_at_crest=float(profile.eta_prime(x[:1])[0]),
        remainder_exponent=exponent,
        trough_slope=float(profile.eta_prime(np.array([half]))[0]),
        min_height=float(np.min(profile.eta(grid))),
    )


def crest_drop(profile: SurfaceProfile, x: np.ndarray) -> np.ndarray:
    """η(0) − η(x) = −∫₀ˣ η′, without the cancellation of the difference near the crest."""
    x = np.asarray(x, dtype=float)
    near = x < _DROP_SWITCH * profile.half_period
    drop = profile.eta0 - profile.eta(x)
    if np.any(near):
        u, w = gauss_legendre(_DROP_ORDER, 0.0, 1.0)
        xn = x[near]
        slopes = profile.eta_prime(xn[:, None] * u ** 2)
        drop[near] = -xn * np.sum(slopes * (2.0 * u * w), axis=-1)
    return drop


# --------------------------------------------------------------------------
# 4. Straightening near the crest
# --------------------------------------------------------------------------

def _estimate_rho0(rho: ProfileFn, profile: SurfaceProfile) -> float:
    """Limit ρ(0⁺) from ρ = ρ₀ + c·x^α sampled at two tiny abscissae."""
    x1 = 1e-8 * profile.half_period
    r1, r4 = (float(v) for v in rho(np.array([x1, 4.0 * x1])))
    return r1 - (r4 - r1) / (4.0 ** profile.alpha - 1.0)


def build_straightened(profile: SurfaceProfile, rho: ProfileFn, delta: float,
                       rho0: Optional[float] = None, n_samples: int = 4001) -> StraightenedProfile:
    """
    Blend the straight crest line η(0) − a₀x into the true profile.

    ξ = η(0) − a₀x and χ = ρ₀ on (0, 3δ); ξ = η and χ = ρ from
    min(4δ, Λ/2 − δ) on; a smoothstep partition in between. χ multiplies 1/R
    in the model Robin condition ∂_ν U − χU/R = 0.

    Args:
        profile: The physical surface
        rho: Robin coefficient ρ(x) along the surface
        delta: Matching radius
        rho0: Corner value of ρ; extrapolated from ``rho`` when omitted
        n_samples: Sample count for the reported deviations

    Returns:
        StraightenedProfile with fitted constants c in sup|ξ−η| + sup|ξ′−η′| <= c·δ^α
        and sup|χ−ρ| <= c·δ^α

    Raises:
        GeometryError: If 3δ >= Λ/2 − δ
    """
    half = profile.half_period
    if not delta > 0.0 or 3.0 * delta >= half - delta:
        raise GeometryError(f"Matching radius delta={delta!r} too large for half period {half!r}")
    if rho0 is None:
        rho0 = _estimate_rho0(rho, profile)
    eta0, a0 = profile.eta0, profile.a0
    x1 = 3.0 * delta
    x2 = min(4.0 * delta, half - delta)
    width = x2 - x1

    def blend(x):
        t = (np.asarray(x, dtype=float) - x1) / width
        return smoothstep(t), smoothstep_deriv(t) / width, smoothstep_second(t) / width ** 2

    def xi(x):
        x = np.asarray(x, dtype=float)
        beta, _, _ = blend(x)
        line = eta0 - a0 * x
        eta = profile.eta(x)
        return np.where(beta == 0.0, line, np.where(beta == 1.0, eta, line + beta * (eta - line)))

    def xi_prime(x):
        x = np.asarray(x, dtype=float)
        beta, dbeta, _ = blend(x)
        line = eta0 - a0 * x
        eta, deta = profile.eta(x), profile.eta_prime(x)
        mixed = -a0 + beta * (deta + a0) + dbeta * (eta - line)
        return np.where(beta == 0.0, -a0, np.where(beta == 1.0, deta, mixed))

    def xi_second(x):
        x = np.asarray(x, dtype=float)
        beta, dbeta, ddbeta = blend(x)
        line = eta0 - a0 * x
        eta, deta, ddeta = profile.eta(x), profile.eta_prime(x), profile.eta_second(x)
        mixed = beta * ddeta + 2.0 * dbeta * (deta + a0) + ddbeta * (eta - line)
        return np.where(beta == 0.0, 0.0, np.where(beta == 1.0, ddeta, mixed))

    def chi(x):
        x = np.asarray(x, dtype=float)
        beta, _, _ = blend(x)
        inside = x < x2
        values = np.full(x.shape, rho0, dtype=float)
        if np.any(beta > 0.0):
            outer = beta > 0.0
            values[outer] = rho0 + beta[outer] * (rho(x[outer]) - rho0)
        values[~inside] = rho(x[~inside])
        return values

    x = np.linspace(half / n_samples, half, n_samples)
    geom = float(np.max(np.abs(xi(x) - profile.eta(x))) + np.max(np.abs(xi_prime(x) - profile.eta_prime(x))))
    rho_dev = float(np.max(np.abs(chi(x) - rho(x))))
    scale = delta ** profile.alpha

    surface = SurfaceProfile(
        period=profile.period,
        eta=xi,
        eta_prime=xi_prime,
        eta_second=xi_second,
        a0=a0,
        alpha=profile.alpha,
        eta0=eta0,
    )
    check_profile(surface)
    logger.info(f"Straightened profile at delta={delta:.4g}: geometry constant {geom / scale:.4g}, "
                f"Robin constant {rho_dev / scale:.4g}")
    return StraightenedProfile(
        base=profile,
        delta=delta,
        rho0=rho0,
        xi=xi,
        xi_prime=xi_prime,
        chi=chi,
        surface=surface,
        geometry_constant=geom / scale,
        rho_constant=rho_dev / scale,
    )
