"""
One-Dimensional Model Service

The radial model operator

    M h = −(1/r)(r h′)′ − κ²h/r²

on the half-line with the extension phase condition h ~ sin(κ log(r/2) + γ)
at the origin, and on the interval (0, δ) with the Robin closure
h′(δ) + (τ − α(τ⁻¹))h(δ) = 0. Provides closed-form ladders, the secular
equation, its eigenfunctions and moments, finite-difference oracles in the
log-radius variable t = log r, and the extension constant of the resolvent.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.integrate import simpson
from scipy.sparse.linalg import eigsh

from ..errors import (
    ConvergenceError,
    DomainError,
    InvalidParameterError,
    PoleError,
    ResolutionError,
    ResolutionWarning,
    SingularClosureError,
    SolverError,
)
from .quadrature import log_radius_rule
from .specfun import (
    CornerData,
    besselI_imag_real_deriv_scaled,
    besselI_imag_real_scaled,
    besselK_imag,
    besselK_imag_deriv_scaled,
    besselK_imag_scaled,
    ladder_prediction,
)

logger = logging.getLogger(__name__)

AlphaFn = Optional[Callable[[float], float]]
KRange = Union[Tuple[int, int], Sequence[int], range]

# Smallest τδ for which the Robin closure is treated as exponentially small.
MIN_TAU_DELTA = 8.0
# Small-argument cut of moment integrals; the tail below it is done in closed form.
_S_TAIL = 1e-4


# --------------------------------------------------------------------------
# 1. Pydantic Models
# --------------------------------------------------------------------------

class HalfLineLadder(BaseModel):
    """Closed-form ladder of the half-line operator, both normalization candidates"""
    model_config = ConfigDict(frozen=True)

    corner: CornerData
    k: Tuple[int, ...]
    tau: Tuple[float, ...]
    tau_factor2: Tuple[float, ...]
    ratio: float


class HalfLineOracle(BaseModel):
    """Negative spectrum of the log-radius finite-difference discretization"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    eigenvalues: Tuple[float, ...]
    t: np.ndarray
    weights: np.ndarray
    vectors: np.ndarray


class IntervalEntry(BaseModel):
    """One root of the secular relation"""
    model_config = ConfigDict(frozen=True)

    k: int
    tau_hat: float
    tau_closed: float
    psi: float
    residual: float


class IntervalSpectrum(BaseModel):
    """Roots of the interval problem with Robin closure at r = δ"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    corner: CornerData
    delta: float
    alpha_fn: Optional[Callable[[float], float]] = None
    entries: Tuple[IntervalEntry, ...]

    def entry(self, k: int) -> IntervalEntry:
        for item in self.entries:
            if item.k == k:
                return item
        raise InvalidParameterError(f"Rung k={k} not in spectrum {[e.k for e in self.entries]}")


class MomentRow(BaseModel):
    """Scaled radial moments of one interval eigenfunction"""
    model_config = ConfigDict(frozen=True)

    k: int
    tau: float
    beta: float
    l2: Optional[float] = None
    grad: Optional[float] = None
    second: Optional[float] = None


def k_values(k_range: KRange) -> List[int]:
    if isinstance(k_range, tuple) and len(k_range) == 2:
        return list(range(k_range[0], k_range[1] + 1))
    return [int(k) for k in k_range]


# --------------------------------------------------------------------------
# 2. Half-line ladder and its oracle
# --------------------------------------------------------------------------

def halfline_ladder(corner: CornerData, k_range: KRange) -> HalfLineLadder:
    """
    Closed-form ladder τ_k = e^{(γ+γ_κ+kπ)/κ} next to the 2τ_k candidate.

    Args:
        corner: Corner data
        k_range: Inclusive pair (k_min, k_max) or an iterable of rungs

    Returns:
        HalfLineLadder
    """
    ks = k_values(k_range)
    tau = [ladder_prediction(corner, k) for k in ks]
    return HalfLineLadder(
        corner=corner,
        k=tuple(ks),
        tau=tuple(tau),
        tau_factor2=tuple(2.0 * t for t in tau),
        ratio=corner.ratio,
    )


def phase_robin_coefficient(kappa: float, gamma: float, t_min: float) -> float:
    """h_t/h = κ cot(κ(t − log 2) + γ) at t = t_min; inf where the phase vanishes."""
    arg = kappa * (t_min - math.log(2.0)) + gamma
    s = math.sin(arg)
    if abs(s) < 1e-12:
        return math.inf
    return kappa * math.cos(arg) / s


def _log_grid_operators(kappa: float, t: np.ndarray, left_robin: float,
                        right_robin: Optional[float]) -> Tuple[sp.csc_matrix, sp.csc_matrix, np.ndarray]:
    """
    P1 stiffness − κ² lumped mass and the lumped e^{2t} mass on a uniform t-grid.

    The left node carries the phase condition; the right node is either
    Dirichlet (``right_robin`` None, node removed) or Robin with coefficient
    ``right_robin`` added to its diagonal.

    Returns:
        (A, B, keep) where keep is the boolean mask of retained nodes
    """
    n = t.size
    dt = t[1] - t[0]
    lump = np.full(n, dt)
    lump[0] = lump[-1] = 0.5 * dt
    main = np.full(n, 2.0 / dt)
    main[0] = main[-1] = 1.0 / dt
    main -= kappa * kappa * lump
    off = np.full(n - 1, -1.0 / dt)
    keep = np.ones(n, dtype=bool)
    if math.isinf(left_robin):
        keep[0] = False
    else:
        main[0] += left_robin
    if right_robin is None:
        keep[-1] = False
    else:
        main[-1] += right_robin
    A = sp.diags([off, main, off], [-1, 0, 1], format="csc")
    B = sp.diags(lump * np.exp(2.0 * t), 0, format="csc")
    idx = np.flatnonzero(keep)
    return A[idx][:, idx].tocsc(), B[idx][:, idx].tocsc(), keep


def _negative_near_shifts(A: sp.spmatrix, B: sp.spmatrix, shifts: Iterable[float],
                          tau_bounds: Tuple[float, float] = (0.0, math.inf),
                          n_near: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """Union of negative eigenpairs with √(−λ) inside tau_bounds found around each shift."""
    found: Dict[float, np.ndarray] = {}
    n = A.shape[0]
    for sigma in shifts:
        try:
            vals, vecs = eigsh(A, k=min(n_near, n - 2), M=B, sigma=sigma, which="LM")
        except Exception as e:
            raise SolverError(f"Shift-invert solve at sigma={sigma!r} failed: {e}") from e
        for lam, vec in zip(vals, vecs.T):
            if lam >= 0.0 or not tau_bounds[0] <= math.sqrt(-lam) <= tau_bounds[1]:
                continue
            if any(abs(lam - old) <= 1e-9 * abs(lam) for old in found):
                continue
            found[float(lam)] = vec
    order = sorted(found)
    values = np.array(order)
    vectors = np.column_stack([found[v] for v in order]) if order else np.zeros((n, 0))
    return values, vectors


def resolvable_rungs(corner: CornerData, r_min: float, r_max: float,
                     inner: float = 0.05, outer: float = 20.0) -> List[int]:
    """Rungs whose both candidates satisfy r_min·τ <= inner and r_max·τ >= outer."""
    base = corner.gamma + corner.gamma_kappa
    k_lo = math.ceil((corner.kappa * math.log(outer / r_max) - base) / math.pi)
    k_hi = math.floor((corner.kappa * math.log(inner / (2.0 * r_min)) - base) / math.pi)
    return list(range(k_lo, k_hi + 1))


def halfline_fd_modes(corner: CornerData, r_min: float, r_max: float, n_points: int,
                      k_range: Optional[KRange] = None) -> HalfLineOracle:
    """
    Negative eigenpairs of −(h_tt + κ²h) = λ e^{2t} h on [log r_min, log r_max].

    The phase condition h_t/h = κ cot(κ(t − log 2) + γ) holds at t_min and
    h = 0 at t_max. Shift-invert solves are centred at −2τ_k², between the
    two normalization candidates of each targeted rung.

    Args:
        corner: Corner data (κ and γ are used)
        r_min: Inner radius
        r_max: Outer radius
        n_points: Number of grid points
        k_range: Rungs to target; defaults to the resolvable rungs of the window

    Returns:
        HalfLineOracle with eigenvalues ascending and vectors on the kept nodes

    Raises:
        InvalidParameterError: If the window or grid is inconsistent
    """
    if not 0.0 < r_min < r_max:
        raise InvalidParameterError(f"Need 0 < r_min < r_max, got {r_min!r}, {r_max!r}")
    if n_points < 10:
        raise InvalidParameterError(f"n_points too small: {n_points}")
    t = np.linspace(math.log(r_min), math.log(r_max), n_points)
    kappa = corner.kappa
    c = phase_robin_coefficient(kappa, corner.gamma, t[0])
    A, B, keep = _log_grid_operators(kappa, t, c, right_robin=None)

    ks = resolvable_rungs(corner, r_min, r_max) if k_range is None else k_values(k_range)
    shifts = [-2.0 * ladder_prediction(corner, k) ** 2 for k in ks]
    # rungs squeezed against either end of the window are discretization artefacts
    values, vectors = _negative_near_shifts(A, B, shifts, tau_bounds=(5.0 / r_max, 0.5 / r_min))

    dt = t[1] - t[0]
    if kappa * dt > 0.2:
        msg = f"Log grid spacing {dt:.3g} under-resolves the oscillation 2π/κ"
        logger.warning(msg)
        warnings.warn(msg, ResolutionWarning)
    if values.size >= 2:
        taus = np.sqrt(-values)[::-1]
        gaps = np.diff(taus ** 2)
        predicted = taus[:-1] ** 2 * (corner.ratio ** 2 - 1.0)
        if np.any(gaps < 0.5 * predicted):
            msg = "Finite-difference oracle failed to separate consecutive ladder entries"
            logger.warning(msg)
            warnings.warn(msg, ResolutionWarning)
    logger.info(f"Half-line oracle on [{r_min:.3g}, {r_max:.3g}] with {n_points} points: "
                f"{values.size} negative eigenvalues")
    weights = B.diagonal()
    return HalfLineOracle(eigenvalues=tuple(values), t=t[keep], weights=weights, vectors=vectors)


def halfline_fd_oracle(corner: CornerData, r_min: float, r_max: float, n_points: int,
                       k_range: Optional[KRange] = None) -> np.ndarray:
    """Negative eigenvalues (ascending) of the half-line finite-difference oracle."""
    return np.asarray(halfline_fd_modes(corner, r_min, r_max, n_points, k_range).eigenvalues)


def radial_correlation(r: np.ndarray, weights: np.ndarray, h: np.ndarray, g: np.ndarray) -> float:
    """|⟨h, g⟩| / (‖h‖‖g‖) for samples with quadrature weights (weight r included)."""
    num = abs(np.sum(weights * h * g))
    den = math.sqrt(np.sum(weights * h * h) * np.sum(weights * g * g))
    return float(num / den)


def oracle_correlation(corner: CornerData, oracle: HalfLineOracle, index: int) -> float:
    """Correlation of oracle mode ``index`` with K_{iκ}(τr), τ = √(−λ)."""
    tau = math.sqrt(-oracle.eigenvalues[index])
    r = np.exp(oracle.t)
    return radial_correlation(r, oracle.weights, oracle.vectors[:, index], besselK_imag(corner.kappa, tau * r))


# --------------------------------------------------------------------------
# 3. Interval problem with Robin closure
# --------------------------------------------------------------------------

def _alpha(alpha_fn: AlphaFn, tau: float) -> float:
    return 0.0 if alpha_fn is None else float(alpha_fn(1.0 / tau))


def _closure_parts(corner: CornerData, tau: float, delta: float, alpha_fn: AlphaFn) -> Tuple[float, float]:
    """Scaled numerator e^{z}[τK′ + (τ−α)K] and denominator e^{−z}[τĨ′ + (τ−α)Ĩ] at z = τδ."""
    kappa = corner.kappa
    z = tau * delta
    a = _alpha(alpha_fn, tau)
    num = tau * besselK_imag_deriv_scaled(kappa, z) + (tau - a) * besselK_imag_scaled(kappa, z)
    den = tau * besselI_imag_real_deriv_scaled(kappa, z) + (tau - a) * besselI_imag_real_scaled(kappa, z)
    scale = tau * (abs(besselI_imag_real_deriv_scaled(kappa, z)) + abs(besselI_imag_real_scaled(kappa, z)))
    if abs(den) <= 1e-14 * scale:
        raise SingularClosureError(f"Robin closure denominator vanishes at tau={tau!r}, delta={delta!r}")
    return num, den


def interval_Q(corner: CornerData, tau: float, delta: float, alpha_fn: AlphaFn = None) -> float:
    """
    Closure coefficient Q for h = K_{iκ}(τr) − Q·Ĩ_{iκ}(τr) with
    h′(δ) + (τ − α(τ⁻¹))h(δ) = 0.

    Evaluated with exponentially scaled Bessel values, so Q underflows to 0
    rather than overflowing the Ĩ factor.

    Raises:
        DomainError: If tau or delta is not positive
        SingularClosureError: If the denominator vanishes
    """
    if not (tau > 0.0 and delta > 0.0):
        raise DomainError(f"Need tau, delta > 0, got {tau!r}, {delta!r}")
    num, den = _closure_parts(corner, tau, delta, alpha_fn)
    return float(math.exp(-2.0 * tau * delta) * num / den)


def interval_psi(corner: CornerData, tau: float, delta: float, alpha_fn: AlphaFn = None) -> float:
    """Phase correction ψ = arctan(Q sinh(πκ)/π)."""
    q = interval_Q(corner, tau, delta, alpha_fn)
    return math.atan(q * math.sinh(math.pi * corner.kappa) / math.pi)


def secular_residual(corner: CornerData, tau: float, k: int, delta: float, alpha_fn: AlphaFn = None) -> float:
    """κ log τ − (γ_κ + γ − ψ(τ) + kπ)."""
    psi = interval_psi(corner, tau, delta, alpha_fn)
    return corner.kappa * math.log(tau) - (corner.gamma_kappa + corner.gamma - psi + k * math.pi)


def _solve_rung(corner: CornerData, k: int, delta: float, alpha_fn: AlphaFn, damping: float,
                tol: float, max_iter: int) -> IntervalEntry:
    tau_closed = ladder_prediction(corner, k)
    if tau_closed * delta < MIN_TAU_DELTA:
        raise InvalidParameterError(
            f"Rung k={k} has tau*delta={tau_closed * delta:.3g} < {MIN_TAU_DELTA}; raise k or delta"
        )
    base = corner.gamma_kappa + corner.gamma + k * math.pi
    tau = tau_closed
    for iteration in range(max_iter):
        psi = interval_psi(corner, tau, delta, alpha_fn)
        target = math.exp((base - psi) / corner.kappa)
        new_tau = (1.0 - damping) * tau + damping * target
        if abs(new_tau - tau) <= tol * new_tau:
            tau = new_tau
            logger.debug(f"Rung k={k} converged after {iteration + 1} fixed-point steps")
            break
        tau = new_tau
    else:
        raise ConvergenceError(f"Secular iteration for k={k} did not converge in {max_iter} steps")
    psi = interval_psi(corner, tau, delta, alpha_fn)
    residual = secular_residual(corner, tau, k, delta, alpha_fn)
    return IntervalEntry(k=k, tau_hat=tau, tau_closed=tau_closed, psi=psi, residual=residual)


def interval_eigenvalues(corner: CornerData, delta: float, alpha_fn: AlphaFn, k_range: KRange,
                         damping: float = 1.0, tol: float = 1e-13, max_iter: int = 100,
                         threads: int = 1) -> IntervalSpectrum:
    """
    Roots τ̂_k of κ log τ = γ_κ + γ − ψ(τ) + kπ by damped fixed-point iteration.

    Args:
        corner: Corner data
        delta: Closure radius
        alpha_fn: Robin correction α(s) as a function of s = τ⁻¹; None means α ≡ 0
        k_range: Rungs to solve
        damping: Relaxation factor in (0, 1]
        tol: Relative step tolerance
        max_iter: Iteration cap
        threads: Worker threads used across rungs

    Returns:
        IntervalSpectrum

    Raises:
        InvalidParameterError: If a rung has τδ below MIN_TAU_DELTA
        ConvergenceError: If an iteration hits its cap
    """
    if not delta > 0.0:
        raise InvalidParameterError(f"delta must be positive, got {delta!r}")
    if not 0.0 < damping <= 1.0:
        raise InvalidParameterError(f"damping must lie in (0, 1], got {damping!r}")
    ks = k_values(k_range)

    def solve(k: int) -> IntervalEntry:
        return _solve_rung(corner, k, delta, alpha_fn, damping, tol, max_iter)

    if threads > 1 and len(ks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(solve, ks))
    else:
        entries = [solve(k) for k in ks]
    return IntervalSpectrum(corner=corner, delta=delta, alpha_fn=alpha_fn, entries=tuple(entries))


def _scaled_closure(spectrum: IntervalSpectrum, tau: float) -> float:
    num, den = _closure_parts(spectrum.corner, tau, spectrum.delta, spectrum.alpha_fn)
    return num / den


def _phi_s(spectrum: IntervalSpectrum, tau: float, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Φ̃(s) = K(s) − QĨ(s) and Φ̃′(s) for s <= τδ without overflow."""
    kappa = spectrum.corner.kappa
    z = tau * spectrum.delta
    ratio = _scaled_closure(spectrum, tau)
    with np.errstate(under="ignore"):
        decay = np.exp(-s)
        grow = np.exp(s - 2.0 * z)
    value = decay * besselK_imag_scaled(kappa, s) - ratio * grow * besselI_imag_real_scaled(kappa, s)
    deriv = decay * besselK_imag_deriv_scaled(kappa, s) - ratio * grow * besselI_imag_real_deriv_scaled(kappa, s)
    return np.asarray(value), np.asarray(deriv)


def interval_eigenfunction(spectrum: IntervalSpectrum, k: int, r_samples: np.ndarray) -> np.ndarray:
    """
    Samples of Φ_k(r) = K_{iκ}(τ̂_k r) − Q(τ̂_k)·Ĩ_{iκ}(τ̂_k r) on (0, δ].

    Raises:
        InvalidParameterError: If rung k is not in the spectrum
        DomainError: If a radius lies outside (0, δ]
    """
    tau = spectrum.entry(k).tau_hat
    r = np.asarray(r_samples, dtype=float)
    if np.any(r <= 0.0) or np.any(r > spectrum.delta * (1.0 + 1e-12)):
        raise DomainError(f"Radii must lie in (0, {spectrum.delta!r}]")
    value, _ = _phi_s(spectrum, tau, np.atleast_1d(tau * r))
    return value.reshape(r.shape)


def interval_eigenfunction_deriv(spectrum: IntervalSpectrum, k: int, r_samples: np.ndarray) -> np.ndarray:
    """Samples of dΦ_k/dr."""
    tau = spectrum.entry(k).tau_hat
    r = np.asarray(r_samples, dtype=float)
    _, deriv = _phi_s(spectrum, tau, np.atleast_1d(tau * r))
    return (tau * deriv).reshape(r.shape)


def robin_residual(spectrum: IntervalSpectrum, k: int) -> float:
    """Relative residual of Φ′(δ) + (τ − α)Φ(δ) = 0, scaled by τ|K(τδ)|."""
    tau = spectrum.entry(k).tau_hat
    z = tau * spectrum.delta
    value, deriv = _phi_s(spectrum, tau, np.array([z]))
    a = _alpha(spectrum.alpha_fn, tau)
    scale = tau * abs(besselK_imag_scaled(spectrum.corner.kappa, z)) * math.exp(-z)
    return float(abs(tau * deriv[0] + (tau - a) * value[0]) / scale)


def boundary_value_scaling(spectrum: IntervalSpectrum) -> List[float]:
    """τ̂^{1/2} e^{τ̂δ} |Φ_k(δ)| per rung; bounded when Φ_k(δ) = O(τ^{−1/2}e^{−τδ})."""
    out = []
    for item in spectrum.entries:
        tau = item.tau_hat
        z = tau * spectrum.delta
        ratio = _scaled_closure(spectrum, tau)
        kappa = spectrum.corner.kappa
        scaled = besselK_imag_scaled(kappa, z) - ratio * besselI_imag_real_scaled(kappa, z)
        out.append(math.sqrt(tau) * abs(scaled))
    return out


# --------------------------------------------------------------------------
# 4. Moments and normalization constants
# --------------------------------------------------------------------------

def mode_norm_constant(kappa: float) -> float:
    """∫₀^∞ K_{iκ}(s)² s ds by quadrature."""
    s, w = log_radius_rule(1e-12, 60.0, panels_per_decade=8, order=20)
    return float(np.sum(w * besselK_imag(kappa, s) ** 2 * s))


def mode_norm_closed(kappa: float) -> float:
    """Closed form πκ/(2 sinh πκ) of ∫₀^∞ K_{iκ}(s)² s ds."""
    return math.pi * kappa / (2.0 * math.sinh(math.pi * kappa))


def _tail_integral(q: float, kappa: float, s0: float, x0: float,
                   c0: float, c1: float, c2: float) -> float:
    """∫₀^{s0} s^q [c0 + c1 cos 2x + c2 sin 2x] ds with x = κ log(s/2) + const, x(s0) = x0."""
    p = q + 1.0
    osc = np.exp(2j * x0) / (p + 2j * kappa)
    return float(s0 ** p * (c0 / p + c1 * osc.real + c2 * osc.imag))


_MOMENT_MIN_BETA = {"l2": -1.0, "grad": 0.0, "second": 1.0}


def moment_scalings(spectrum: IntervalSpectrum, beta: float,
                    moments: Sequence[str] = ("l2", "grad", "second")) -> List[MomentRow]:
    """
    Scaled moments per rung:

        l2     τ^{2+2β} ∫₀^δ Φ² r^{1+2β} dr       (β > −1)
        grad   τ^{2β}   ∫₀^δ Φ′² r^{1+2β} dr      (β > 0)
        second τ^{2β−2} ∫₀^δ Φ″² r^{1+2β} dr      (β > 1)

    The integrals are taken in s = τr; the part below s = 1e-4 uses the
    leading small-argument form of Φ in closed form.

    Raises:
        DomainError: If β is outside the validity range of a requested moment
    """
    for name in moments:
        if name not in _MOMENT_MIN_BETA:
            raise InvalidParameterError(f"Unknown moment {name!r}")
        if not beta > _MOMENT_MIN_BETA[name]:
            raise DomainError(f"Moment {name!r} needs beta > {_MOMENT_MIN_BETA[name]}, got {beta!r}")
    corner = spectrum.corner
    kappa = corner.kappa
    q = 1.0 + 2.0 * beta
    amp = math.sqrt(math.pi / (kappa * math.sinh(math.pi * kappa)))
    rows = []
    for item in spectrum.entries:
        tau = item.tau_hat
        z = tau * spectrum.delta
        s, w = log_radius_rule(_S_TAIL, z, panels_per_decade=8, order=20)
        phi, dphi = _phi_s(spectrum, tau, s)
        ddphi = ((s * s - kappa * kappa) * phi - s * dphi) / (s * s)

        # Φ̃ ≈ R sin(x), x = κ log(s/2) − γ_κ + ψ
        big_a = interval_Q(corner, tau, spectrum.delta, spectrum.alpha_fn) * math.sinh(math.pi * kappa) / math.pi
        r_amp2 = amp * amp * (1.0 + big_a * big_a)
        x0 = kappa * math.log(_S_TAIL / 2.0) - corner.gamma_kappa + math.atan(big_a)

        values: Dict[str, float] = {}
        if "l2" in moments:
            tail = _tail_integral(q, kappa, _S_TAIL, x0, 0.5 * r_amp2, -0.5 * r_amp2, 0.0)
            values["l2"] = float(np.sum(w * phi * phi * s ** q)) + tail
        if "grad" in moments:
            c = 0.5 * r_amp2 * kappa * kappa
            tail = _tail_integral(q - 2.0, kappa, _S_TAIL, x0, c, c, 0.0)
            values["grad"] = float(np.sum(w * dphi * dphi * s ** q)) + tail
        if "second" in moments:
            c = r_amp2 * kappa * kappa
            tail = _tail_integral(q - 4.0, kappa, _S_TAIL, x0, c * (1.0 + kappa ** 2) / 2.0,
                                  c * (1.0 - kappa ** 2) / 2.0, c * kappa)
            values["second"] = float(np.sum(w * ddphi * ddphi * s ** q)) + tail
        rows.append(MomentRow(k=item.k, tau=tau, beta=beta, **values))
    return rows


def localization_fraction(spectrum: IntervalSpectrum, k: int, multiple: float = 10.0) -> float:
    """Share of ∫Φ_k² r dr carried by r < multiple/τ̂_k."""
    tau = spectrum.entry(k).tau_hat
    z = tau * spectrum.delta
    s, w = log_radius_rule(1e-10, z, panels_per_decade=8, order=20)
    phi, _ = _phi_s(spectrum, tau, s)
    density = w * phi * phi * s
    return float(np.sum(density[s < multiple]) / np.sum(density))


# --------------------------------------------------------------------------
# 5. Interval finite-difference oracle
# --------------------------------------------------------------------------

def interval_fd_oracle(corner: CornerData, delta: float, k: int, alpha_fn: AlphaFn = None,
                       n_points: int = 4000, r_min: Optional[float] = None,
                       tol: float = 1e-11, max_iter: int = 50) -> float:
    """
    τ̂_k from the log-radius discretization on (r_min, δ) with the phase
    condition at r_min and the τ-dependent Robin condition at δ, iterated to
    a fixed point in τ.

    Raises:
        ConvergenceError: If the τ iteration does not settle
    """
    tau = ladder_prediction(corner, k)
    if r_min is None:
        r_min = 1e-3 / tau
    if not 0.0 < r_min < delta:
        raise InvalidParameterError(f"Need 0 < r_min < delta, got {r_min!r}, {delta!r}")
    t = np.linspace(math.log(r_min), math.log(delta), n_points)
    c = phase_robin_coefficient(corner.kappa, corner.gamma, t[0])
    for iteration in range(max_iter):
        # boundary term of the weak form at t = log δ: δ(τ − α)h v
        right = delta * (tau - _alpha(alpha_fn, tau))
        A, B, _ = _log_grid_operators(corner.kappa, t, c, right_robin=right)
        try:
            vals = eigsh(A, k=1, M=B, sigma=-tau * tau, which="LM", return_eigenvectors=False)
        except Exception as e:
            raise SolverError(f"Interval oracle solve failed for k={k}: {e}") from e
        if vals[0] >= 0.0:
            raise SolverError(f"Interval oracle found no negative eigenvalue near k={k}")
        new_tau = math.sqrt(-vals[0])
        if abs(new_tau - tau) <= tol * new_tau:
            return new_tau
        tau = new_tau
    raise ConvergenceError(f"Interval oracle iteration for k={k} did not converge")


# --------------------------------------------------------------------------
# 6. Extension constant of the resolvent
# --------------------------------------------------------------------------

def extension_window(corner: CornerData) -> float:
    """Ladder ratio q = e^{π/κ}; the window (τ_k/q, qτ_k) is −π < κ log(τ_k/τ) < π."""
    return math.exp(math.pi / corner.kappa)


def extension_constant(f: Union[Callable[[np.ndarray], np.ndarray], Tuple[np.ndarray, np.ndarray]],
                       corner: CornerData, tau: float, tau_k: float) -> float:
    """
    Singular coefficient C of the solution h ∈ D_γ of (M + τ²)h = f,
    h = C sin(κ log(r/2) + γ) + O(r):

        C = (−1)^k (κ sinh πκ/π)^{1/2} ∫₀^∞ K_{iκ}(τr) f(r) r dr / (κ sin(κ log(τ_k/τ)))

    Args:
        f: Callable of r, or samples (r, f(r)) on an increasing grid
        corner: Corner data
        tau: Spectral parameter τ, −τ² off the ladder
        tau_k: The nearest ladder value

    Returns:
        C

    Raises:
        PoleError: If τ = τ_k
        DomainError: If τ lies outside (τ_k/q, qτ_k) or tau_k is not a ladder value
    """
    kappa = corner.kappa
    base = corner.gamma + corner.gamma_kappa
    k_real = (kappa * math.log(tau_k) - base) / math.pi
    k = int(round(k_real))
    if abs(k_real - k) > 1e-6:
        raise DomainError(f"tau_k={tau_k!r} is not on the ladder (k≈{k_real:.6f})")
    if abs(tau - tau_k) <= 1e-14 * tau_k:
        raise PoleError(f"tau coincides with the ladder value tau_k={tau_k!r}")
    q = extension_window(corner)
    if not tau_k / q < tau < q * tau_k:
        raise DomainError(f"tau={tau!r} outside the window ({tau_k / q!r}, {q * tau_k!r})")

    if callable(f):
        r, w = log_radius_rule(1e-12 / tau, 60.0 / tau, panels_per_decade=8, order=20)
        integral = float(np.sum(w * besselK_imag(kappa, tau * r) * np.asarray(f(r)) * r))
    else:
        r, values = (np.asarray(a, dtype=float) for a in f)
        if r.size < 3:
            raise ResolutionError("Need at least three samples of f")
        integral = float(simpson(besselK_imag(kappa, tau * r) * values * r, x=r))

    amplitude = math.sqrt(kappa * math.sinh(math.pi * kappa) / math.pi)
    sign = -1.0 if k % 2 else 1.0
    return sign * amplitude * integral / (kappa * math.sin(kappa * math.log(tau_k / tau)))
