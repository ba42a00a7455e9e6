"""
Curved-vs-Model Comparison Service

Runs the same ladder solve on the physical domain Ω and on its straightened
model Ω_ξ, and tabulates λ̃_k − λ̂_k against the perturbation scale τ̂_k^{2−α}.
A second table sets the 2D model eigenvalues against the interval model with
and without the Dirichlet-to-Neumann closure.
"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ...errors import InvalidParameterError
from ..model1d import KRange, interval_eigenvalues
from ..specfun import CornerData
from .eigen import EigenReport, solve_ladder
from .mesh import generate_mesh
from .profile import StraightenedProfile, SurfaceProfile
from .space import RhoFn, SigmaFn, assemble, build_space

logger = logging.getLogger(__name__)


class MeshParams(BaseModel):
    """Mesh and space parameters shared by both domains"""
    model_config = ConfigDict(frozen=True)

    h_max: float = 0.1
    grading: float = 0.8
    n_layers: int = 55
    n_angular: int = 6
    degree: int = 2


class CompareRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    lam_curved: float
    lam_model: float
    difference: float
    normalized: float


class CompareTable(BaseModel):
    """Per-rung comparison of the curved domain with its straightened model"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: float
    rows: Tuple[CompareRow, ...]
    curved: EigenReport
    model: EigenReport

    @property
    def normalized(self) -> np.ndarray:
        return np.array([row.normalized for row in self.rows])


class ClosureRow(BaseModel):
    """2D model eigenvalue against the interval model with and without DtN closure"""
    model_config = ConfigDict(frozen=True)

    k: int
    tau_2d: float
    tau_dtn: float
    tau_zero: float
    error_dtn: float
    error_zero: float


def ladder_run(profile: SurfaceProfile, corner: CornerData, rho: RhoFn, k_range: KRange,
               params: MeshParams, delta: float, sigma: SigmaFn = None, threads: int = 1,
               method: str = "auto") -> EigenReport:
    """Mesh, enrich, assemble and solve one domain."""
    mesh = generate_mesh(profile, params.h_max, params.grading, params.n_layers, n_angular=params.n_angular)
    space = build_space(mesh, profile, corner, degree=params.degree, delta=delta)
    A, M = assemble(space, sigma, rho, threads=threads)
    return solve_ladder(space, A, M, k_range, method=method, threads=threads)


def curved_vs_model_compare(profile: SurfaceProfile, straightened: StraightenedProfile, corner: CornerData,
                            rho: RhoFn, k_range: KRange, params: Optional[MeshParams] = None,
                            sigma: SigmaFn = None, threads: int = 1) -> CompareTable:
    """
    Ladder of the curved domain (Robin coefficient ρ) against the ladder of
    the straightened model (Robin coefficient χ) on identically built meshes.

    Args:
        profile: Physical surface η
        straightened: Straightened model built from the same profile
        corner: Corner data
        rho: Robin coefficient ρ(x) on the physical surface
        k_range: Rungs to compare
        params: Mesh parameters
        sigma: Potential σ(x, y), shared by both domains
        threads: Worker threads

    Returns:
        CompareTable with rows (k, λ̃, λ̂, λ̃ − λ̂, (λ̃ − λ̂)/τ̂^{2−α})
    """
    if straightened.base is not profile and straightened.base != profile:
        raise InvalidParameterError("Straightened profile was built from a different surface")
    params = MeshParams() if params is None else params
    delta = straightened.delta
    curved = ladder_run(profile, corner, rho, k_range, params, delta, sigma, threads)
    model = ladder_run(straightened.surface, corner, straightened.chi, k_range, params, delta, sigma, threads)
    alpha = profile.alpha

    rows = []
    for k in curved.k or ():
        if model.k is None or k not in model.k:
            continue
        lam_c = curved.eigenvalues[curved.index_of(k)]
        lam_m = model.eigenvalues[model.index_of(k)]
        tau_hat = math.sqrt(-lam_m)
        diff = lam_c - lam_m
        rows.append(CompareRow(k=k, lam_curved=lam_c, lam_model=lam_m, difference=diff,
                               normalized=diff / tau_hat ** (2.0 - alpha)))
        logger.info(f"Rung k={k}: curved {lam_c:.10g}, model {lam_m:.10g}, "
                    f"normalized difference {rows[-1].normalized:.4g}")
    return CompareTable(alpha=alpha, rows=tuple(rows), curved=curved, model=model)


def closure_compare(report: EigenReport, corner: CornerData, delta: float,
                    alpha_fn: Callable[[float], float]) -> Tuple[ClosureRow, ...]:
    """
    τ from the 2D model against the interval roots with α from the outer
    problem and with α ≡ 0, for every labelled rung with τδ large enough.
    """
    if report.k is None:
        raise InvalidParameterError("Closure comparison needs a rung-labelled report")
    ks = [k for k in report.k if report.s[report.index_of(k)] * delta >= 8.0]
    if not ks:
        return ()
    with_dtn = interval_eigenvalues(corner, delta, alpha_fn, ks)
    without = interval_eigenvalues(corner, delta, None, ks)
    rows = []
    for k in ks:
        tau = float(report.s[report.index_of(k)])
        t_dtn = with_dtn.entry(k).tau_hat
        t_zero = without.entry(k).tau_hat
        rows.append(ClosureRow(k=k, tau_2d=tau, tau_dtn=t_dtn, tau_zero=t_zero,
                               error_dtn=abs(tau - t_dtn) / tau, error_zero=abs(tau - t_zero) / tau))
    return tuple(rows)
