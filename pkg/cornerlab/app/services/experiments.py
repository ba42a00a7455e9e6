"""
Experiment setups shared by the run commands and the acceptance suite:
corner, profiles, Robin coefficients and the model-domain ladder built from
one ExperimentConfig.
"""

import logging
import math
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from ..errors import ConfigurationError
from ..schemas import ExperimentConfig
from .solver2d.compare import CompareTable, MeshParams, curved_vs_model_compare
from .solver2d.eigen import EigenReport, solve_ladder
from .solver2d.mesh import generate_mesh
from .solver2d.profile import StraightenedProfile, SurfaceProfile, build_straightened
from .solver2d.space import EnrichedSpace, assemble, build_space
from .specfun import CornerData, make_corner
from .waterwave import (
    STOKES_RHO0,
    profile_from_expansion,
    rho_coefficient,
    stokes_corner_params,
    stokes_linearization,
)

logger = logging.getLogger(__name__)


def corner_from_config(config: ExperimentConfig) -> CornerData:
    section = config.corner
    if section.stokes:
        return stokes_corner_params(section.gamma)
    return make_corner(section.alpha_star, section.rho0, gamma=section.gamma, alpha=section.alpha)


def mesh_params(config: ExperimentConfig) -> MeshParams:
    mesh = config.mesh
    return MeshParams(h_max=mesh.h_max, grading=mesh.grading, n_layers=mesh.n_layers,
                      n_angular=mesh.n_angular, degree=mesh.degree)


def _profile(config: ExperimentConfig, corner: CornerData, a1: float, a2: float) -> SurfaceProfile:
    mesh = config.mesh
    a0 = 1.0 / math.tan(corner.alpha_star)
    return profile_from_expansion(a1, a2, mesh.straight_cutoff, mesh.half_period, mesh.crest_height, a0=a0)


def straight_profile(config: ExperimentConfig, corner: CornerData) -> SurfaceProfile:
    """Model domain: the surface is the straight line of slope −cot α* up to the blend."""
    return _profile(config, corner, 0.0, 0.0)


def curved_profile(config: ExperimentConfig, corner: CornerData) -> SurfaceProfile:
    """Crest profile with the a1, a2 terms of the [mesh] section."""
    return _profile(config, corner, config.mesh.a1, config.mesh.a2)


def constant_rho(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def rho(x):
        return np.full(np.shape(x), value)

    return rho


def require_stokes(config: ExperimentConfig) -> None:
    if not config.corner.stokes:
        raise ConfigurationError(f"Mode {config.run.mode} needs the Stokes corner: set stokes = true in [corner]")


def stokes_rho(profile: SurfaceProfile) -> Callable[[np.ndarray], np.ndarray]:
    """ρ of the linearized extreme wave with zero vorticity and stagnation at the crest."""
    return rho_coefficient(stokes_linearization(profile))


@lru_cache(maxsize=4)
def model_ladder(config: ExperimentConfig, threads: int = 1) -> Tuple[EnrichedSpace, EigenReport]:
    """
    Ladder of the straight-corner model domain with σ = 0 and Robin term ρ₀/r.

    Cached per config so that several acceptance criteria share one solve.
    """
    corner = corner_from_config(config)
    profile = straight_profile(config, corner)
    params = mesh_params(config)
    mesh = generate_mesh(profile, params.h_max, params.grading, params.n_layers, n_angular=params.n_angular)
    space = build_space(mesh, profile, corner, degree=params.degree, delta=config.ladder.delta)
    A, M = assemble(space, None, constant_rho(corner.rho0), threads=threads)
    report = solve_ladder(space, A, M, config.ladder.k_range, threads=threads)
    logger.info(f"Model ladder: {len(report.eigenvalues)} eigenvalues for k in {config.ladder.k_range}")
    return space, report


def compare_run(config: ExperimentConfig, threads: int = 1) -> Tuple[StraightenedProfile, CompareTable]:
    """Curved Stokes-expansion profile against its straightened model on identical meshes."""
    require_stokes(config)
    corner = corner_from_config(config)
    profile = curved_profile(config, corner)
    rho = stokes_rho(profile)
    model = build_straightened(profile, rho, config.ladder.delta, rho0=STOKES_RHO0)
    table = curved_vs_model_compare(profile, model, corner, rho, config.ladder.k_range,
                                    mesh_params(config), threads=threads)
    return model, table
