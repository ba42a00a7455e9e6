"""
roots mode: corner constants κ, γ_κ, μ₁..μ₄ (and τ₁ for the Stokes corner)
with the residuals of their defining equations.
"""

import logging
import math

from ..schemas import CommandResult, ExperimentConfig, ResultRow
from ..services.acceptance import check_constants, gamma_phase_series
from ..services.experiments import corner_from_config
from ..services.waterwave import STOKES_A0, tau1_root

logger = logging.getLogger(__name__)

MODE = "roots"
N_MU = 4
STOKES_KAPPA = 1.07
STOKES_TAU1 = 1.8


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    corner = corner_from_config(config)
    stokes = config.corner.stokes
    a, rho0, kappa = corner.alpha_star, corner.rho0, corner.kappa

    rows = [ResultRow(mode=MODE, quantity="kappa",
                      prediction=STOKES_KAPPA if stokes else math.nan,
                      computed=kappa,
                      residual=kappa * math.tanh(kappa * a) - rho0)]
    series = gamma_phase_series(kappa)
    rows.append(ResultRow(mode=MODE, quantity="gamma_kappa", prediction=series,
                          computed=corner.gamma_kappa, residual=corner.gamma_kappa - series))

    tau1 = tau1_root() if stokes else None
    for k, mu in enumerate(corner.mu[:N_MU], start=1):
        rows.append(ResultRow(mode=MODE, k=k, quantity="mu",
                              prediction=1.5 * tau1 if (stokes and k == 1) else math.nan,
                              computed=mu,
                              residual=mu * math.sin(mu * a) + rho0 * math.cos(mu * a)))
    if stokes:
        half = 0.5 * math.pi * tau1
        rows.append(ResultRow(mode=MODE, quantity="tau1", prediction=STOKES_TAU1, computed=tau1,
                              residual=tau1 + STOKES_A0 * math.cos(half) / math.sin(half)))

    summary = (
        f"alpha* = {a!r}, rho0 = {rho0!r}, gamma = {corner.gamma!r}",
        f"kappa = {kappa!r}",
        f"gamma_kappa = {corner.gamma_kappa!r}",
        f"ladder ratio e^(pi/kappa) = {corner.ratio!r}",
    ) + tuple(f"mu_{k} = {mu!r}" for k, mu in enumerate(corner.mu[:N_MU], start=1))

    if stokes:
        acceptance = tuple(check_constants(config, threads))
    else:
        acceptance = ()
    logger.info(f"roots: {len(rows)} rows")
    return CommandResult(rows=tuple(rows), summary=summary, acceptance=acceptance)
