"""
waterwave mode: Stokes corner constants, diagnostics of the configured crest
profile and samples of η, ρ and ψ_y for plotting.
"""

import logging
import math

import numpy as np

from ..schemas import AcceptanceRow, CommandResult, ExperimentConfig, PlotSeries, ResultRow
from ..services.experiments import corner_from_config, curved_profile, require_stokes, stokes_rho
from ..services.solver2d.profile import profile_diagnostics
from ..services.waterwave import STOKES_EXPONENT, STOKES_RHO0, surface_psi_y, tau1_root

logger = logging.getLogger(__name__)

MODE = "waterwave"
N_SAMPLES = 400
RHO_LIMIT_TOL = 1e-5
EXPONENT_TOL = 0.05


def _rho_exponent(rho, half: float) -> float:
    x = np.geomspace(1e-7 * half, 1e-4 * half, 20)
    return float(np.polyfit(np.log(x), np.log(np.abs(rho(x) - STOKES_RHO0)), 1)[0])


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    require_stokes(config)
    corner = corner_from_config(config)
    profile = curved_profile(config, corner)
    rho = stokes_rho(profile)
    diag = profile_diagnostics(profile)
    half = profile.half_period
    tau1 = tau1_root()

    rho_limit = float(rho(np.array([1e-12 * half]))[0])
    exponent = math.nan if diag.remainder_exponent is None else diag.remainder_exponent
    rho_exponent = math.nan if diag.remainder_exponent is None else _rho_exponent(rho, half)

    rows = (
        ResultRow(mode=MODE, quantity="kappa", prediction=1.07, computed=corner.kappa,
                  residual=corner.kappa - 1.07),
        ResultRow(mode=MODE, quantity="tau1", prediction=1.8, computed=tau1, residual=tau1 - 1.8),
        ResultRow(mode=MODE, k=1, quantity="mu", prediction=1.5 * tau1, computed=corner.mu[0],
                  residual=corner.mu[0] - 1.5 * tau1),
        ResultRow(mode=MODE, quantity="rho0_limit", prediction=STOKES_RHO0, computed=rho_limit,
                  residual=rho_limit / STOKES_RHO0 - 1.0),
        ResultRow(mode=MODE, quantity="slope_at_crest", prediction=-profile.a0, computed=diag.slope_at_crest,
                  residual=diag.slope_at_crest + profile.a0),
        ResultRow(mode=MODE, quantity="remainder_exponent", prediction=STOKES_EXPONENT, computed=exponent,
                  residual=exponent - STOKES_EXPONENT),
        ResultRow(mode=MODE, quantity="rho_exponent", prediction=STOKES_EXPONENT, computed=rho_exponent,
                  residual=rho_exponent - STOKES_EXPONENT),
        ResultRow(mode=MODE, quantity="trough_slope", prediction=0.0, computed=diag.trough_slope,
                  residual=diag.trough_slope),
    )

    x = np.linspace(half / N_SAMPLES, half, N_SAMPLES)
    plots = (
        PlotSeries(name="waterwave_eta", x=tuple(x.tolist()), y=tuple(profile.eta(x).tolist())),
        PlotSeries(name="waterwave_rho", x=tuple(x.tolist()), y=tuple(rho(x).tolist())),
        PlotSeries(name="waterwave_psi_y", x=tuple(x.tolist()), y=tuple(surface_psi_y(profile)(x).tolist())),
    )
    summary = (
        f"profile: a1 = {config.mesh.a1!r}, a2 = {config.mesh.a2!r}, half period {half!r}, "
        f"crest height {profile.eta0!r}",
        f"minimum height {diag.min_height!r}",
        "rho from the irrotational linearization with stagnation at the crest",
    )

    rel = abs(rho_limit / STOKES_RHO0 - 1.0)
    acceptance = [
        AcceptanceRow(criterion="waterwave.rho0_limit", measured=rel, tolerance=RHO_LIMIT_TOL,
                      passed=rel <= RHO_LIMIT_TOL),
    ]
    for name, value in (("waterwave.remainder_exponent", exponent), ("waterwave.rho_exponent", rho_exponent)):
        if math.isfinite(value):
            error = abs(value - STOKES_EXPONENT)
            acceptance.append(AcceptanceRow(criterion=name, measured=error, tolerance=EXPONENT_TOL,
                                            passed=error <= EXPONENT_TOL))
    logger.info(f"waterwave: rho(0+) = {rho_limit!r}")
    return CommandResult(rows=rows, summary=summary, plots=plots, acceptance=tuple(acceptance))
