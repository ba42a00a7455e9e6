"""
solve2d mode: negative ladder of the straight-corner model domain (σ = 0,
Robin term ρ₀/r) with the asymptotic fit and the h-profile of one mode.
"""

import logging

import numpy as np

from ..errors import FitError
from ..schemas import CommandResult, ExperimentConfig, PlotSeries, ResultRow
from ..services.acceptance import check_ladder2d
from ..services.angle_modes import build_basis
from ..services.experiments import corner_from_config, model_ladder
from ..services.solver2d.eigen import eigenfunction_profile, fit_asymptotics
from ..services.specfun import ladder_prediction

logger = logging.getLogger(__name__)

MODE = "solve2d"


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    corner = corner_from_config(config)
    space, report = model_ladder(config, threads)

    rows = []
    for j, s in enumerate(report.s):
        k = report.k[j] if report.k is not None else j
        rows.append(ResultRow(mode=MODE, k=k, quantity="s", prediction=ladder_prediction(corner, k),
                              computed=float(s), residual=report.residuals[j]))

    summary = [
        f"kappa = {corner.kappa!r}, gamma = {corner.gamma!r}, delta = {config.ladder.delta!r}",
        f"{space.mesh.n_elements} elements, {space.n_free} free dofs, r_inner = {space.mesh.r_inner!r}",
    ]
    try:
        fit = fit_asymptotics(report, corner)
        summary.append(f"fit: slope/pi = {fit.slope_over_pi!r}, intercept error = {fit.intercept_error!r}, "
                       f"kappa_fit = {fit.kappa_fit!r}")
    except FitError as e:
        summary.append(f"fit skipped: {e}")

    plots = []
    if report.k:
        k = report.k[0] if len(report.k) == 1 else sorted(report.k)[1]
        radii = np.geomspace(max(1e-4, 10.0 * space.mesh.r_inner), 0.6 * config.mesh.straight_cutoff, 150)
        samples = eigenfunction_profile(report, k, space, build_basis(corner, n_modes=4), radii)
        summary.append(f"mode k = {k}: h-correlation {samples.correlation!r}, W fraction {samples.w_fraction!r}")
        plots.append(PlotSeries(name="solve2d_h", x=tuple(radii.tolist()), y=tuple(samples.h.tolist())))
        plots.append(PlotSeries(name="solve2d_bessel", x=tuple(radii.tolist()), y=tuple(samples.bessel.tolist())))

    logger.info(f"solve2d: {len(rows)} eigenvalues")
    return CommandResult(rows=tuple(rows), summary=tuple(summary), plots=tuple(plots),
                         acceptance=tuple(check_ladder2d(config, threads)))
