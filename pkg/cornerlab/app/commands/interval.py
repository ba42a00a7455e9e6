"""
interval mode: secular roots τ̂_k of the interval problem with Robin closure
at r = δ (α ≡ 0), cross-checked by the interval finite-difference oracle.
"""

import logging

import numpy as np

from ..schemas import CommandResult, ExperimentConfig, PlotSeries, ResultRow
from ..services.acceptance import interval_measures, interval_rows
from ..services.experiments import corner_from_config
from ..services.model1d import (
    boundary_value_scaling,
    interval_eigenfunction,
    interval_eigenvalues,
    interval_fd_oracle,
    mode_norm_closed,
    mode_norm_constant,
)

logger = logging.getLogger(__name__)

MODE = "interval"


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    corner = corner_from_config(config)
    delta = config.ladder.delta
    spectrum = interval_eigenvalues(corner, delta, None, config.ladder.k_range, threads=threads)
    fd_taus = {entry.k: interval_fd_oracle(corner, delta, entry.k) for entry in spectrum.entries}

    rows = []
    for entry in spectrum.entries:
        rows.append(ResultRow(mode=MODE, k=entry.k, quantity="tau_hat", prediction=entry.tau_closed,
                              computed=entry.tau_hat, residual=entry.residual))
        rows.append(ResultRow(mode=MODE, k=entry.k, quantity="tau_fd", prediction=entry.tau_hat,
                              computed=fd_taus[entry.k], residual=fd_taus[entry.k] / entry.tau_hat - 1.0))

    scaling = boundary_value_scaling(spectrum)
    summary = [
        f"kappa = {corner.kappa!r}, gamma = {corner.gamma!r}, delta = {delta!r}",
        f"mode norm constant {mode_norm_constant(corner.kappa)!r} (closed form {mode_norm_closed(corner.kappa)!r})",
    ]
    summary.extend(f"k = {entry.k}: psi = {entry.psi!r}, tau^(1/2) e^(tau delta) |Phi(delta)| = {value!r}"
                   for entry, value in zip(spectrum.entries, scaling))

    plots = []
    if spectrum.entries:
        first = spectrum.entries[0]
        r = np.linspace(delta * 1e-3, delta, 400)
        plots.append(PlotSeries(name="interval_mode", x=tuple(r.tolist()),
                                y=tuple(np.asarray(interval_eigenfunction(spectrum, first.k, r)).tolist())))

    acceptance = ()
    if spectrum.entries:
        acceptance = tuple(interval_rows([interval_measures(spectrum, config.tolerances, fd_taus)],
                                         config.tolerances))
    logger.info(f"interval: {len(spectrum.entries)} roots at delta={delta!r}")
    return CommandResult(rows=tuple(rows), summary=tuple(summary), plots=tuple(plots), acceptance=acceptance)
