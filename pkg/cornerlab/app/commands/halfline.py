"""
halfline mode: closed-form ladder τ_k against the log-grid finite-difference
oracle; both normalization candidates are reported.
"""

import logging
import math

import numpy as np

from ..schemas import AcceptanceRow, CommandResult, ExperimentConfig, PlotSeries, ResultRow
from ..services.acceptance import halfline_window, match_rungs, min_gap_ratio
from ..services.experiments import corner_from_config
from ..services.model1d import halfline_fd_modes, halfline_ladder, k_values, oracle_correlation

logger = logging.getLogger(__name__)

MODE = "halfline"


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    corner = corner_from_config(config)
    ks = k_values(config.ladder.k_range)
    if not ks:
        logger.info("halfline: empty k range, nothing to solve")
        return CommandResult(summary=("empty k range",))

    ladder = halfline_ladder(corner, ks)
    r_min, r_max = halfline_window(corner, min(ks), max(ks))
    oracle = halfline_fd_modes(corner, r_min, r_max, config.ladder.n_points, k_range=ks)
    taus = match_rungs(corner, oracle.eigenvalues, ks)
    found = np.sqrt(-np.asarray(oracle.eigenvalues))

    rows = []
    for k, pred, tau in zip(ks, ladder.tau, taus):
        rows.append(ResultRow(mode=MODE, k=k, quantity="tau", prediction=pred, computed=tau,
                              residual=tau / pred - 1.0))
    for k, pred, tau in zip(ks, ladder.tau_factor2, taus):
        rows.append(ResultRow(mode=MODE, k=k, quantity="tau_factor2", prediction=pred, computed=tau,
                              residual=tau / pred - 1.0))

    plain = max(abs(row.residual) for row in rows if row.quantity == "tau")
    doubled = max(abs(row.residual) for row in rows if row.quantity == "tau_factor2")
    summary = [
        f"kappa = {corner.kappa!r}, gamma = {corner.gamma!r}, gamma_kappa = {corner.gamma_kappa!r}",
        f"window [{r_min!r}, {r_max!r}], {config.ladder.n_points} log-grid points",
        f"oracle found {found.size} negative eigenvalues",
        f"max relative error: plain {plain!r}, factor 2 {doubled!r}",
        "oracle selects the " + ("plain" if plain <= doubled else "factor 2") + " normalization",
    ]
    plots = []
    for index in range(found.size):
        correlation = oracle_correlation(corner, oracle, index)
        summary.append(f"mode tau = {found[index]!r}: correlation with K = {correlation!r}")
    if found.size:
        # eigenvalues ascend, so the last column is the lowest rung
        plots.append(PlotSeries(name="halfline_mode", x=tuple(np.exp(oracle.t).tolist()),
                                y=tuple(oracle.vectors[:, -1].tolist())))

    tol = config.tolerances
    acceptance = [AcceptanceRow(criterion="halfline.plain_normalization", measured=plain,
                                tolerance=tol.oracle_rel, passed=plain <= tol.oracle_rel)]
    if len(ks) >= 2 and all(math.isfinite(t) for t in taus):
        ratio_error = float(np.max(np.abs(np.diff(np.log(taus)) - math.log(corner.ratio))))
        acceptance.append(AcceptanceRow(criterion="halfline.ratio", measured=ratio_error,
                                        tolerance=tol.ratio_rel, passed=ratio_error <= tol.ratio_rel))
        gap = min_gap_ratio(found, corner)
        acceptance.append(AcceptanceRow(criterion="halfline.simple", measured=gap, tolerance=0.5,
                                        passed=gap > 0.5))
    return CommandResult(rows=tuple(rows), summary=tuple(summary), plots=tuple(plots),
                         acceptance=tuple(acceptance))
