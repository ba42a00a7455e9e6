"""
compare mode: ladder of a curved Stokes-expansion crest against its
straightened model, with the normalized differences (λ̃ − λ̂)/τ̂^{2−α}.
"""

import logging

from ..schemas import CommandResult, ExperimentConfig, ResultRow
from ..services.acceptance import perturbation_rows
from ..services.experiments import compare_run

logger = logging.getLogger(__name__)

MODE = "compare"


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    model, table = compare_run(config, threads)
    rows = tuple(
        ResultRow(mode=MODE, k=row.k, quantity="lambda", prediction=row.lam_model,
                  computed=row.lam_curved, residual=row.normalized)
        for row in table.rows
    )
    summary = (
        f"delta = {model.delta!r}, rho0 = {model.rho0!r}, alpha = {table.alpha!r}",
        f"geometry constant {model.geometry_constant!r}, rho constant {model.rho_constant!r}",
        "residual column: (lambda_curved - lambda_model) / tau_model^(2 - alpha)",
    )
    logger.info(f"compare: {len(rows)} rungs")
    return CommandResult(rows=rows, summary=summary,
                         acceptance=tuple(perturbation_rows(table.normalized, config.tolerances)))
