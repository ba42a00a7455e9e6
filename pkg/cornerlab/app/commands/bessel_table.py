"""
bessel-table mode: K_{iκ}, Ĩ_{iκ} and their Wronskian on a logarithmic z
grid, each next to an independent evaluation where one exists.
"""

import logging
import math

import numpy as np

from ..schemas import CommandResult, ExperimentConfig, PlotSeries, ResultRow
from ..services.acceptance import check_bessel
from ..services.experiments import corner_from_config
from ..services.specfun import (
    asymptotic_switch,
    besselI_imag_real_deriv_scaled,
    besselI_imag_real_scaled,
    besselK_imag_deriv_scaled,
    besselK_imag_scaled,
    besselK_imag_series,
    small_z_I,
)

logger = logging.getLogger(__name__)

MODE = "bessel-table"
Z_GRID = np.geomspace(1e-3, 50.0, 61)
SERIES_LIMIT = 2.0
SMALL_Z = 1e-2


def _hankel_scaled(kappa: float, z: float) -> float:
    mu = 4.0 * kappa ** 2
    return math.sqrt(math.pi / (2.0 * z)) * (
        1.0 - (mu + 1.0) / (8.0 * z) + (mu + 1.0) * (mu + 9.0) / (128.0 * z ** 2)
    )


def run(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    kappa = corner_from_config(config).kappa
    hankel_from = asymptotic_switch(kappa)
    k_scaled = np.asarray(besselK_imag_scaled(kappa, Z_GRID))
    i_scaled = np.asarray(besselI_imag_real_scaled(kappa, Z_GRID))
    k_deriv = np.asarray(besselK_imag_deriv_scaled(kappa, Z_GRID))
    i_deriv = np.asarray(besselI_imag_real_deriv_scaled(kappa, Z_GRID))

    rows = []
    for j, z in enumerate(Z_GRID):
        z = float(z)
        k_value = float(k_scaled[j]) * math.exp(-z)
        if z <= SERIES_LIMIT:
            k_pred = float(besselK_imag_series(kappa, z))
        elif z >= hankel_from:
            k_pred = _hankel_scaled(kappa, z) * math.exp(-z)
        else:
            k_pred = math.nan
        rows.append(ResultRow(mode=MODE, k=j, quantity="K", prediction=k_pred, computed=k_value,
                              residual=k_value - k_pred))

        i_value = float(i_scaled[j]) * math.exp(z)
        i_pred = float(small_z_I(kappa, z)) if z <= SMALL_Z else math.nan
        rows.append(ResultRow(mode=MODE, k=j, quantity="I", prediction=i_pred, computed=i_value,
                              residual=i_value - i_pred))

        w = float(i_scaled[j] * k_deriv[j] - i_deriv[j] * k_scaled[j])
        rows.append(ResultRow(mode=MODE, k=j, quantity="wronskian", prediction=-1.0 / z, computed=w,
                              residual=z * w + 1.0))

    summary = (
        f"kappa = {kappa!r}",
        f"z grid: {Z_GRID.size} points, geometric on [{Z_GRID[0]!r}, {Z_GRID[-1]!r}]; row k is the grid index",
        f"K predictions: ascending series for z <= {SERIES_LIMIT}, Hankel expansion for z >= {hankel_from!r}",
        f"I predictions: small-argument form for z <= {SMALL_Z}",
    )
    plots = (
        PlotSeries(name="bessel_K_scaled", x=tuple(Z_GRID.tolist()), y=tuple(k_scaled.tolist())),
        PlotSeries(name="bessel_I_scaled", x=tuple(Z_GRID.tolist()), y=tuple(i_scaled.tolist())),
    )
    logger.info(f"bessel-table: {len(rows)} rows")
    return CommandResult(rows=tuple(rows), summary=summary, plots=plots,
                         acceptance=tuple(check_bessel(config, threads)))
