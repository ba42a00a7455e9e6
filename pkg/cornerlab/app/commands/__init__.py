"""
Commands package for the experiment runner.

One module per experiment mode; each turns a validated config into a
CommandResult of rows, summary lines, plot data and acceptance rows.
"""

from typing import Callable, Dict

from ..schemas import CommandResult, ExperimentConfig
from . import bessel_table, compare, halfline, interval, roots, solve2d, waterwave

COMMANDS: Dict[str, Callable[[ExperimentConfig, int], CommandResult]] = {
    roots.MODE: roots.run,
    bessel_table.MODE: bessel_table.run,
    halfline.MODE: halfline.run,
    interval.MODE: interval.run,
    solve2d.MODE: solve2d.run,
    compare.MODE: compare.run,
    waterwave.MODE: waterwave.run,
}


def dispatch(config: ExperimentConfig, threads: int = 1) -> CommandResult:
    return COMMANDS[config.run.mode](config, threads)
