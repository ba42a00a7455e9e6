"""
Results Service

Writes the artifacts of a run: results.csv (one row per root or
eigenvalue), acceptance.csv for verify, summary.txt and optional two-column
plot-data files. Floats are written in their shortest round-trip form so
identical runs produce identical bytes.
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

from pydantic import ValidationError

from ..errors import ConfigurationError
from ..schemas import AcceptanceRow, CommandResult, PlotSeries, ResultRow

logger = logging.getLogger(__name__)

RESULT_FIELDS = ("mode", "k", "quantity", "prediction", "computed", "residual")
ACCEPTANCE_FIELDS = ("criterion", "measured", "tolerance", "passed")


# --------------------------------------------------------------------------
# 1. Formatting
# --------------------------------------------------------------------------

def format_float(value: float) -> str:
    """Shortest decimal string that parses back to the same double."""
    return repr(float(value))


def _result_record(row: ResultRow) -> dict:
    return {
        "mode": row.mode,
        "k": "" if row.k is None else str(row.k),
        "quantity": row.quantity,
        "prediction": format_float(row.prediction),
        "computed": format_float(row.computed),
        "residual": format_float(row.residual),
    }


def _acceptance_record(row: AcceptanceRow) -> dict:
    return {
        "criterion": row.criterion,
        "measured": format_float(row.measured),
        "tolerance": format_float(row.tolerance),
        "passed": "true" if row.passed else "false",
    }


def _write_csv(path: Path, fields: Sequence[str], records: Iterable[dict]) -> None:
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(fields), lineterminator="\n")
            writer.writeheader()
            for record in records:
                writer.writerow(record)
    except OSError as e:
        raise ConfigurationError(f"Cannot write {path}: {e}") from e


# --------------------------------------------------------------------------
# 2. Writers
# --------------------------------------------------------------------------

def write_results(path: Path, rows: Sequence[ResultRow]) -> Path:
    """Write results.csv; an empty row list leaves a header-only file."""
    path = Path(path)
    _write_csv(path, RESULT_FIELDS, (_result_record(row) for row in rows))
    logger.info(f"Wrote {len(rows)} result rows to {path}")
    return path


def write_acceptance(path: Path, rows: Sequence[AcceptanceRow]) -> Path:
    path = Path(path)
    _write_csv(path, ACCEPTANCE_FIELDS, (_acceptance_record(row) for row in rows))
    logger.info(f"Wrote {len(rows)} acceptance rows to {path}")
    return path


def write_plot(directory: Path, series: PlotSeries) -> Path:
    """Plain two-column file <name>.dat, one point per line."""
    path = Path(directory) / f"{series.name}.dat"
    lines = [f"# x {series.name}"]
    lines.extend(f"{format_float(x)} {format_float(y)}" for x, y in zip(series.x, series.y))
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot write {path}: {e}") from e
    return path


def acceptance_table(rows: Sequence[AcceptanceRow]) -> List[str]:
    """Fixed-width table of criterion, measured value, tolerance and verdict."""
    width = max([len("criterion")] + [len(row.criterion) for row in rows])
    lines = [f"{'criterion':<{width}}  {'measured':>14}  {'tolerance':>14}  verdict"]
    for row in rows:
        verdict = "PASS" if row.passed else "FAIL"
        lines.append(f"{row.criterion:<{width}}  {row.measured:>14.6g}  {row.tolerance:>14.6g}  {verdict}")
    return lines


def write_summary(path: Path, title: str, result: CommandResult) -> Path:
    lines = [title, ""]
    lines.extend(result.summary)
    if result.acceptance:
        lines.append("")
        lines.extend(acceptance_table(result.acceptance))
        lines.append("")
        lines.append("status: " + ("PASS" if result.passed else "FAIL"))
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot write {path}: {e}") from e
    return path


def write_artifacts(directory: Path, title: str, result: CommandResult, plot_data: bool,
                    results_name: str = "results.csv") -> List[Path]:
    """
    Write every artifact of a command result into ``directory``.

    Returns:
        Paths written, CSV first
    """
    directory = Path(directory)
    written = [write_results(directory / results_name, result.rows)]
    if result.acceptance:
        written.append(write_acceptance(directory / "acceptance.csv", result.acceptance))
    written.append(write_summary(directory / "summary.txt", title, result))
    if plot_data:
        written.extend(write_plot(directory, series) for series in result.plots)
    return written


# --------------------------------------------------------------------------
# 3. Readers
# --------------------------------------------------------------------------

def read_results(path: Path) -> List[ResultRow]:
    """
    Re-parse a results.csv into ResultRow records.

    Raises:
        ConfigurationError: If the header or a row does not match ResultRow
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
            raise ConfigurationError(f"{path} has header {reader.fieldnames}, expected {list(RESULT_FIELDS)}")
        rows = []
        for line, record in enumerate(reader, start=2):
            record = dict(record)
            record["k"] = None if record["k"] == "" else record["k"]
            try:
                rows.append(ResultRow.model_validate(record))
            except ValidationError as e:
                raise ConfigurationError(f"{path}:{line}: {e}") from e
    return rows


def read_acceptance(path: Path) -> List[AcceptanceRow]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        return [AcceptanceRow.model_validate(record) for record in csv.DictReader(f)]
