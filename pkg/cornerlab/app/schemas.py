"""
Pydantic models for experiment configs and the records the CLI emits.
"""

import math
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Mode = Literal["roots", "bessel-table", "halfline", "interval", "solve2d", "compare", "waterwave"]

CRITERIA = (
    "constants",
    "gamma",
    "bessel",
    "halfline",
    "interval",
    "properties",
    "ladder2d",
    "perturbation",
    "structure",
)


# --------------------------------------------------------------------------
# 1. Experiment config sections
# --------------------------------------------------------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(_Section):
    mode: Mode = "roots"
    seed: int = Field(default=0, ge=0)
    criteria: Tuple[str, ...] = ()

    @field_validator("criteria", mode="before")
    @classmethod
    def split_criteria(cls, value):
        if isinstance(value, str):
            return tuple(item.strip() for item in value.split(",") if item.strip())
        return value

    @field_validator("criteria")
    @classmethod
    def known_criteria(cls, value):
        unknown = [name for name in value if name not in CRITERIA]
        if unknown:
            raise ValueError(f"unknown criteria {unknown}; choose from {list(CRITERIA)}")
        return value


class CornerSection(_Section):
    """Corner by angle and Robin constant, or the Stokes corner"""
    stokes: bool = False
    alpha_star: Optional[float] = Field(default=None, gt=0.0, lt=math.pi)
    rho0: Optional[float] = Field(default=None, gt=0.0)
    gamma: float = Field(default=0.0, ge=0.0, lt=math.pi)
    alpha: float = Field(default=1.0, gt=0.0, le=1.0)

    @model_validator(mode="after")
    def corner_given(self):
        if self.stokes and (self.alpha_star is not None or self.rho0 is not None):
            raise ValueError("give either stokes = true or alpha_star and rho0, not both")
        if not self.stokes and (self.alpha_star is None or self.rho0 is None):
            raise ValueError("alpha_star and rho0 are required unless stokes = true")
        return self


class LadderSection(_Section):
    k_min: int = 0
    k_max: int = 3
    delta: float = Field(default=0.2, gt=0.0, le=10.0)
    n_points: int = Field(default=10_000, ge=10, le=1_000_000)

    @property
    def k_range(self) -> Tuple[int, int]:
        return self.k_min, self.k_max


class MeshSection(_Section):
    h_max: float = Field(default=0.1, gt=0.0, le=1.0)
    grading: float = Field(default=0.8, gt=0.0, lt=1.0)
    n_layers: int = Field(default=55, ge=0, le=400)
    n_angular: int = Field(default=6, ge=2)
    degree: Literal[1, 2] = 2
    half_period: float = Field(default=1.0, gt=0.0)
    crest_height: float = Field(default=1.0, gt=0.0)
    straight_cutoff: float = Field(default=0.5, gt=0.0)
    a1: float = 0.0
    a2: float = 0.0

    @model_validator(mode="after")
    def consistent(self):
        if self.n_angular % 2:
            raise ValueError(f"n_angular must be even, got {self.n_angular}")
        if self.straight_cutoff >= self.half_period:
            raise ValueError("straight_cutoff must lie below half_period")
        return self


class OutputSection(_Section):
    dir: Optional[str] = None
    plot_data: bool = True


class TolerancesSection(_Section):
    """Named acceptance thresholds; every field can be overridden in the config"""
    slope_window: float = Field(default=0.05, gt=0.0)
    intercept: float = Field(default=0.1, gt=0.0)
    correlation: float = Field(default=0.99, gt=0.0, le=1.0)
    oracle_rel: float = Field(default=1e-3, gt=0.0)
    ratio_rel: float = Field(default=1e-3, gt=0.0)
    robin_residual: float = Field(default=1e-10, gt=0.0)
    interval_factor: float = Field(default=10.0, gt=0.0)
    wronskian: float = Field(default=1e-9, gt=0.0)
    cross_regime: float = Field(default=1e-8, gt=0.0)
    small_z: float = Field(default=1e-6, gt=0.0)
    large_z: float = Field(default=1e-6, gt=0.0)
    gamma_modulus: float = Field(default=1e-12, gt=0.0)
    gamma_phase: float = Field(default=1e-10, gt=0.0)
    symplectic: float = Field(default=1e-10, gt=0.0)
    orthonormality: float = Field(default=1e-10, gt=0.0)
    symmetry: float = Field(default=1e-12, gt=0.0)
    covariance: float = Field(default=1e-12, gt=0.0)
    perturbation_growth: float = Field(default=2.0, gt=0.0)


class ExperimentConfig(_Section):
    run: RunSection = RunSection()
    corner: CornerSection = CornerSection(stokes=True)
    ladder: LadderSection = LadderSection()
    mesh: MeshSection = MeshSection()
    output: OutputSection = OutputSection()
    tolerances: TolerancesSection = TolerancesSection()


# --------------------------------------------------------------------------
# 2. Emitted records
# --------------------------------------------------------------------------

class ResultRow(BaseModel):
    """One line of results.csv; prediction is NaN where no closed form exists"""
    model_config = ConfigDict(frozen=True)

    mode: Mode
    k: Optional[int] = None
    quantity: str
    prediction: float
    computed: float
    residual: float


class AcceptanceRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    criterion: str
    measured: float
    tolerance: float
    passed: bool


class PlotSeries(BaseModel):
    """Two-column plot data written to <name>.dat"""
    model_config = ConfigDict(frozen=True)

    name: str
    x: Tuple[float, ...]
    y: Tuple[float, ...]

    @model_validator(mode="after")
    def same_length(self):
        if len(self.x) != len(self.y):
            raise ValueError(f"plot series {self.name!r} has {len(self.x)} x and {len(self.y)} y values")
        return self


class CommandResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: Tuple[ResultRow, ...] = ()
    summary: Tuple[str, ...] = ()
    plots: Tuple[PlotSeries, ...] = ()
    acceptance: Tuple[AcceptanceRow, ...] = ()

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.acceptance)
