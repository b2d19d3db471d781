"""
Pydantic models for run configuration files and study reports.
(Pydantic v2 compatible)
"""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

# Literal fallback for older Python versions
try:
    from typing import Literal
except ImportError:
    from typing_extensions import Literal


PlantFamily = Literal["constant", "drone", "chain", "linear-drift"]

# keyword parameters accepted by each plant family
FAMILY_PARAMS: Dict[str, Tuple[str, ...]] = {
    "constant": ("alpha0", "beta0"),
    "drone": ("alpha0", "alpha_amp", "thrust_ratio"),
    "chain": ("a", "b0", "b2"),
    "linear-drift": ("drift", "beta0"),
}


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxSpec(StrictModel):
    """State bounds; must contain the origin."""
    lower: List[float] = Field(..., min_length=1)
    upper: List[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "BoxSpec":
        if len(self.lower) != len(self.upper):
            raise ValueError("box lower and upper must have the same length")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < 0.0 < hi:
                raise ValueError(f"box interval [{lo}, {hi}] must contain 0 in its interior")
        return self


class PlantSpec(StrictModel):
    """A normal-form plant: family, order, parameters and operating box."""
    family: PlantFamily = Field(..., description="Plant family")
    n: int = Field(..., ge=1, le=8, description="Relative degree")
    params: Dict[str, Any] = Field(default_factory=dict, description="Family parameters")
    box: BoxSpec
    beta_sign: Literal[1, -1] = Field(default=1, description="Declared sign of beta")
    input_range: Optional[Tuple[float, float]] = Field(
        default=None, description="Actuator range [lo, hi]; used by the clamp and the remainder grid"
    )

    @model_validator(mode="after")
    def _check_params(self) -> "PlantSpec":
        allowed = FAMILY_PARAMS[self.family]
        unknown = sorted(set(self.params) - set(allowed))
        if unknown:
            raise ValueError(f"unknown {self.family} parameters {unknown}; allowed: {list(allowed)}")
        if len(self.box.lower) != self.n:
            raise ValueError(f"box has dimension {len(self.box.lower)}, plant has n={self.n}")
        if self.input_range is not None and not self.input_range[0] < self.input_range[1]:
            raise ValueError("input_range needs lo < hi")
        return self


class EstimatorConfig(StrictModel):
    n: int = Field(..., ge=1, le=8)
    rho: int = Field(..., ge=2, description="Window length, at least n+1")
    T: float = Field(..., gt=0.0, description="Sample time in seconds")

    @model_validator(mode="after")
    def _check_window(self) -> "EstimatorConfig":
        if self.rho < self.n + 1:
            raise ValueError(f"rho={self.rho} must be at least n+1={self.n + 1}")
        return self


class ControllerConfig(StrictModel):
    """Exactly one of poles / K."""
    poles: Optional[List[float]] = Field(default=None, description="Desired real closed-loop poles")
    K: Optional[List[float]] = Field(default=None, description="Explicit virtual gain row")
    Q: Optional[List[List[float]]] = Field(default=None, description="Lyapunov weight, identity if omitted")
    gamma: float = Field(..., gt=0.0, description="Adaptation rate per step")
    transient_inputs: List[float] = Field(..., description="rho-1 inputs applied while the window fills")
    clamp: bool = Field(default=False, description="Clamp inputs to the plant input_range")

    @model_validator(mode="after")
    def _one_gain_source(self) -> "ControllerConfig":
        if (self.poles is None) == (self.K is None):
            raise ValueError("give exactly one of 'poles' or 'K'")
        return self

    @property
    def gain_length(self) -> int:
        return len(self.poles if self.poles is not None else self.K)


class NoiseConfig(StrictModel):
    d_bar: float = Field(default=0.0, ge=0.0, description="Output noise bound")
    seed: int = Field(default=0, ge=0)


class Setpoint(StrictModel):
    time: float = Field(..., ge=0.0)
    value: float


class RunConfig(StrictModel):
    """One closed-loop run, as stored in a config file."""
    name: str = Field(default="run", min_length=1, max_length=128)
    plant: PlantSpec
    estimator: EstimatorConfig
    controller: ControllerConfig
    horizon: float = Field(..., gt=0.0, description="Simulated duration in seconds")
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    z0: List[float]
    setpoints: List[Setpoint] = Field(default_factory=lambda: [Setpoint(time=0.0, value=0.0)])
    substeps: Optional[int] = Field(default=None, ge=1, description="RK4 substeps per sample")

    @field_validator("z0")
    @classmethod
    def _finite_z0(cls, v: List[float]) -> List[float]:
        if any(x != x or abs(x) == float("inf") for x in v):
            raise ValueError("z0 entries must be finite")
        return v

    @model_validator(mode="after")
    def _cross_checks(self) -> "RunConfig":
        n = self.plant.n
        if self.estimator.n != n:
            raise ValueError(f"estimator.n={self.estimator.n} differs from plant.n={n}")
        if self.estimator.T > self.horizon:
            raise ValueError(f"T={self.estimator.T} exceeds horizon={self.horizon}")
        if len(self.z0) != n:
            raise ValueError(f"z0 has {len(self.z0)} entries, expected n={n}")
        for i, (x, lo, hi) in enumerate(zip(self.z0, self.plant.box.lower, self.plant.box.upper)):
            if not lo <= x <= hi:
                raise ValueError(f"z0[{i}]={x} outside the operating box [{lo}, {hi}]")
        if self.controller.gain_length != n:
            raise ValueError(f"controller gain has length {self.controller.gain_length}, expected n={n}")
        if len(self.controller.transient_inputs) != self.estimator.rho - 1:
            raise ValueError(
                f"need rho-1={self.estimator.rho - 1} transient inputs, got {len(self.controller.transient_inputs)}"
            )
        if self.controller.clamp and self.plant.input_range is None:
            raise ValueError("controller.clamp needs plant.input_range")
        times = [s.time for s in self.setpoints]
        if times != sorted(times):
            raise ValueError("setpoints must be sorted by time")
        return self


class StudyCheck(BaseModel):
    """One tolerance verdict."""
    name: str
    value: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    passed: bool
    note: str = ""


class StudyReport(BaseModel):
    """Raw points, fitted quantities and verdicts of one study."""
    study: str
    preset: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    points: List[Dict[str, Any]] = Field(default_factory=list)
    fits: Dict[str, Any] = Field(default_factory=dict)
    checks: List[StudyCheck] = Field(default_factory=list)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)
