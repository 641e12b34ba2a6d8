from enum import Enum
from typing import Any, Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SamplingError(Exception):
    """Base class for every error raised by the sampler and its harness"""


class ProtocolViolation(SamplingError):
    """A protocol state machine received input its invariants forbid"""


class OracleMismatch(SamplingError):
    """The coordinator's sample disagreed with the brute-force oracle"""

    def __init__(self, round_no: int, detail: str):
        super().__init__(f"oracle mismatch at round {round_no}: {detail}")
        self.round_no = round_no
        self.detail = detail


class CouplingViolation(SamplingError):
    """Coupled A/B runs broke threshold agreement or the 2x message bound"""

    def __init__(self, message: str, counterexample: Dict[str, Any]):
        super().__init__(f"{message}: {counterexample}")
        self.counterexample = counterexample


class EmptySampleError(SamplingError):
    """A with-replacement sample was requested before any arrival"""


class ScheduleError(SamplingError):
    """Unknown schedule generator or inconsistent generator parameters"""


class ScenarioError(SamplingError):
    """A scenario config file could not be loaded"""

    def __init__(self, message: str, line: Optional[int] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class InsufficientTrialsError(SamplingError):
    """Too few trials for the normal approximation behind a test"""


class Variant(str, Enum):
    """Protocol variant driven by the simulator"""
    A = "A"    # deployed protocol, sites learn u only through replies
    B = "B"    # analysis protocol, u broadcast at every epoch start
    WR = "WR"  # sampling with replacement


class OracleMode(str, Enum):
    EVERY_ROUND = "every-round"
    FINAL_ONLY = "final-only"


class GeneratorSpec(BaseModel):
    """Names a schedule generator and its extra parameters"""
    model_config = ConfigDict(extra="forbid")

    kind: str = "round_robin"
    params: Dict[str, Any] = {}


class SimConfig(BaseModel):
    """Parameters of one simulation run"""
    model_config = ConfigDict(frozen=True, use_enum_values=False, extra="forbid")

    k: int = Field(ge=1)              # number of sites
    s: int = Field(ge=1)              # sample size
    n: int = Field(ge=1)              # total stream length
    variant: Variant = Variant.A
    r: float = Field(default=2.0, ge=2.0)  # epoch shrink factor
    seed: int = Field(default=0, ge=0)
    generator: GeneratorSpec = GeneratorSpec()
    oracle_checks: Optional[OracleMode] = None  # None picks by n

    def updated(self, **changes: Any) -> "SimConfig":
        """Copy with changes, validated like a fresh config"""
        return SimConfig.model_validate({**self.model_dump(), **changes})

    def with_variant(self, variant: Variant) -> "SimConfig":
        return self.updated(variant=variant)


class HeavyHitterConfig(BaseModel):
    """Sizing parameters for heavy-hitter detection"""
    epsilon: float
    confidence_constant: float = Field(default=16.0, gt=0)
    n_hint: int = Field(default=2, ge=2)

    @field_validator("epsilon")
    @classmethod
    def _epsilon_in_unit_interval(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("epsilon must lie strictly between 0 and 1")
        return value


class BoundReport(BaseModel):
    """Outcome of one empirical check against a theoretical value"""
    model_config = ConfigDict(populate_by_name=True)

    name: str
    theoretical: float
    empirical_mean: float
    ratio: float
    passed: bool = Field(alias="pass")
    alternate: Optional[float] = None  # second form of the bound, when one exists
    detail: Optional[str] = None

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True, exclude_none=True)


KNOWN_CHECKS = (
    "oracle", "coupling", "uniformity", "epochs", "per-epoch", "total",
    "wr-uniformity", "wr-trend", "figure1-trend", "heavy-hitters",
)


class Scenario(BaseModel):
    """A named experiment: config template, sweep axes, trial count and checks"""
    model_config = ConfigDict(extra="forbid")

    name: str
    description: str = ""
    sim: SimConfig
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    sweep: Dict[str, List[float]] = {}
    checks: List[str] = []
    out_dir: Optional[str] = None
    variants: List[Variant] = []   # empty means sim.variant only
    params: Dict[str, Any] = {}    # check-specific extras (planted labels, epsilon, ...)
    max_runs: int = 10**6

    @field_validator("sweep")
    @classmethod
    def _known_axes(cls, sweep: Dict[str, List[float]]) -> Dict[str, List[float]]:
        unknown = set(sweep) - {"k", "s", "n", "r"}
        if unknown:
            raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
        for axis, values in sweep.items():
            if not values:
                raise ValueError(f"sweep axis '{axis}' is empty")
        return sweep

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, checks: List[str]) -> List[str]:
        unknown = [name for name in checks if name not in KNOWN_CHECKS]
        if unknown:
            raise ValueError(f"unknown checks: {unknown}")
        return checks

    @model_validator(mode="after")
    def _bounded_size(self) -> "Scenario":
        if self.run_count() > self.max_runs:
            raise ValueError(f"scenario expands to {self.run_count()} runs, cap is {self.max_runs}")
        return self

    def sweep_size(self) -> int:
        size = 1
        for values in self.sweep.values():
            size *= len(values)
        return size

    def run_count(self) -> int:
        return self.sweep_size() * self.trials * max(len(self.variants), 1)


class RunSummary(BaseModel):
    """What the experiment runner reports back for a scenario execution"""
    run_id: str
    scenario: str
    passed: bool
    runs: int
    reports: List[BoundReport]
    artifacts: Dict[str, str] = {}
