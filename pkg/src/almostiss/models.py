"""
Errors, enums and result models for AlmostISS.

This module defines the exception hierarchy shared by every module, the small
enums used to label algorithm outcomes, and the pydantic models that make up
the JSON report.
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class AlmostIssError(Exception):
    """Base exception for every error raised by AlmostISS."""
    pass


class ExpressionError(AlmostIssError):
    """Raised when an expression cannot be parsed or evaluated."""
    pass


class ExprSyntaxError(ExpressionError):
    """Malformed expression text."""

    def __init__(self, position: Optional[int], message: str):
        self.position = position
        self.message = message
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"Syntax error{where}: {message}")


class UnknownIdentifier(ExpressionError):
    """An identifier is neither an allowed variable nor a builtin."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown identifier: {name!r}")


class ArityError(ExpressionError):
    """A builtin was called with the wrong number of arguments."""

    def __init__(self, fn: str, expected: int, got: int):
        self.fn = fn
        self.expected = expected
        self.got = got
        super().__init__(f"{fn}() takes {expected} argument(s), got {got}")


class DomainError(ExpressionError):
    """ln/sqrt of a negative number, division by exact zero, and friends."""

    def __init__(self, node: Any, message: str = "math domain error"):
        self.node = node
        super().__init__(f"{message} in {node!r}")


class Unreachable(AlmostIssError):
    """The value cannot be reached by a comparison function below the overflow guard."""

    def __init__(self, y: float, guard: float):
        self.y = y
        self.guard = guard
        super().__init__(
            f"Value {y!r} exceeds g({guard:g}); the function is not K-infinity in practice"
        )


class InfiniteEndpoint(AlmostIssError):
    """A region needs a finite upper endpoint but the interval is unbounded."""

    def __init__(self, k: int):
        self.k = k
        super().__init__(f"Interval {k} has an infinite upper endpoint")


class DimensionMismatch(AlmostIssError):
    """A state vector does not match the declared dimension."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"Expected a vector of dimension {expected}, got {got}")


class TruncatedTrajectory(AlmostIssError):
    """A trajectory stopped early (blow-up or domain error)."""
    pass


class EmptyRegion(AlmostIssError):
    """Rejection sampling found no member of a region."""

    def __init__(self, k: int, attempts: int):
        self.k = k
        self.attempts = attempts
        super().__init__(f"No point of B_{k} found after {attempts} attempts")


class ConfigIoError(AlmostIssError):
    """The configuration file cannot be read."""
    pass


class SchemaError(AlmostIssError):
    """The configuration does not match the schema."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class ConfigError(AlmostIssError):
    """A configuration field is well-formed JSON but unusable (bad expression, bad gain)."""

    def __init__(self, path: str, cause: Any):
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")


class EnumBaseModel(Enum):
    """Base class for string-valued enums."""

    def __str__(self) -> str:
        return self.value


class GainClass(EnumBaseModel):
    """Claimed comparison-function class."""
    K = "K"
    K_INF = "K_inf"


class PointClass(EnumBaseModel):
    """Position of gamma(s) relative to s."""
    BELOW = "below"
    ABOVE = "above"
    FIXED = "fixed"


class Termination(EnumBaseModel):
    """Why the interval search stopped."""
    UPPER_INFINITE = "upper_infinite"
    DIVERGENT_ABOVE = "divergent_above"
    OUTER_CAP = "outer_cap"


class ABGamma(EnumBaseModel):
    """Partition of the state space by V2 versus sigma(V1)."""
    A = "A"
    B = "B"
    GAMMA = "Gamma"


class InnerComposition(EnumBaseModel):
    """Reading of the inner composition in the A_k threshold for x2."""
    AS_PRINTED = "as_printed"
    GAMMA21_GAMMA12 = "gamma21_gamma12"


class InputKind(EnumBaseModel):
    """Families of bounded input signals."""
    ZERO = "zero"
    CONSTANT = "constant"
    SINUSOID = "sinusoid"
    PIECEWISE_RANDOM = "piecewise_random"


class SectionStatus(EnumBaseModel):
    """Outcome of a report section."""
    OK = "ok"
    VIOLATIONS = "violations"
    SKIPPED = "skipped"


class ResultModel(BaseModel):
    """Base for report models; infinities are written as JSON constants."""
    model_config = ConfigDict(ser_json_inf_nan="constants", use_enum_values=False)


class Violation(ResultModel):
    """One sampled point where an inequality fails."""
    index: int = Field(description="Position of the point in the sampling order")
    point: List[float]
    lhs: float
    rhs: float
    margin: float


class CheckReport(ResultModel):
    """Outcome of a sampled inequality check."""

    name: str = ""
    checked_points: int = 0
    skipped_points: int = 0
    violation_count: int = 0
    violations: List[Violation] = Field(default_factory=list)
    min_margin: float = math.inf
    required_fraction: float = Field(
        default=1.0, description="Fraction of checked points that must satisfy the inequality"
    )
    notes: Dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.checked_points == 0:
            return self.violation_count == 0
        allowed = (1.0 - self.required_fraction) * self.checked_points
        return self.violation_count <= allowed + 1e-12

    @property
    def violation_fraction(self) -> float:
        if self.checked_points == 0:
            return 0.0
        return self.violation_count / self.checked_points


class ValidationReport(ResultModel):
    """Sample-based class-K / K-infinity validation of a comparison function."""

    name: str = ""
    claimed_class: GainClass = GainClass.K_INF
    passed: bool = True
    value_at_zero: float = 0.0
    grid_points: int = 0
    s_max: float = 0.0
    probe_value: Optional[float] = None
    probe_threshold: Optional[float] = None
    heuristic_check: bool = Field(
        default=True, description="Unboundedness is probed at one point, never proven"
    )
    failures: List[str] = Field(default_factory=list)
    violating_pairs: List[Tuple[float, float]] = Field(default_factory=list)


class IntervalDiagnostics(ResultModel):
    """Iteration counts behind one interval."""
    outer_step: int
    lower_iterations: int
    upper_iterations: int
    lower_converged: bool
    upper_converged: bool
    lower_monotone: bool = True
    upper_monotone: bool = True


class SmallGainInterval(ResultModel):
    """One interval (lower, upper) on which gamma12(gamma21(s)) < s."""
    lower: float
    upper: float
    diagnostics: IntervalDiagnostics
    restriction_12_holds: Optional[bool] = Field(
        default=None, description="Older sufficient condition gamma12^-1(lower) < gamma21(upper)"
    )
    restriction_12_margin: Optional[float] = None

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.upper)


class SmallGainIntervals(ResultModel):
    """Output of the interval search."""

    intervals: List[SmallGainInterval] = Field(default_factory=list)
    ell: int = 0
    terminated_by: Termination = Termination.OUTER_CAP
    outer_steps: int = 0
    params: Dict[str, Any] = Field(default_factory=dict)

    def as_pairs(self) -> List[Tuple[float, float]]:
        return [(item.lower, item.upper) for item in self.intervals]


class RegionSpec(ResultModel):
    """Level-set thresholds of A_k and B_k."""
    k: int
    a_thresholds: Tuple[float, float]
    b_thresholds: Tuple[float, float]
    inner_composition: InnerComposition = InnerComposition.AS_PRINTED

    @property
    def b_is_whole_space(self) -> bool:
        return not math.isfinite(self.b_thresholds[0])


class NonConvergedRun(ResultModel):
    """Enough information to replay one failed ensemble member."""
    level: float
    run_index: int
    stream: List[int] = Field(description="Entropy passed to numpy.random.default_rng for x0")
    x0: List[float]
    reason: str
    limsup: Optional[float] = None


class LevelSummary(ResultModel):
    """Per-input-level statistics of an ensemble."""
    level: float
    sup_norm: float
    runs: int
    settled: int
    converged: int
    truncated: int
    max_limsup: Optional[float] = None
    radius: float


class AissReport(ResultModel):
    """Monte-Carlo almost-ISS verdict."""

    n_runs: int
    runs_per_level: int
    fraction_converged: float
    empirical_gain_points: List[Tuple[float, float]] = Field(
        default_factory=list, description="Empirical envelope, not the theorem's gain function"
    )
    levels: List[LevelSummary] = Field(default_factory=list)
    zero_input_converged: int = Field(
        default=0, description="Initial conditions converging without input; only these can converge at u > 0"
    )
    nonconverged_seeds: List[NonConvergedRun] = Field(default_factory=list)
    seed: int = 0
    required_fraction: float = 1.0

    @property
    def passed(self) -> bool:
        return self.fraction_converged >= self.required_fraction


class Provenance(ResultModel):
    """Where a report came from."""
    tool_version: str
    schema_version: str
    command: str
    config_hash: str
    timestamp: str
    settings: Dict[str, Any] = Field(default_factory=dict)


class Report(ResultModel):
    """Full analysis report."""

    schema_version: str = "1"
    status: Dict[str, SectionStatus] = Field(default_factory=dict)
    validation: Dict[str, ValidationReport] = Field(default_factory=dict)
    intervals: Optional[SmallGainIntervals] = None
    regions: Optional[List[RegionSpec]] = None
    checks: Dict[str, CheckReport] = Field(default_factory=dict)
    aiss: Optional[AissReport] = None
    provenance: Provenance
