"""
AlmostISS - small-gain analysis for almost input-to-state stable interconnections
"""

__version__ = "0.1.0"

from .expr import (
    parse,
    evaluate,
    evaluate_array,
    to_string,
    variables,
)
from .comparison import (
    ComparisonFn,
    from_text,
    invert,
    compose,
    validate_kinf,
    make_sigma,
    sample_curves,
)
from .intervals import (
    AlgorithmParams,
    classify_point,
    fixed_point_limit,
    find_intervals,
    check_gap_restriction,
    brute_force_intervals,
)
from .regions import (
    StorageFn,
    CompositeV,
    storage_from_text,
    level_set_contains,
    build_region,
    build_regions,
    region_membership,
    gap_set_mask,
    composite_v,
    classify_abgamma,
    classify_k,
    check_storage,
    distance_to_region,
)
from .verify import (
    DpiBlock,
    check_sgc_on_interval,
    check_iss_lyapunov,
    check_dpi,
    check_q_positive,
    check_dpi_cover,
)
from .sim import (
    InterconnectionSpec,
    InputSignal,
    Trajectory,
    make_input,
    integrate,
    integrate_batch,
    estimate_limsup,
    write_trajectory_csv,
    monte_carlo_aiss,
    check_theorem1,
)
from .config import (
    Config,
    load_config,
    parse_config,
)
from .core import (
    RunResult,
    run,
)
from .models import (
    AlmostIssError,
    ExpressionError,
    ExprSyntaxError,
    UnknownIdentifier,
    ArityError,
    DomainError,
    Unreachable,
    InfiniteEndpoint,
    DimensionMismatch,
    TruncatedTrajectory,
    EmptyRegion,
    ConfigIoError,
    SchemaError,
    ConfigError,
    GainClass,
    PointClass,
    Termination,
    ABGamma,
    InnerComposition,
    InputKind,
    CheckReport,
    ValidationReport,
    SmallGainInterval,
    SmallGainIntervals,
    RegionSpec,
    AissReport,
    Report,
)

__all__ = [
    # Expressions
    "parse",
    "evaluate",
    "evaluate_array",
    "to_string",
    "variables",

    # Comparison functions
    "ComparisonFn",
    "from_text",
    "invert",
    "compose",
    "validate_kinf",
    "make_sigma",
    "sample_curves",

    # Small-gain intervals
    "AlgorithmParams",
    "classify_point",
    "fixed_point_limit",
    "find_intervals",
    "check_gap_restriction",
    "brute_force_intervals",

    # Regions
    "StorageFn",
    "CompositeV",
    "storage_from_text",
    "level_set_contains",
    "build_region",
    "build_regions",
    "region_membership",
    "gap_set_mask",
    "composite_v",
    "classify_abgamma",
    "classify_k",
    "check_storage",
    "distance_to_region",

    # Verification
    "DpiBlock",
    "check_sgc_on_interval",
    "check_iss_lyapunov",
    "check_dpi",
    "check_q_positive",
    "check_dpi_cover",

    # Simulation
    "InterconnectionSpec",
    "InputSignal",
    "Trajectory",
    "make_input",
    "integrate",
    "integrate_batch",
    "estimate_limsup",
    "write_trajectory_csv",
    "monte_carlo_aiss",
    "check_theorem1",

    # Configuration and commands
    "Config",
    "load_config",
    "parse_config",
    "RunResult",
    "run",

    # Errors
    "AlmostIssError",
    "ExpressionError",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "ArityError",
    "DomainError",
    "Unreachable",
    "InfiniteEndpoint",
    "DimensionMismatch",
    "TruncatedTrajectory",
    "EmptyRegion",
    "ConfigIoError",
    "SchemaError",
    "ConfigError",

    # Models
    "GainClass",
    "PointClass",
    "Termination",
    "ABGamma",
    "InnerComposition",
    "InputKind",
    "CheckReport",
    "ValidationReport",
    "SmallGainInterval",
    "SmallGainIntervals",
    "RegionSpec",
    "AissReport",
    "Report",
]
