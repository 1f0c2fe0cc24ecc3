"""
Command orchestration for AlmostISS.

``run`` executes one command against a loaded config and returns the report
together with the exit code and the plot data that the CLI writes as CSV.
"""

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from . import __version__
from .comparison import sample_curves, validate_kinf
from .config import GAIN_FIELDS, Config
from .intervals import find_intervals
from .models import (
    CheckReport,
    ConfigError,
    Provenance,
    Report,
    SectionStatus,
    SmallGainIntervals,
    ValidationReport,
    Violation,
)
from .regions import build_regions, check_storage
from .sim import Trajectory, check_theorem1, initial_conditions, integrate, make_input, monte_carlo_aiss
from .helper import config_hash
from .verify import check_dpi, check_dpi_cover, check_iss_lyapunov, check_q_positive, check_sgc_on_interval

logger = logging.getLogger(__name__)

COMMANDS = (
    "validate",
    "intervals",
    "regions",
    "check-sgc",
    "check-lyapunov",
    "check-dpi",
    "simulate",
    "report",
    "curves",
)

SECTIONS = ("validation", "intervals", "regions", "checks", "aiss")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2

ORIGIN_TOL = 1e-9
DEFAULT_CURVE_S_MAX = 10.0


@dataclass
class RunResult:
    """Everything a command produced."""

    report: Report
    exit_code: int
    curves: List[Tuple[float, float, float, float]] = field(default_factory=list)
    trajectories: Dict[float, Trajectory] = field(default_factory=dict)


def _provenance(command: str, config: Config) -> Provenance:
    dumped = config.model_dump(mode="json")
    return Provenance(
        tool_version=__version__,
        schema_version=Report.model_fields["schema_version"].default,
        command=command,
        config_hash=config_hash(dumped),
        timestamp=datetime.now(timezone.utc).isoformat(),
        settings={name: dumped[name] for name in ("algorithm", "verify", "sim", "output")},
    )


def validate_gains(config: Config) -> Dict[str, ValidationReport]:
    """Class check of every gain, keyed by the JSON path of its field."""
    spec = config.spec
    v = config.verify
    gains = {f"$.problem.{name}": getattr(spec, name) for name in GAIN_FIELDS}
    for i, block in enumerate(spec.dpi_blocks):
        gains[f"$.problem.dpi_blocks[{i}].gamma_k"] = block.gamma_k
    return {
        path: validate_kinf(g, v.validation_grid, v.validation_s_max, v.probe_factor, name=path)
        for path, g in gains.items()
    }


def check_origin(config: Config) -> CheckReport:
    """f(0, 0, 0) = 0 within ORIGIN_TOL."""
    residual = config.spec.origin_residual()
    report = CheckReport(name="origin", checked_points=1, min_margin=ORIGIN_TOL - residual)
    if not residual <= ORIGIN_TOL:
        report.violation_count = 1
        report.violations.append(
            Violation(index=0, point=[0.0] * config.spec.n, lhs=residual, rhs=ORIGIN_TOL, margin=ORIGIN_TOL - residual)
        )
    return report


def _require_valid(validation: Dict[str, ValidationReport]) -> None:
    for path, item in validation.items():
        if not item.passed:
            raise ConfigError(path, "; ".join(item.failures))


def _curve_s_max(config: Config, intervals: Optional[SmallGainIntervals]) -> float:
    if config.output.curve_s_max is not None:
        return config.output.curve_s_max
    finite = [
        value
        for item in (intervals.intervals if intervals else [])
        for value in (item.lower, item.upper)
        if math.isfinite(value)
    ]
    return 1.5 * max(finite) if finite and max(finite) > 0 else DEFAULT_CURVE_S_MAX


def _status(reports) -> SectionStatus:
    return SectionStatus.OK if all(r.passed for r in reports) else SectionStatus.VIOLATIONS


def run(command: str, config: Config, debug: bool = False) -> RunResult:
    """
    Run one command.

    Args:
        command: One of COMMANDS
        config: A loaded config
        debug: Log the long-running steps at INFO

    Returns:
        RunResult: The report (every section present or marked skipped), the
        exit code (0 all checks passed, 2 violations found) and the CSV data

    Raises:
        ValueError: Unknown command
        ConfigError: A gain fails validation (every command except validate and curves)
        AlmostIssError: Any other operational failure
    """
    if command not in COMMANDS:
        raise ValueError(f"Unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    spec = config.spec
    v, s = config.verify, config.sim
    report = Report(provenance=_provenance(command, config))
    result = RunResult(report=report, exit_code=EXIT_OK)
    status = {name: SectionStatus.SKIPPED for name in SECTIONS}
    logger.info("running %s", command)

    report.validation = validate_gains(config)
    status["validation"] = _status(report.validation.values())
    if command == "validate":
        box = config.sample_box()
        for storage in (spec.v1, spec.v2):
            report.checks[f"storage:{storage.name}"] = check_storage(
                storage, {name: box[name] for name in storage.variables}, v.samples, s.seed
            )
        report.checks["origin"] = check_origin(config)
        status["checks"] = _status(report.checks.values())
        return _finish(result, status)
    if command != "curves":
        _require_valid(report.validation)

    intervals = None
    if command != "curves" and command != "check-lyapunov":
        intervals = find_intervals(spec.gamma12, spec.gamma21, config.algorithm_params(), debug=debug)
        report.intervals = intervals
        status["intervals"] = SectionStatus.OK if intervals.ell else SectionStatus.VIOLATIONS

    if command in ("curves", "intervals", "report"):
        result.curves = sample_curves(
            spec.gamma12, spec.gamma21, _curve_s_max(config, intervals), config.output.curve_points, v.inversion_tol
        )
    if command == "curves":
        return _finish(result, status)

    regions = []
    if intervals is not None and intervals.ell:
        regions = build_regions(intervals, spec.gamma12, spec.gamma21, v.a_k_inner_composition)
        if command in ("regions", "check-dpi", "simulate", "report"):
            report.regions = regions
            status["regions"] = SectionStatus.OK

    checks: Dict[str, CheckReport] = {}
    if command in ("check-sgc", "report") and intervals is not None:
        for item in intervals.intervals:
            part = check_sgc_on_interval(spec.gamma12, spec.gamma21, (item.lower, item.upper), v.sgc_samples)
            checks[part.name] = part

    if command in ("check-lyapunov", "report"):
        box = config.sample_box()
        for i, (v_i, v_j, f_i, gains, alpha, inputs) in enumerate(
            (
                (spec.v1, spec.v2, spec.f1, (spec.gamma12, spec.gamma1), spec.alpha1, spec.inputs1),
                (spec.v2, spec.v1, spec.f2, (spec.gamma21, spec.gamma2), spec.alpha2, spec.inputs2),
            ),
            start=1,
        ):
            checks[f"iss_lyapunov:{i}"] = check_iss_lyapunov(
                v_i, f_i, gains, alpha, box, v.samples, v.fd_step,
                v_j=v_j, input_names=inputs, fd_slack=v.fd_slack, seed=s.seed + i,
                max_workers=v.max_workers, name=f"iss_lyapunov:{i}",
            )

    if command in ("check-dpi", "report"):
        for block in spec.dpi_blocks:
            dpi = check_dpi(
                block, spec.f, v.grid, v.fd_step, v.dpi_u_values,
                v1=spec.v1, v2=spec.v2, input_names=spec.input_names,
                fd_slack=v.fd_slack, max_workers=v.max_workers,
            )
            checks[dpi.name] = dpi
            positive = check_q_positive(block, spec.state_names, v.grid)
            checks[positive.name] = positive
            if block.k <= len(regions) + 1:
                cover = check_dpi_cover(block, regions, spec.v1, spec.v2, v.cover_samples, s.seed)
                checks[cover.name] = cover
            else:
                logger.warning("dpi block k=%d has no gap set (ell=%d)", block.k, len(regions))

    if command in ("simulate", "report"):
        if intervals is not None:
            for k in range(1, intervals.ell + 1):
                part = check_theorem1(
                    spec, intervals, k, s.theorem1_samples, s.u_levels, s.t_end, s.h,
                    ic_box=config.ic_box(), seed=s.seed, tail_fraction=s.tail_fraction,
                    convergence_tol=s.convergence_tol, input_bound=s.theorem1_input_bound,
                    inner_composition=v.a_k_inner_composition, input_kind=s.input_kind,
                    input_options=s.input_options(), min_fraction=s.theorem1_min_fraction,
                    blowup=s.blowup_threshold, max_workers=s.max_workers,
                )
                checks[part.name] = part
        report.aiss = monte_carlo_aiss(
            spec, s.n_runs, config.ic_box(), s.u_levels, s.t_end, s.h, s.seed,
            tail_fraction=s.tail_fraction, convergence_tol=s.convergence_tol,
            blowup=s.blowup_threshold, input_kind=s.input_kind, input_options=s.input_options(),
            required_fraction=s.aiss_min_fraction, max_workers=s.max_workers, debug=debug,
        )
        status["aiss"] = SectionStatus.OK if report.aiss.passed else SectionStatus.VIOLATIONS
        result.trajectories = representative_trajectories(config)

    report.checks = checks
    if checks:
        status["checks"] = _status(checks.values())
    return _finish(result, status)


def representative_trajectories(config: Config) -> Dict[float, Trajectory]:
    """Run 0 of the ensemble at every input level."""
    spec, s = config.spec, config.sim
    x0 = initial_conditions(spec, config.ic_box(), s.seed, 1)[0]
    out = {}
    for index, level in enumerate(sorted(s.u_levels)):
        signal = make_input(s.input_kind, spec.m, level, seed=s.seed + index, **s.input_options())
        out[level] = integrate(spec, x0, signal, s.t_end, s.h, s.blowup_threshold)
    return out


def _finish(result: RunResult, status: Dict[str, SectionStatus]) -> RunResult:
    result.report.status = status
    if any(value == SectionStatus.VIOLATIONS for value in status.values()):
        result.exit_code = EXIT_VIOLATIONS
    logger.info("finished with exit code %d", result.exit_code)
    return result


def interval_rows(intervals: SmallGainIntervals) -> List[Tuple[int, float, float, bool, bool]]:
    """Rows (k, lower, upper, lower_converged, upper_converged) for intervals.csv."""
    return [
        (k, item.lower, item.upper, item.diagnostics.lower_converged, item.diagnostics.upper_converged)
        for k, item in enumerate(intervals.intervals, start=1)
    ]
