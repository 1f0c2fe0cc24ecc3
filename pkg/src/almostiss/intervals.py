"""
Search for the intervals on which the small-gain condition holds.

With gamma = gamma12 o gamma21, the search walks s upward in steps of delta and
classifies each probe point s* = s + delta:

- gamma(s*) = s*: step past it;
- gamma(s*) < s*: the backward limit of gamma^n(s*) and the forward limit of
  (gamma^-1)^n(s*) bracket one interval; continue from its upper end;
- gamma(s*) > s*: jump to the limit of gamma^n(s*).

The walk stops when an upper endpoint is infinite, when iterates above the
last fixed point diverge, or after max_outer_iters probes.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from .comparison import Gain, compose, evaluate_many, inverse_fn, invert
from .models import (
    IntervalDiagnostics,
    PointClass,
    SmallGainInterval,
    SmallGainIntervals,
    Termination,
    Unreachable,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlgorithmParams:
    """Tuning knobs of the interval search."""

    delta: float = 1e-2
    eps_fix: float = 1e-9
    eps_conv: float = 1e-10
    s_divergence: float = 1e9
    max_inner_iters: int = 10_000
    max_outer_iters: int = 1_000

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")
        if self.eps_fix < self.eps_conv:
            raise ValueError("eps_fix must be at least eps_conv")


@dataclass(frozen=True)
class FixedPointLimit:
    """Limit of an iteration s_{n+1} = g(s_n); value is inf when the iterates diverge."""

    value: float
    iterations: int
    converged: bool
    monotone: bool = True

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def classify_point(gamma: Gain, s: float, eps_fix: float) -> PointClass:
    """
    Compare gamma(s) with s inside a relative band.

    Examples:
        >>> classify_point(from_text("s^2"), 0.5, 1e-9)
        <PointClass.BELOW: 'below'>
    """
    if s <= 0:
        raise ValueError(f"s must be positive, got {s!r}")
    band = eps_fix * max(1.0, s)
    value = gamma(s)
    if abs(value - s) <= band:
        return PointClass.FIXED
    if value < s - band:
        return PointClass.BELOW
    return PointClass.ABOVE


def fixed_point_limit(gamma: Gain, s0: float, params: AlgorithmParams) -> FixedPointLimit:
    """
    Iterate gamma from s0 until the step falls below eps_conv * max(1, s).

    Iterates above s_divergence, non-finite values and unreachable inverse
    values all mean the limit is infinite. Hitting max_inner_iters returns the
    last iterate flagged unconverged.
    """
    if s0 <= 0:
        raise ValueError(f"s0 must be positive, got {s0!r}")
    s = s0
    direction = 0
    monotone = True
    for n in range(1, params.max_inner_iters + 1):
        try:
            nxt = gamma(s)
        except Unreachable:
            return FixedPointLimit(math.inf, n, True, monotone)
        if not math.isfinite(nxt) or nxt > params.s_divergence:
            return FixedPointLimit(math.inf, n, True, monotone)

        step = nxt - s
        sign = (step > 0) - (step < 0)
        if direction == 0:
            direction = sign
        elif sign and sign != direction:
            monotone = False

        if abs(step) <= params.eps_conv * max(1.0, s):
            return FixedPointLimit(nxt, n, True, monotone)
        s = nxt

    logger.warning(
        "fixed-point iteration from %r stalled after %d steps at %r",
        s0, params.max_inner_iters, s,
    )
    return FixedPointLimit(s, params.max_inner_iters, False, monotone)


def check_gap_restriction(
    gamma12: Gain, gamma21: Gain, interval: Tuple[float, float]
) -> Tuple[bool, float]:
    """
    The older sufficient condition gamma12^-1(lower) < gamma21(upper).

    Intervals bounded by fixed points satisfy it automatically; the result is
    informational only.

    Returns:
        Tuple[bool, float]: (holds, gamma21(upper) - gamma12^-1(lower))
    """
    lower, upper = interval
    if math.isinf(upper):
        return True, math.inf
    try:
        left = invert(gamma12, lower)
    except Unreachable:
        return False, -math.inf
    margin = gamma21(upper) - left
    return margin > 0, margin


def inverse_gain(gamma12: Gain, gamma21: Gain) -> Gain:
    """gamma^-1 = gamma21^-1 o gamma12^-1."""
    return compose(inverse_fn(gamma21), inverse_fn(gamma12))


def find_intervals(
    gamma12: Gain,
    gamma21: Gain,
    params: Optional[AlgorithmParams] = None,
    debug: bool = False,
) -> SmallGainIntervals:
    """
    Locate the intervals (lower, upper) where gamma12(gamma21(s)) < s.

    Args:
        gamma12: Gain from subsystem 2 into subsystem 1
        gamma21: Gain from subsystem 1 into subsystem 2
        params: Search parameters, defaults to AlgorithmParams()
        debug: Log every probe

    Returns:
        SmallGainIntervals: Ordered intervals, the reason the walk stopped and
        per-interval iteration diagnostics

    Examples:
        >>> result = find_intervals(from_text("s^2"), from_text("s"))
        >>> result.ell, result.terminated_by
        (1, <Termination.DIVERGENT_ABOVE: 'divergent_above'>)
    """
    params = params or AlgorithmParams()
    gamma = compose(gamma12, gamma21)
    gamma_inv = inverse_gain(gamma12, gamma21)
    log = logger.info if debug else logger.debug

    intervals: List[SmallGainInterval] = []
    terminated_by = Termination.OUTER_CAP
    s = 0.0
    outer = 0
    logger.info("interval search started (delta=%g)", params.delta)

    while True:
        if outer >= params.max_outer_iters:
            terminated_by = Termination.OUTER_CAP
            break
        outer += 1
        s_star = s + params.delta
        point = classify_point(gamma, s_star, params.eps_fix)
        log("step %d: s*=%r is %s", outer, s_star, point)

        if point == PointClass.FIXED:
            s = s_star
            continue

        if point == PointClass.BELOW:
            low = fixed_point_limit(gamma, s_star, params)
            high = fixed_point_limit(gamma_inv, s_star, params)
            holds, margin = check_gap_restriction(gamma12, gamma21, (low.value, high.value))
            intervals.append(
                SmallGainInterval(
                    lower=low.value,
                    upper=high.value,
                    diagnostics=IntervalDiagnostics(
                        outer_step=outer,
                        lower_iterations=low.iterations,
                        upper_iterations=high.iterations,
                        lower_converged=low.converged,
                        upper_converged=high.converged,
                        lower_monotone=low.monotone,
                        upper_monotone=high.monotone,
                    ),
                    restriction_12_holds=holds,
                    restriction_12_margin=margin,
                )
            )
            log("interval %d: (%r, %r)", len(intervals), low.value, high.value)
            if high.is_infinite:
                terminated_by = Termination.UPPER_INFINITE
                break
            s = high.value
            continue

        limit = fixed_point_limit(gamma, s_star, params)
        if limit.is_infinite:
            terminated_by = Termination.DIVERGENT_ABOVE
            break
        s = limit.value

    logger.info(
        "interval search finished: %d interval(s), %s after %d step(s)",
        len(intervals), terminated_by, outer,
    )
    return SmallGainIntervals(
        intervals=intervals,
        ell=len(intervals),
        terminated_by=terminated_by,
        outer_steps=outer,
        params=asdict(params),
    )


def brute_force_intervals(gamma: Gain, s_max: float, n: int) -> List[Tuple[float, float]]:
    """
    Dense scan of sign(gamma(s) - s) over n uniform points of (0, s_max].

    Each maximal run of negative values becomes one interval whose ends are the
    neighbouring grid points (0 before the first point, s_max after the last).
    Used as an oracle for find_intervals.
    """
    if n < 1:
        raise ValueError("n must be positive")
    grid = np.linspace(0.0, s_max, n + 1)[1:]
    negative = (evaluate_many(gamma, grid) - grid) < 0

    padded = np.concatenate([[False], negative, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.nonzero(edges == 1)[0]
    stops = np.nonzero(edges == -1)[0]

    result = []
    for start, stop in zip(starts, stops):
        lower = 0.0 if start == 0 else float(grid[start - 1])
        upper = float(s_max) if stop >= n else float(grid[stop])
        result.append((lower, upper))
    return result
