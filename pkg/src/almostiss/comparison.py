"""
Class-K and K-infinity comparison functions.

A comparison function is an expression over ``s``. This module evaluates,
composes and numerically inverts them, validates the class claim on a sample
grid, and builds the averaged function sigma = (gamma12^-1 + gamma21) / 2 that
separates the two gain graphs.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np
from scipy.optimize import bisect

from .expr import Expr, evaluate as evaluate_expr, evaluate_array, parse, substitute, to_string
from .models import DomainError, GainClass, Unreachable, ValidationReport

logger = logging.getLogger(__name__)

GAIN_VARS = frozenset({"s"})
OVERFLOW_GUARD = 1e12
DEFAULT_INVERSION_TOL = 1e-12
DEFAULT_S_MAX = 1e14
DEFAULT_PROBE_FACTOR = 1e6
ZERO_TOL = 1e-9

# scipy's bisect stops once the bracket is below xtol + rtol*|x|
_BISECT_XTOL = np.finfo(float).tiny
_BISECT_RTOL = 4 * np.finfo(float).eps
_BISECT_MAXITER = 2200


class Gain(Protocol):
    """Anything that maps a nonnegative real to a nonnegative real."""

    def __call__(self, s: float) -> float:
        ...


@dataclass(frozen=True)
class ComparisonFn:
    """A scalar function of s >= 0 claimed to be of class K or K-infinity."""

    body: Expr
    claimed_class: GainClass = GainClass.K_INF
    s_max: float = DEFAULT_S_MAX
    name: str = ""

    def __call__(self, s: float) -> float:
        return evaluate(self, s)

    def evaluate_many(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(evaluate_array(self.body, {"s": s}), s.shape).astype(float)

    @property
    def text(self) -> str:
        return to_string(self.body)


@dataclass(frozen=True)
class InverseFn:
    """Numerical inverse of a strictly increasing comparison function."""

    g: Gain
    tol: float = DEFAULT_INVERSION_TOL

    def __call__(self, y: float) -> float:
        return invert(self.g, y, self.tol)

    def evaluate_many(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.array([self(float(value)) for value in y.ravel()]).reshape(y.shape)


@dataclass(frozen=True)
class ComposedFn:
    """s -> outer(inner(s)) for gains that are not plain expressions."""

    outer: Gain
    inner: Gain

    def __call__(self, s: float) -> float:
        return self.outer(self.inner(s))

    def evaluate_many(self, s: np.ndarray) -> np.ndarray:
        return evaluate_many(self.outer, evaluate_many(self.inner, s))


@dataclass(frozen=True)
class SigmaFn:
    """sigma(r) = (gamma12^-1(r) + gamma21(r)) / 2."""

    gamma12_inv: InverseFn
    gamma21: Gain

    def __call__(self, r: float) -> float:
        return 0.5 * (self.gamma12_inv(r) + self.gamma21(r))

    def sandwich(self, r: float) -> Tuple[float, float]:
        """Margins (sigma - gamma21, gamma12^-1 - sigma); both positive where the graphs are separated."""
        inv = self.gamma12_inv(r)
        low = self.gamma21(r)
        mid = 0.5 * (inv + low)
        return mid - low, inv - mid


def from_text(
    text: str,
    claimed_class: GainClass = GainClass.K_INF,
    s_max: float = DEFAULT_S_MAX,
    name: str = "",
) -> ComparisonFn:
    """Parse ``text`` over ``s`` into a comparison function."""
    return ComparisonFn(parse(text, GAIN_VARS), claimed_class, s_max, name)


def evaluate(g: ComparisonFn, s: float) -> float:
    """
    Evaluate a comparison function at s >= 0.

    Raises:
        ValueError: If s is negative
        DomainError: Propagated from the expression
    """
    if s < 0:
        raise ValueError(f"Comparison functions are defined on s >= 0, got {s!r}")
    return evaluate_expr(g.body, {"s": s})


def evaluate_many(g: Gain, s: np.ndarray) -> np.ndarray:
    """Evaluate any gain on an array, vectorised when the gain supports it."""
    if hasattr(g, "evaluate_many"):
        return g.evaluate_many(s)
    s = np.asarray(s, dtype=float)
    return np.array([g(float(value)) for value in s.ravel()]).reshape(s.shape)


def invert(g: Gain, y: float, tol: float = DEFAULT_INVERSION_TOL) -> float:
    """
    Solve g(x) = y for a strictly increasing g.

    The bracket starts at [0, 1] and doubles its upper end until g(hi) >= y,
    capped at OVERFLOW_GUARD; bisection then narrows it to machine precision.

    Args:
        g: Strictly increasing gain with g(0) = 0
        y: Target value, y >= 0
        tol: Residual tolerance, |g(x) - y| <= tol * max(1, y)

    Returns:
        float: x with g(x) ~= y

    Raises:
        Unreachable: If y > g(OVERFLOW_GUARD)

    Examples:
        >>> invert(from_text("s^2"), 4.0)
        2.0
    """
    if y < 0:
        raise ValueError(f"Cannot invert a comparison function at negative y={y!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if y == 0:
        return 0.0

    lo, hi = 0.0, 1.0
    while g(hi) < y:
        if hi >= OVERFLOW_GUARD:
            raise Unreachable(y, OVERFLOW_GUARD)
        lo, hi = hi, min(2.0 * hi, OVERFLOW_GUARD)

    f_lo = g(lo) - y
    if f_lo >= 0:
        return lo
    f_hi = g(hi) - y
    if f_hi == 0:
        return hi

    x = bisect(
        lambda v: g(v) - y, lo, hi,
        xtol=_BISECT_XTOL, rtol=_BISECT_RTOL, maxiter=_BISECT_MAXITER,
    )
    residual = abs(g(x) - y)
    if residual > tol * max(1.0, y):
        logger.debug("inversion residual %.3e above tolerance at y=%r", residual, y)
    return float(x)


def inverse_fn(g: Gain, tol: float = DEFAULT_INVERSION_TOL) -> InverseFn:
    """Numerical inverse of ``g`` as a callable gain."""
    return InverseFn(g, tol)


def compose(g: Gain, h: Gain) -> Gain:
    """
    Return s -> g(h(s)).

    Two expression-backed functions compose symbolically into a new
    ComparisonFn; anything else (numerical inverses) composes as a closure.
    """
    if isinstance(g, ComparisonFn) and isinstance(h, ComparisonFn):
        both_kinf = g.claimed_class == GainClass.K_INF and h.claimed_class == GainClass.K_INF
        return ComparisonFn(
            body=substitute(g.body, "s", h.body),
            claimed_class=GainClass.K_INF if both_kinf else GainClass.K,
            s_max=min(g.s_max, h.s_max),
            name=f"{g.name}({h.name})" if g.name and h.name else "",
        )
    return ComposedFn(g, h)


def validation_grid(grid_points: int, s_max: float) -> np.ndarray:
    """Geometric points over [1e-6 * min(1, s_max), s_max] merged with a linear grid over (0, min(s_max, 100)]."""
    n_geo = grid_points // 2
    n_lin = grid_points - n_geo
    geo = np.geomspace(1e-6 * min(1.0, s_max), s_max, n_geo)
    lin = np.linspace(0.0, min(s_max, 100.0), n_lin + 1)[1:]
    return np.unique(np.concatenate([geo, lin]))


def validate_kinf(
    g: ComparisonFn,
    grid_points: int = 200,
    s_max: Optional[float] = None,
    probe_factor: float = DEFAULT_PROBE_FACTOR,
    name: str = "",
) -> ValidationReport:
    """
    Sample-check the class-K / K-infinity claim of a comparison function.

    Checks g(0) ~= 0, strict increase between consecutive grid points and, for
    K-infinity claims, that g(s_max) exceeds probe_factor * g(1). Failures are
    report entries, never exceptions.
    """
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    s_max = float(s_max if s_max is not None else g.s_max)
    report = ValidationReport(
        name=name or g.name,
        claimed_class=g.claimed_class,
        grid_points=grid_points,
        s_max=s_max,
    )

    try:
        report.value_at_zero = g(0.0)
    except DomainError as e:
        report.failures.append(f"g(0) is undefined: {e}")
        report.value_at_zero = float("nan")
    else:
        if abs(report.value_at_zero) > ZERO_TOL:
            report.failures.append(f"g(0) = {report.value_at_zero!r} != 0")

    grid = validation_grid(grid_points, s_max)
    values = g.evaluate_many(grid)
    if np.isnan(values).any():
        first = float(grid[np.isnan(values)][0])
        report.failures.append(f"g is undefined at s = {first!r}")
    if (values < 0).any():
        first = float(grid[values < 0][0])
        report.failures.append(f"g is negative at s = {first!r}")

    # beyond overflow only the probe matters
    finite = np.isfinite(values)
    both = finite[:-1] & finite[1:]
    bad = np.nonzero(both & (values[1:] <= values[:-1]))[0]
    if bad.size:
        report.failures.append(f"g is not strictly increasing at {bad.size} grid pair(s)")
        report.violating_pairs = [(float(grid[i]), float(grid[i + 1])) for i in bad[:50]]

    if g.claimed_class == GainClass.K_INF:
        try:
            probe_value = g(s_max)
            threshold = probe_factor * g(1.0)
        except DomainError as e:
            report.failures.append(f"unboundedness probe failed: {e}")
        else:
            report.probe_value = probe_value
            report.probe_threshold = threshold
            if not probe_value > threshold:
                report.failures.append(
                    f"g(s_max) = {probe_value!r} does not exceed {threshold!r} (heuristic unboundedness probe)"
                )

    report.passed = not report.failures
    if not report.passed:
        logger.info("validation of %s failed: %s", report.name or g.text, "; ".join(report.failures))
    return report


def make_sigma(gamma12: Gain, gamma21: Gain, tol: float = DEFAULT_INVERSION_TOL) -> SigmaFn:
    """Build sigma = (gamma12^-1 + gamma21) / 2."""
    return SigmaFn(gamma12_inv=inverse_fn(gamma12, tol), gamma21=gamma21)


def sample_curves(
    gamma12: Gain,
    gamma21: Gain,
    s_max: float,
    n: int = 200,
    tol: float = DEFAULT_INVERSION_TOL,
) -> List[Tuple[float, float, float, float]]:
    """
    Rows (r, gamma21(r), gamma12^-1(r), sigma(r)) on a uniform grid of [0, s_max].

    This is the plot data for the two gain graphs whose crossings bound the
    small-gain intervals. Unreachable inverse values are reported as inf.
    """
    sigma = make_sigma(gamma12, gamma21, tol)
    rows = []
    for r in np.linspace(0.0, s_max, n):
        r = float(r)
        low = gamma21(r)
        try:
            inv = sigma.gamma12_inv(r)
        except Unreachable:
            inv = float("inf")
        rows.append((r, low, inv, 0.5 * (inv + low)))
    return rows
