"""
Storage functions, level sets and the nested regions A_k / B_k.

For an interval (lower, upper) of the small-gain search:

    A_k = L1(max{lower, gamma12(lower)}) x L2(max{gamma21(lower), inner(lower)})
    B_k = L1(upper) x L2(gamma21(upper))

where L_i(d) = {x_i : V_i(x_i) <= d} and ``inner`` is gamma21 o gamma21 (as
printed) or gamma21 o gamma12, selected by InnerComposition.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .comparison import Gain, SigmaFn
from .expr import Expr, evaluate as evaluate_expr, evaluate_array, parse, to_string
from .helper import box_grid, sample_box
from .models import (
    ABGamma,
    CheckReport,
    DimensionMismatch,
    DomainError,
    InfiniteEndpoint,
    InnerComposition,
    RegionSpec,
    SmallGainIntervals,
    Violation,
)

logger = logging.getLogger(__name__)

Box = Dict[str, Tuple[float, float]]

DEFAULT_GAMMA_TOL = 1e-9
STORAGE_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class StorageFn:
    """V_i as an expression over the subsystem's own state variables, in positional order."""

    body: Expr
    variables: Tuple[str, ...]
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def text(self) -> str:
        return to_string(self.body)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(self.dim, x.shape[-1])
        return x

    def __call__(self, x) -> float:
        x = self._check(np.atleast_1d(x))
        return evaluate_expr(self.body, dict(zip(self.variables, x.tolist())))

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorised V over a batch of shape (N, dim); NaN where undefined."""
        X = self._check(np.atleast_2d(X))
        env = {name: X[:, i] for i, name in enumerate(self.variables)}
        return np.broadcast_to(evaluate_array(self.body, env), (X.shape[0],)).astype(float)


def storage_from_text(text: str, variables: Sequence[str], name: str = "") -> StorageFn:
    """Parse a storage function over ``variables``."""
    variables = tuple(variables)
    return StorageFn(parse(text, variables), variables, name)


def level_set_contains(v: StorageFn, delta: float, x) -> bool:
    """
    x is in L(delta) = {x : V(x) <= delta}.

    Raises:
        DimensionMismatch: If x does not match v.dim
    """
    return v(x) <= delta


def build_region(
    k: int,
    intervals: SmallGainIntervals,
    gamma12: Gain,
    gamma21: Gain,
    inner_composition: InnerComposition = InnerComposition.AS_PRINTED,
    allow_infinite: bool = True,
) -> RegionSpec:
    """
    Thresholds of A_k and B_k for the k-th interval (1-based).

    An infinite upper endpoint makes B_k the whole state space; its thresholds
    are reported as inf unless ``allow_infinite`` is False.

    Raises:
        ValueError: If k is not in 1..ell
        InfiniteEndpoint: If the upper endpoint is infinite and allow_infinite is False

    Examples:
        >>> build_region(1, result, from_text("s/2"), from_text("s/3")).a_thresholds
        (1.0, 0.3333333333333333)
    """
    if not 1 <= k <= intervals.ell:
        raise ValueError(f"k must be in 1..{intervals.ell}, got {k}")
    interval = intervals.intervals[k - 1]
    lower, upper = interval.lower, interval.upper

    if inner_composition == InnerComposition.AS_PRINTED:
        inner = gamma21(gamma21(lower))
    else:
        inner = gamma21(gamma12(lower))
    a_thresholds = (max(lower, gamma12(lower)), max(gamma21(lower), inner))

    if math.isinf(upper):
        if not allow_infinite:
            raise InfiniteEndpoint(k)
        b_thresholds = (math.inf, math.inf)
    else:
        b_thresholds = (upper, gamma21(upper))

    return RegionSpec(
        k=k,
        a_thresholds=a_thresholds,
        b_thresholds=b_thresholds,
        inner_composition=inner_composition,
    )


def build_regions(
    intervals: SmallGainIntervals,
    gamma12: Gain,
    gamma21: Gain,
    inner_composition: InnerComposition = InnerComposition.AS_PRINTED,
) -> List[RegionSpec]:
    """RegionSpec for every interval, in order."""
    return [
        build_region(k, intervals, gamma12, gamma21, inner_composition)
        for k in range(1, intervals.ell + 1)
    ]


def membership_many(
    X: np.ndarray, region: RegionSpec, v1: StorageFn, v2: StorageFn
) -> Tuple[np.ndarray, np.ndarray]:
    """Boolean arrays (in A_k, in B_k) for a batch of full states."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != v1.dim + v2.dim:
        raise DimensionMismatch(v1.dim + v2.dim, X.shape[1])
    w1 = v1.evaluate_many(X[:, : v1.dim])
    w2 = v2.evaluate_many(X[:, v1.dim:])
    a1, a2 = region.a_thresholds
    in_a = (w1 <= a1) & (w2 <= a2)
    if region.b_is_whole_space:
        in_b = np.ones(X.shape[0], dtype=bool)
    else:
        b1, b2 = region.b_thresholds
        in_b = (w1 <= b1) & (w2 <= b2)
    return in_a, in_b


def region_membership(x, region: RegionSpec, v1: StorageFn, v2: StorageFn) -> Tuple[bool, bool]:
    """(x in A_k, x in B_k) for one full state."""
    in_a, in_b = membership_many(np.asarray(x, dtype=float)[None, :], region, v1, v2)
    return bool(in_a[0]), bool(in_b[0])


def gap_set_mask(
    X: np.ndarray,
    k: int,
    regions: Sequence[RegionSpec],
    v1: StorageFn,
    v2: StorageFn,
) -> np.ndarray:
    """
    Membership in A_k minus B_{k-1} for k = 1..ell+1.

    B_0 is empty and A_{ell+1} is the whole space (used when the last
    interval is bounded).
    """
    ell = len(regions)
    if not 1 <= k <= ell + 1:
        raise ValueError(f"k must be in 1..{ell + 1}, got {k}")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if k == ell + 1:
        in_a = np.ones(X.shape[0], dtype=bool)
    else:
        in_a, _ = membership_many(X, regions[k - 1], v1, v2)
    if k == 1:
        return in_a
    _, in_prev_b = membership_many(X, regions[k - 2], v1, v2)
    return in_a & ~in_prev_b


@dataclass(frozen=True)
class CompositeV:
    """V(x) = max{sigma(V1(x1)), V2(x2)}."""

    sigma: SigmaFn
    v1: StorageFn
    v2: StorageFn

    def split(self, x) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.v1.dim + self.v2.dim:
            raise DimensionMismatch(self.v1.dim + self.v2.dim, x.shape[-1])
        return x[: self.v1.dim], x[self.v1.dim:]

    def __call__(self, x) -> float:
        return composite_v(self, x)


def composite_v(cv: CompositeV, x) -> float:
    """
    Evaluate the composite storage function at a full state.

    Raises:
        DimensionMismatch: If x does not have v1.dim + v2.dim entries
    """
    x1, x2 = cv.split(x)
    return max(cv.sigma(cv.v1(x1)), cv.v2(x2))


def classify_abgamma(cv: CompositeV, x, tol: float = DEFAULT_GAMMA_TOL) -> ABGamma:
    """
    Label x as A (V2 below sigma(V1)), B (above) or Gamma (within the band).

    The band is tol * max(1, sigma(V1(x1))).
    """
    x1, x2 = cv.split(x)
    level = cv.sigma(cv.v1(x1))
    w2 = cv.v2(x2)
    band = tol * max(1.0, level)
    if w2 < level - band:
        return ABGamma.A
    if w2 > level + band:
        return ABGamma.B
    return ABGamma.GAMMA


def classify_k(
    cv: CompositeV,
    intervals: SmallGainIntervals,
    x,
    tol: float = DEFAULT_GAMMA_TOL,
) -> Tuple[Optional[ABGamma], Optional[int]]:
    """
    Refine the A/B/Gamma label by interval.

    A_k: A with gamma21(lower_k) <= V2 <= gamma21(upper_k); B_k and Gamma_k:
    B or Gamma with V1 in (lower_k, upper_k). Returns (None, None) for points
    in the gaps between intervals.
    """
    x1, x2 = cv.split(x)
    w1 = cv.v1(x1)
    w2 = cv.v2(x2)
    label = classify_abgamma(cv, x, tol)
    gamma21 = cv.sigma.gamma21
    for k, interval in enumerate(intervals.intervals, start=1):
        if label == ABGamma.A:
            upper = math.inf if math.isinf(interval.upper) else gamma21(interval.upper)
            if gamma21(interval.lower) <= w2 <= upper:
                return label, k
        elif interval.lower < w1 < interval.upper:
            return label, k
    return None, None


def check_storage(
    v: StorageFn,
    box: Box,
    samples: int = 1000,
    seed: int = 0,
    grid_per_axis: int = 5,
) -> CheckReport:
    """
    Sample check that V(0) = 0 and V(x) > 0 away from the origin.

    Points are a regular grid (when small enough) plus uniform samples of the
    box. The margin at a point is V(x) itself.
    """
    report = CheckReport(name=f"storage:{v.name}" if v.name else "storage")
    try:
        at_zero = v(np.zeros(v.dim))
    except DomainError as e:
        at_zero = math.nan
        report.notes["zero_error"] = str(e)
    report.notes["value_at_zero"] = at_zero
    if not abs(at_zero) <= STORAGE_ZERO_TOL:
        report.violations.append(
            Violation(index=-1, point=[0.0] * v.dim, lhs=at_zero, rhs=0.0, margin=-abs(at_zero))
        )
        report.violation_count += 1

    rng = np.random.default_rng(seed)
    parts = [sample_box(box, v.variables, samples, rng)]
    if grid_per_axis ** v.dim <= samples:
        parts.insert(0, box_grid(box, v.variables, grid_per_axis))
    X = np.concatenate(parts)
    X = X[np.linalg.norm(X, axis=1) > 0]

    values = v.evaluate_many(X)
    margins = np.where(np.isnan(values), -math.inf, values)
    report.checked_points = int(X.shape[0])
    if X.shape[0]:
        report.min_margin = min(report.min_margin, float(margins.min()))
    for i in np.nonzero(margins <= 0)[0]:
        report.violation_count += 1
        if len(report.violations) < 50:
            report.violations.append(
                Violation(index=int(i), point=X[i].tolist(), lhs=float(values[i]), rhs=0.0, margin=float(margins[i]))
            )
    return report


def _segment_boundary(x: np.ndarray, p: np.ndarray, inside, steps: int = 40) -> np.ndarray:
    # x outside, p inside; bisect towards the first inside point along the segment
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if inside(x + mid * (p - x)):
            hi = mid
        else:
            lo = mid
    return x + hi * (p - x)


def distance_to_region(
    x,
    region: RegionSpec,
    v1: StorageFn,
    v2: StorageFn,
    per_axis: int = 21,
    refinements: int = 2,
    max_points: int = 20_000,
) -> float:
    """
    Euclidean distance from x to A_k, estimated by sampling.

    The origin belongs to A_k, so |x| bounds the distance. Each round samples a
    cube around x whose half-width is the current bound, keeps the nearest
    member of A_k and tightens it by bisection along the segment from x.
    """
    x = np.asarray(x, dtype=float)
    dim = x.shape[0]

    def inside(p):
        return region_membership(p, region, v1, v2)[0]

    if inside(x):
        return 0.0

    nearest = np.zeros(dim)
    best = float(np.linalg.norm(x))
    n = max(3, min(per_axis, int(max_points ** (1.0 / dim))))
    for _ in range(refinements + 1):
        axes = [np.linspace(xi - best, xi + best, n) for xi in x]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        in_a, _ = membership_many(pts, region, v1, v2)
        if in_a.any():
            members = pts[in_a]
            dists = np.linalg.norm(members - x, axis=1)
            i = int(np.argmin(dists))
            if dists[i] < best:
                best, nearest = float(dists[i]), members[i]
        nearest = _segment_boundary(x, nearest, inside)
        best = float(np.linalg.norm(nearest - x))
    return best
