"""
Sampled checks of the stability hypotheses.

- check_sgc_on_interval: gamma12(gamma21(s)) < s inside one interval.
- check_iss_lyapunov: V_i >= max{gamma_ij(V_j), gamma_i(|u_i|)} implies
  grad V_i . f_i <= -alpha_i(|x_i|).
- check_dpi: max_i V_i >= gamma_k(|u|) implies div(rho_k f) >= q_k.

Derivatives are central differences; every inequality is relaxed by fd_slack.
Work is split into chunks of points evaluated on a thread pool and merged back
in sampling order.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .comparison import ComparisonFn, Gain, compose, evaluate_many
from .expr import Expr, evaluate_vector
from .helper import box_grid, sample_box as sample_uniform
from .models import CheckReport, RegionSpec, Violation
from .regions import StorageFn, gap_set_mask, membership_many
from .utils import chunk_slices, chunked_map

logger = logging.getLogger(__name__)

Box = Dict[str, Tuple[float, float]]

DEFAULT_FD_STEP = 1e-5
DEFAULT_FD_SLACK = 1e-6
MAX_LISTED_VIOLATIONS = 100
CHUNK_SIZE = 2048
KINK_FACTOR = 10.0


@dataclass(frozen=True)
class DpiBlock:
    """Density rho_k and rate q_k certifying the gap set A_k minus B_{k-1}."""

    k: int
    rho: Expr
    q: Expr
    gamma_k: ComparisonFn
    domain_box: Box = field(default_factory=dict)


@dataclass
class _ChunkResult:
    start: int
    checked: np.ndarray
    skipped: int
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray


def _merge(name: str, points: np.ndarray, parts: Sequence[_ChunkResult], **notes) -> CheckReport:
    report = CheckReport(name=name, notes=dict(notes))
    for part in parts:
        report.skipped_points += part.skipped
        idx = np.nonzero(part.checked)[0]
        report.checked_points += int(idx.size)
        if idx.size:
            report.min_margin = min(report.min_margin, float(np.min(part.margin[idx])))
        bad = idx[part.margin[idx] < 0]
        report.violation_count += int(bad.size)
        for i in bad:
            if len(report.violations) >= MAX_LISTED_VIOLATIONS:
                break
            report.violations.append(
                Violation(
                    index=part.start + int(i),
                    point=points[part.start + int(i)].tolist(),
                    lhs=float(part.lhs[i]),
                    rhs=float(part.rhs[i]),
                    margin=float(part.margin[i]),
                )
            )
    logger.info(
        "%s: %d checked, %d skipped, %d violation(s), min margin %.3e",
        name, report.checked_points, report.skipped_points, report.violation_count, report.min_margin,
    )
    return report


def _step_sizes(X: np.ndarray, fd_step: float) -> np.ndarray:
    return fd_step * np.maximum(1.0, np.linalg.norm(X, axis=1))


def _one_sided(
    fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, base: np.ndarray, c: int, h: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    plus = X.copy()
    minus = X.copy()
    plus[:, c] += h
    minus[:, c] -= h
    return (fn(plus) - base) / h, (base - fn(minus)) / h


def central_gradient(
    fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, fd_step: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of a scalar batch function by central differences.

    The step is h = fd_step * max(1, |x|), and every coordinate is also
    differenced at h/2. With tol = KINK_FACTOR * h * (1 + |central|), a point
    is flagged as a kink when the central quotients at h and h/2 disagree by
    more than tol, or when the gap between the forward and backward quotients
    exceeds tol without halving at h/2. The gap of a smooth function is
    about h * V'' and halves with the step.

    Returns:
        Tuple[np.ndarray, np.ndarray]: gradients (N, d) and the kink mask (N,)
    """
    n, d = X.shape
    h = _step_sizes(X, fd_step)
    base = fn(X)
    grad = np.empty((n, d))
    kink = np.zeros(n, dtype=bool)
    for c in range(d):
        forward, backward = _one_sided(fn, X, base, c, h)
        half_forward, half_backward = _one_sided(fn, X, base, c, 0.5 * h)
        grad[:, c] = 0.5 * (forward + backward)
        tol = KINK_FACTOR * h * (1.0 + np.abs(grad[:, c]))
        gap = np.abs(forward - backward)
        half_gap = np.abs(half_forward - half_backward)
        kink |= np.abs(grad[:, c] - 0.5 * (half_forward + half_backward)) > tol
        kink |= (gap > tol) & (half_gap > 0.75 * gap)
    return grad, kink


def central_divergence(
    field_fn: Callable[[np.ndarray], np.ndarray], X: np.ndarray, fd_step: float
) -> np.ndarray:
    """sum_j d(F_j)/dx_j of a batch vector field by central differences."""
    n, d = X.shape
    h = _step_sizes(X, fd_step)
    div = np.zeros(n)
    for j in range(d):
        plus = X.copy()
        minus = X.copy()
        plus[:, j] += h
        minus[:, j] -= h
        div += (field_fn(plus)[:, j] - field_fn(minus)[:, j]) / (2.0 * h)
    return div


def check_sgc_on_interval(
    gamma12: Gain,
    gamma21: Gain,
    interval: Tuple[float, float],
    samples: int = 100,
    upper_probe: Optional[float] = None,
) -> CheckReport:
    """
    Sample the small-gain margin s - gamma12(gamma21(s)) strictly inside an interval.

    Infinite intervals are clipped at ``upper_probe`` (default max(10, 10*lower)).

    Examples:
        >>> check_sgc_on_interval(from_text("s^2"), from_text("s"), (0.0, 1.0), samples=99).min_margin > 0
        True
    """
    if samples < 10:
        raise ValueError("samples must be at least 10")
    lower, upper = float(interval[0]), float(interval[1])
    clipped = math.isinf(upper)
    if clipped:
        upper = upper_probe if upper_probe is not None else max(10.0, 10.0 * lower)
    s = np.linspace(lower, upper, samples + 2)[1:-1]
    values = evaluate_many(compose(gamma12, gamma21), s)
    margin = s - values
    margin = np.where(np.isnan(margin), -math.inf, margin)
    part = _ChunkResult(0, np.ones(s.size, dtype=bool), 0, values, s, margin)
    return _merge(
        f"sgc:({lower:g}, {interval[1]:g})", s[:, None], [part],
        interval=[lower, float(interval[1])], clipped_upper=upper if clipped else None,
    )


def check_iss_lyapunov(
    v_i: StorageFn,
    f_i: Sequence[Expr],
    gains: Tuple[Gain, Gain],
    alpha_i: Gain,
    sample_box: Box,
    samples: int = 1000,
    fd_step: float = DEFAULT_FD_STEP,
    *,
    v_j: StorageFn,
    input_names: Sequence[str] = (),
    fd_slack: float = DEFAULT_FD_SLACK,
    seed: int = 0,
    max_workers: Optional[int] = None,
    name: str = "iss_lyapunov",
) -> CheckReport:
    """
    Sample the ISS-Lyapunov implication for one subsystem.

    Points (x_i, x_j, u_i) are drawn uniformly from ``sample_box``. Where the
    trigger V_i(x_i) >= max{gamma_ij(V_j(x_j)), gamma_i(|u_i|)} holds, the
    decrease grad V_i . f_i <= -alpha_i(|x_i|) + fd_slack is checked. Points
    where the trigger fails are vacuous; points where V_i has a kink are
    skipped and counted.

    Args:
        v_i: Storage function of the subsystem under test
        f_i: Its vector field, one expression per state of v_i
        gains: (gamma_ij, gamma_i)
        alpha_i: Decay rate
        sample_box: Bounds for every variable of v_i, v_j and input_names
        samples: Number of sampled points (at least 100)
        fd_step: Relative central-difference step
        v_j: Storage function of the other subsystem
        input_names: Input variables of this subsystem
        fd_slack: Absolute slack added to the right-hand side
        seed: Sampling seed

    Returns:
        CheckReport: checked_points counts triggered, differentiable points
    """
    if samples < 100:
        raise ValueError("samples must be at least 100")
    if len(f_i) != v_i.dim:
        raise ValueError(f"f_i has {len(f_i)} components but V_i has dimension {v_i.dim}")
    gamma_ij, gamma_i = gains
    names = list(v_i.variables) + list(v_j.variables) + list(input_names)
    rng = np.random.default_rng(seed)
    points = sample_uniform(sample_box, names, samples, rng)
    ni, nj = v_i.dim, v_j.dim

    def run_chunk(sl: slice) -> _ChunkResult:
        P = points[sl]
        xi, xj, u = P[:, :ni], P[:, ni:ni + nj], P[:, ni + nj:]
        w_i = v_i.evaluate_many(xi)
        w_j = v_j.evaluate_many(xj)
        u_norm = np.linalg.norm(u, axis=1) if u.shape[1] else np.zeros(P.shape[0])
        trigger = w_i >= np.maximum(evaluate_many(gamma_ij, w_j), evaluate_many(gamma_i, u_norm))

        grad, kink = central_gradient(v_i.evaluate_many, xi, fd_step)
        env = {n: P[:, c] for c, n in enumerate(names)}
        env.setdefault("t", np.zeros(P.shape[0]))
        f = evaluate_vector(list(f_i), env, P.shape[0])

        lhs = np.sum(grad * f, axis=1)
        rhs = -evaluate_many(alpha_i, np.linalg.norm(xi, axis=1))
        margin = rhs + fd_slack - lhs
        margin = np.where(np.isnan(margin), -math.inf, margin)
        checked = trigger & ~kink
        skipped = int(np.count_nonzero(trigger & kink))
        return _ChunkResult(sl.start, checked, skipped, lhs, rhs, margin)

    parts = chunked_map(run_chunk, chunk_slices(samples, CHUNK_SIZE), max_workers)
    report = _merge(name, points, parts, variables=names, fd_step=fd_step, fd_slack=fd_slack)
    report.notes["triggered_points"] = report.checked_points + report.skipped_points
    return report


def _input_vectors(u_values: Sequence[float], m: int) -> List[np.ndarray]:
    if m == 0:
        return [np.zeros(0)]
    direction = np.ones(m) / math.sqrt(m)
    return [a * direction for a in u_values]


def check_dpi(
    block: DpiBlock,
    f: Sequence[Expr],
    grid: int = 16,
    fd_step: float = DEFAULT_FD_STEP,
    u_values: Sequence[float] = (0.0,),
    *,
    v1: StorageFn,
    v2: StorageFn,
    input_names: Sequence[str] = (),
    fd_slack: float = DEFAULT_FD_SLACK,
    max_workers: Optional[int] = None,
) -> CheckReport:
    """
    Check div(rho_k f) >= q_k on a regular grid of the block's domain box.

    Every grid point is paired with each input vector a * (1, ..., 1) / sqrt(m)
    for a in ``u_values``; the pair is checked when max{V1(x1), V2(x2)} >=
    gamma_k(a).
    """
    if grid < 8:
        raise ValueError("grid must have at least 8 points per axis")
    state_names = list(v1.variables) + list(v2.variables)
    if len(f) != len(state_names):
        raise ValueError(f"f has {len(f)} components for {len(state_names)} states")
    X = box_grid(block.domain_box, state_names, grid)
    n = X.shape[0]
    m = len(input_names)
    u_vectors = _input_vectors(u_values, m)

    def rho_f(P: np.ndarray, u: np.ndarray) -> np.ndarray:
        env = {name: P[:, c] for c, name in enumerate(state_names)}
        env.update({name: np.full(P.shape[0], u[c]) for c, name in enumerate(input_names)})
        env["t"] = np.zeros(P.shape[0])
        rho = evaluate_vector([block.rho], env, P.shape[0])
        return rho * evaluate_vector(list(f), env, P.shape[0])

    def scalar(e: Expr, P: np.ndarray) -> np.ndarray:
        env = {name: P[:, c] for c, name in enumerate(state_names)}
        return evaluate_vector([e], env, P.shape[0])[:, 0]

    points = []
    parts = []
    for offset, u in enumerate(u_vectors):
        u_norm = float(np.linalg.norm(u))
        threshold = block.gamma_k(u_norm)

        def run_chunk(sl: slice, u=u, threshold=threshold, base=offset * n) -> _ChunkResult:
            P = X[sl]
            w = np.maximum(v1.evaluate_many(P[:, : v1.dim]), v2.evaluate_many(P[:, v1.dim:]))
            trigger = w >= threshold
            div = central_divergence(lambda Q: rho_f(Q, u), P, fd_step)
            q = scalar(block.q, P)
            margin = div - q + fd_slack
            margin = np.where(np.isnan(margin), -math.inf, margin)
            return _ChunkResult(base + sl.start, trigger, 0, div, q, margin)

        parts.extend(chunked_map(run_chunk, chunk_slices(n, CHUNK_SIZE), max_workers))
        points.append(np.hstack([X, np.tile(u, (n, 1))]))

    rho_values = scalar(block.rho, X)
    rho_nonpositive = int(np.count_nonzero(~(rho_values > 0)))
    q_values = scalar(block.q, X)
    report = _merge(
        f"dpi:{block.k}", np.vstack(points), parts,
        u_values=list(u_values), grid=grid,
        rho_nonpositive=rho_nonpositive,
        q_exceptions=int(np.count_nonzero(~(q_values > 0))),
    )
    return report


def check_q_positive(block: DpiBlock, state_names: Sequence[str], grid: int = 16) -> CheckReport:
    """
    Grid check that rho_k > 0 and q_k >= 0 on the domain box.

    q_k = 0 is allowed on an exception list (notes["q_exceptions"]);
    negative q_k or non-positive rho_k are violations.
    """
    X = box_grid(block.domain_box, state_names, grid)
    env = {name: X[:, c] for c, name in enumerate(state_names)}
    rho = evaluate_vector([block.rho], env, X.shape[0])[:, 0]
    q = evaluate_vector([block.q], env, X.shape[0])[:, 0]
    rho_margin = np.where(rho > 0, rho, -math.inf)
    q_margin = np.where(np.isnan(q), -math.inf, q)
    margin = np.minimum(rho_margin, q_margin)
    exceptions = (q == 0) & (rho > 0)
    report = _merge(
        f"q_positive:{block.k}", X,
        [_ChunkResult(0, np.ones(X.shape[0], dtype=bool), 0, rho, q, margin)],
    )
    report.notes["q_exceptions"] = X[exceptions][:MAX_LISTED_VIOLATIONS].tolist()
    report.notes["q_exception_count"] = int(np.count_nonzero(exceptions))
    return report


def _enlarged(box: Box, names: Sequence[str], factor: float) -> Box:
    out = {}
    for name in names:
        lo, hi = box[name]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * factor
        out[name] = (mid - half, mid + half)
    return out


def check_dpi_cover(
    block: DpiBlock,
    regions: Sequence[RegionSpec],
    v1: StorageFn,
    v2: StorageFn,
    samples: int = 10_000,
    seed: int = 0,
    enlarge: float = 2.0,
) -> CheckReport:
    """
    Sample whether the gap set A_k minus B_{k-1} lies inside the block's box.

    Points are drawn from the box enlarged by ``enlarge``; every sampled member
    of the gap set outside the box is a violation with margin equal to its
    signed distance to the box boundary. When the gap set is unbounded
    (k = ell + 1) it can only be covered up to truncation; the report notes it.
    """
    state_names = list(v1.variables) + list(v2.variables)
    rng = np.random.default_rng(seed)
    points = sample_uniform(_enlarged(block.domain_box, state_names, enlarge), state_names, samples, rng)
    members = gap_set_mask(points, block.k, regions, v1, v2)

    lo = np.array([block.domain_box[name][0] for name in state_names])
    hi = np.array([block.domain_box[name][1] for name in state_names])
    depth = np.min(np.minimum(points - lo, hi - points), axis=1)

    inside = sample_uniform(block.domain_box, state_names, samples, rng)
    if block.k >= 2:
        _, in_prev_b = membership_many(inside, regions[block.k - 2], v1, v2)
        overlap = float(np.mean(in_prev_b))
    else:
        overlap = 0.0

    report = _merge(
        f"dpi_cover:{block.k}", points,
        [_ChunkResult(0, members, 0, depth, np.zeros(samples), depth)],
        overlap_fraction=overlap,
        unbounded=block.k == len(regions) + 1,
        enlarge=enlarge,
    )
    return report
