"""
Simulation of the interconnection and Monte-Carlo stability estimates.

The full system is x' = f(x, u) with x = (x1, x2), f = (f1, f2). Integration
is classical fixed-step RK4 with the input sampled at the stage times. Runs
that leave the ball of radius ``blowup`` (or produce NaN) are frozen and
flagged as truncated.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .comparison import ComparisonFn
from .expr import Expr, evaluate_vector, variables
from .helper import derive_rng, sample_box
from .models import (
    AissReport,
    CheckReport,
    EmptyRegion,
    InnerComposition,
    InputKind,
    LevelSummary,
    NonConvergedRun,
    SmallGainIntervals,
    TruncatedTrajectory,
    Violation,
)
from .regions import StorageFn, build_region, distance_to_region, membership_many
from .utils import chunk_slices, chunked_map, write_csv
from .verify import DpiBlock

logger = logging.getLogger(__name__)

Box = Dict[str, Tuple[float, float]]

DEFAULT_BLOWUP = 1e8
DEFAULT_TAIL_FRACTION = 0.2
DEFAULT_CONVERGENCE_TOL = 1e-3
SETTLE_RTOL = 1e-3
RUN_CHUNK = 64
MAX_RECORDED_FAILURES = 1000


def state_names(n: int) -> List[str]:
    return [f"x{i}" for i in range(1, n + 1)]


def input_names(m: int) -> List[str]:
    return [f"u{i}" for i in range(1, m + 1)]


@dataclass(frozen=True)
class InterconnectionSpec:
    """
    Two subsystems x1' = f1(x1, x2, u1), x2' = f2(x1, x2, u2).

    States are named x1..xn (subsystem 1 owns the first n1) and inputs u1..um
    (subsystem 1 owns the first m1). Fields may also read t.
    """

    n1: int
    n2: int
    m1: int
    m2: int
    f1: Tuple[Expr, ...]
    f2: Tuple[Expr, ...]
    v1: StorageFn
    v2: StorageFn
    gamma12: ComparisonFn
    gamma21: ComparisonFn
    gamma1: ComparisonFn
    gamma2: ComparisonFn
    alpha1: ComparisonFn
    alpha2: ComparisonFn
    dpi_blocks: Tuple[DpiBlock, ...] = ()

    def __post_init__(self):
        if len(self.f1) != self.n1 or len(self.f2) != self.n2:
            raise ValueError("f1/f2 must have n1/n2 components")
        if self.v1.dim != self.n1 or self.v2.dim != self.n2:
            raise ValueError("v1/v2 dimensions must match n1/n2")
        allowed = set(self.state_names) | set(self.input_names) | {"t"}
        for e in self.f:
            unknown = variables(e) - allowed
            if unknown:
                raise ValueError(f"field reads undeclared variables {sorted(unknown)}")

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def f(self) -> Tuple[Expr, ...]:
        return tuple(self.f1) + tuple(self.f2)

    @property
    def state_names(self) -> List[str]:
        return state_names(self.n)

    @property
    def input_names(self) -> List[str]:
        return input_names(self.m)

    @property
    def inputs1(self) -> List[str]:
        return self.input_names[: self.m1]

    @property
    def inputs2(self) -> List[str]:
        return self.input_names[self.m1:]

    def field(self, X: np.ndarray, U: np.ndarray, t: float) -> np.ndarray:
        """f(x, u, t) for a batch X of shape (N, n) and inputs U of shape (N, m)."""
        size = X.shape[0]
        env = {name: X[:, i] for i, name in enumerate(self.state_names)}
        env.update({name: U[:, j] for j, name in enumerate(self.input_names)})
        env["t"] = np.full(size, t)
        return evaluate_vector(self.f, env, size)

    def origin_residual(self) -> float:
        """max |f(0, 0)| at t = 0; should vanish."""
        return float(np.max(np.abs(self.field(np.zeros((1, self.n)), np.zeros((1, self.m)), 0.0))))


@dataclass(frozen=True)
class InputSignal:
    """
    A bounded input u(t) in R^m.

    Constant and sinusoidal signals point along (1, ..., 1) / sqrt(m), so
    their sup norm is the level / amplitude. Piecewise-random signals cycle
    through a fixed table of vectors, each held for ``dwell`` time units.
    """

    kind: InputKind = InputKind.ZERO
    m: int = 0
    level: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    dwell: float = 1.0
    seed: int = 0
    table: Tuple[Tuple[float, ...], ...] = ()

    @classmethod
    def zero(cls, m: int) -> "InputSignal":
        return cls(InputKind.ZERO, m)

    @classmethod
    def constant(cls, m: int, level: float) -> "InputSignal":
        return cls(InputKind.CONSTANT, m, level=level)

    @classmethod
    def sinusoid(cls, m: int, amplitude: float, frequency: float = 1.0, phase: float = 0.0) -> "InputSignal":
        return cls(InputKind.SINUSOID, m, level=amplitude, frequency=frequency, phase=phase)

    @classmethod
    def piecewise_random(
        cls, m: int, amplitude: float, dwell: float = 1.0, seed: int = 0, segments: int = 64
    ) -> "InputSignal":
        rng = np.random.default_rng(seed)
        directions = rng.normal(size=(segments, m))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        scale = amplitude * rng.random((segments, 1))
        table = tuple(tuple(row) for row in (directions / norms * scale).tolist())
        return cls(InputKind.PIECEWISE_RANDOM, m, level=amplitude, dwell=dwell, seed=seed, table=table)

    @property
    def direction(self) -> np.ndarray:
        return np.ones(self.m) / math.sqrt(self.m) if self.m else np.zeros(0)

    @property
    def sup_norm(self) -> float:
        if self.m == 0 or self.kind == InputKind.ZERO:
            return 0.0
        if self.kind == InputKind.PIECEWISE_RANDOM:
            return float(np.max(np.linalg.norm(np.asarray(self.table), axis=1))) if self.table else 0.0
        return abs(self.level)

    def value(self, t: float) -> np.ndarray:
        if self.m == 0 or self.kind == InputKind.ZERO:
            return np.zeros(self.m)
        if self.kind == InputKind.CONSTANT:
            return self.level * self.direction
        if self.kind == InputKind.SINUSOID:
            return self.level * math.sin(2.0 * math.pi * self.frequency * t + self.phase) * self.direction
        segment = int(math.floor(t / self.dwell)) % len(self.table)
        return np.asarray(self.table[segment])


def make_input(
    kind: InputKind,
    m: int,
    level: float,
    frequency: float = 1.0,
    phase: float = 0.0,
    dwell: float = 1.0,
    seed: int = 0,
) -> InputSignal:
    """Input of a given family whose sup norm is ``level``."""
    if level == 0 or kind == InputKind.ZERO:
        return InputSignal.zero(m)
    if kind == InputKind.CONSTANT:
        return InputSignal.constant(m, level)
    if kind == InputKind.SINUSOID:
        return InputSignal.sinusoid(m, level, frequency, phase)
    signal = InputSignal.piecewise_random(m, level, dwell, seed)
    # pin the sup norm to the requested level
    table = np.asarray(signal.table)
    table[0] = level * signal.direction
    return InputSignal(kind, m, level=level, dwell=dwell, seed=seed, table=tuple(map(tuple, table.tolist())))


@dataclass
class Trajectory:
    """Sampled solution; rows of ``states`` and ``inputs`` match ``times``."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    input_used: InputSignal
    h: float
    truncated_at_blowup: bool = False


@dataclass
class BatchResult:
    """Per-run statistics of an ensemble integrated together."""

    final: np.ndarray
    tail_max: np.ndarray
    window_max: np.ndarray
    truncated: np.ndarray
    snapshots: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))
    monitor_hits: Optional[np.ndarray] = None


def _steps(t_end: float, h: float) -> Tuple[int, float]:
    if h <= 0:
        raise ValueError("h must be positive")
    if t_end < h:
        raise ValueError("t_end must be at least h")
    k = max(1, int(math.ceil(t_end / h - 1e-9)))
    return k, t_end / k


def _tail_start(k: int, tail_fraction: float) -> int:
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must be in (0, 0.5]")
    return k - max(1, int(round(tail_fraction * k)))


def _rk4_step(spec: InterconnectionSpec, X: np.ndarray, u: InputSignal, t: float, h: float) -> np.ndarray:
    n = X.shape[0]
    u0 = np.broadcast_to(u.value(t), (n, spec.m))
    um = np.broadcast_to(u.value(t + 0.5 * h), (n, spec.m))
    u1 = np.broadcast_to(u.value(t + h), (n, spec.m))
    k1 = spec.field(X, u0, t)
    k2 = spec.field(X + 0.5 * h * k1, um, t + 0.5 * h)
    k3 = spec.field(X + 0.5 * h * k2, um, t + 0.5 * h)
    k4 = spec.field(X + h * k3, u1, t + h)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    spec: InterconnectionSpec,
    x0: Sequence[float],
    u: InputSignal,
    t_end: float,
    h: float = 1e-3,
    blowup: float = DEFAULT_BLOWUP,
) -> Trajectory:
    """
    Fixed-step RK4 from x0 over [0, t_end].

    The step is adjusted to t_end / ceil(t_end / h) so the grid ends exactly
    at t_end. Integration stops with ``truncated_at_blowup`` once |x|
    exceeds ``blowup`` or a state becomes non-finite (including domain
    errors in the field).

    Examples:
        >>> traj = integrate(spec, [1.0], InputSignal.zero(0), t_end=1.0)
        >>> round(traj.states[-1, 0], 6)
        0.367879
    """
    k, step = _steps(t_end, h)
    x = np.asarray(x0, dtype=float).reshape(1, spec.n)
    states = np.empty((k + 1, spec.n))
    states[0] = x[0]
    rows = k + 1
    truncated = False
    for i in range(k):
        with np.errstate(all="ignore"):
            x = _rk4_step(spec, x, u, i * step, step)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > blowup:
            truncated = True
            rows = i + 1
            logger.debug("trajectory from %s truncated at t=%g", list(x0), (i + 1) * step)
            break
        states[i + 1] = x[0]
    times = np.arange(rows) * step
    inputs = np.array([u.value(t) for t in times]).reshape(rows, spec.m)
    return Trajectory(times, states[:rows], inputs, u, step, truncated)


def integrate_batch(
    spec: InterconnectionSpec,
    X0: np.ndarray,
    u: InputSignal,
    t_end: float,
    h: float = 1e-3,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    blowup: float = DEFAULT_BLOWUP,
    snapshots: int = 0,
    monitor: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    monitor_every: int = 10,
) -> BatchResult:
    """
    Integrate many initial conditions at once with the numerics of ``integrate``.

    Records for every run the max of |x| over the final ``tail_fraction`` of
    the grid and over the window of equal length just before it, the final
    state, and optionally ``snapshots`` evenly spaced tail states. ``monitor``
    receives the live states every ``monitor_every`` steps and returns a
    boolean mask that is OR-ed into ``monitor_hits``.
    """
    k, step = _steps(t_end, h)
    tail = _tail_start(k, tail_fraction)
    window = max(0, tail - (k - tail))
    X = np.array(X0, dtype=float).reshape(-1, spec.n)
    runs = X.shape[0]
    alive = np.ones(runs, dtype=bool)
    tail_max = np.zeros(runs)
    window_max = np.zeros(runs)
    hits = np.zeros(runs, dtype=bool) if monitor else None
    snap_idx = np.unique(np.linspace(tail, k, snapshots).round().astype(int)) if snapshots else np.zeros(0, int)
    snaps = np.zeros((snap_idx.size, runs, spec.n))

    def record(index: int, norms: np.ndarray) -> None:
        if index >= tail:
            np.maximum(tail_max, norms, out=tail_max)
        elif index >= window:
            np.maximum(window_max, norms, out=window_max)
        where = np.nonzero(snap_idx == index)[0]
        if where.size:
            snaps[where[0]] = X

    record(0, np.linalg.norm(X, axis=1))
    for i in range(k):
        with np.errstate(all="ignore"):
            nxt = _rk4_step(spec, X, u, i * step, step)
            norms = np.linalg.norm(nxt, axis=1)
        bad = ~np.all(np.isfinite(nxt), axis=1) | (norms > blowup)
        alive &= ~bad
        X = np.where(alive[:, None], nxt, X)
        record(i + 1, np.where(alive, norms, np.linalg.norm(X, axis=1)))
        if monitor is not None and (i + 1) % monitor_every == 0:
            hits |= monitor(X) & alive

    return BatchResult(
        final=X,
        tail_max=tail_max,
        window_max=window_max,
        truncated=~alive,
        snapshots=snaps,
        monitor_hits=hits,
    )


def estimate_limsup(traj: Trajectory, tail_fraction: float = DEFAULT_TAIL_FRACTION) -> float:
    """
    max |x(t)| over the final ``tail_fraction`` of the time grid.

    Raises:
        ValueError: If tail_fraction is not in (0, 0.5]
        TruncatedTrajectory: If the trajectory blew up
    """
    k = len(traj.times) - 1
    start = _tail_start(max(k, 1), tail_fraction)
    if traj.truncated_at_blowup:
        raise TruncatedTrajectory(
            f"trajectory stopped at t={traj.times[-1]:g}; no limsup estimate"
        )
    return float(np.max(np.linalg.norm(traj.states[start:], axis=1)))


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """CSV with header t,x1..xn,u1..um and one row per step."""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    header = ["t"] + state_names(n) + input_names(m)
    rows = (
        [float(t)] + traj.states[i].tolist() + traj.inputs[i].tolist()
        for i, t in enumerate(traj.times)
    )
    return write_csv(path, header, rows)


def initial_conditions(spec: InterconnectionSpec, ic_box: Box, seed: int, runs: int) -> np.ndarray:
    """x0 for run i is drawn from its own stream (seed, i)."""
    names = spec.state_names
    return np.vstack([sample_box(ic_box, names, 1, derive_rng(seed, i)) for i in range(runs)])


def _settled(batch: BatchResult, tol: float) -> np.ndarray:
    return ~batch.truncated & (batch.tail_max <= (1.0 + SETTLE_RTOL) * batch.window_max + tol)


def _run_chunks(
    spec: InterconnectionSpec,
    X0: np.ndarray,
    u: InputSignal,
    t_end: float,
    h: float,
    tail_fraction: float,
    blowup: float,
    max_workers: Optional[int],
    **kwargs,
) -> BatchResult:
    slices = chunk_slices(X0.shape[0], RUN_CHUNK)
    parts = chunked_map(
        lambda sl: integrate_batch(spec, X0[sl], u, t_end, h, tail_fraction, blowup, **kwargs),
        slices,
        max_workers,
    )
    hits = [p.monitor_hits for p in parts]
    return BatchResult(
        final=np.vstack([p.final for p in parts]),
        tail_max=np.concatenate([p.tail_max for p in parts]),
        window_max=np.concatenate([p.window_max for p in parts]),
        truncated=np.concatenate([p.truncated for p in parts]),
        snapshots=np.concatenate([p.snapshots for p in parts], axis=1),
        monitor_hits=None if hits[0] is None else np.concatenate(hits),
    )


def monte_carlo_aiss(
    spec: InterconnectionSpec,
    n_runs: int,
    ic_box: Box,
    u_levels: Sequence[float] = (0.0,),
    t_end: float = 20.0,
    h: float = 1e-3,
    seed: int = 0,
    *,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
    blowup: float = DEFAULT_BLOWUP,
    input_kind: InputKind = InputKind.CONSTANT,
    input_options: Optional[Dict[str, float]] = None,
    required_fraction: float = 1.0,
    max_workers: Optional[int] = None,
    debug: bool = False,
) -> AissReport:
    """
    Monte-Carlo estimate of the almost-ISS property.

    Every input level reuses the same n_runs initial conditions. A run settles
    when it did not blow up and its tail maximum does not exceed the maximum
    over the preceding window. At zero input it converges when it settled with
    a limsup estimate under convergence_tol; the initial conditions that do are
    the anchored ones (a zero-input batch is run first when the levels do not
    start at 0). At a nonzero level only anchored runs can converge: the radius
    is the running maximum of anchored, settled limsups over the levels so far
    (a monotone envelope, reported as empirical gain points), and a run
    converges when it is anchored, settled and under that radius.

    Raises:
        ValueError: If n_runs < 100
    """
    if n_runs < 100:
        raise ValueError("n_runs must be at least 100")
    log = logger.info if debug else logger.debug
    options = dict(input_options or {})
    X0 = initial_conditions(spec, ic_box, seed, n_runs)

    def run(signal: InputSignal) -> BatchResult:
        return _run_chunks(spec, X0, signal, t_end, h, tail_fraction, blowup, max_workers)

    levels = sorted(float(level) for level in u_levels)
    anchored = None
    if levels and levels[0] != 0.0:
        baseline = run(InputSignal.zero(spec.m))
        anchored = _settled(baseline, convergence_tol) & (baseline.tail_max <= convergence_tol)
        log("zero-input baseline: %d/%d runs converge", int(anchored.sum()), n_runs)

    summaries: List[LevelSummary] = []
    failures: List[NonConvergedRun] = []
    envelope: List[Tuple[float, float]] = []
    running_radius = 0.0
    running_gain = 0.0
    converged_total = 0

    for index, level in enumerate(levels):
        signal = make_input(input_kind, spec.m, level, seed=seed + index, **options)
        batch = run(signal)
        settled = _settled(batch, convergence_tol)
        limsup = batch.tail_max

        if signal.sup_norm == 0:
            radius = convergence_tol
            converged = settled & (limsup <= radius)
            if anchored is None:
                anchored = converged
        else:
            fit = settled & anchored
            if fit.any():
                running_radius = max(running_radius, float(limsup[fit].max()))
            radius = max(convergence_tol, running_radius)
            converged = fit & (limsup <= radius)
        converged_total += int(converged.sum())
        if converged.any():
            running_gain = max(running_gain, float(limsup[converged].max()))
        envelope.append((signal.sup_norm, running_gain))

        summaries.append(
            LevelSummary(
                level=level,
                sup_norm=signal.sup_norm,
                runs=n_runs,
                settled=int(settled.sum()),
                converged=int(converged.sum()),
                truncated=int(batch.truncated.sum()),
                max_limsup=float(limsup[settled].max()) if settled.any() else None,
                radius=radius,
            )
        )
        for i in np.nonzero(~converged)[0]:
            if len(failures) >= MAX_RECORDED_FAILURES:
                break
            if batch.truncated[i]:
                reason = "blowup"
            elif not settled[i]:
                reason = "not_settled"
            elif not anchored[i]:
                reason = "not_converged_at_zero_input"
            else:
                reason = "above_radius"
            failures.append(
                NonConvergedRun(
                    level=level,
                    run_index=int(i),
                    stream=[seed, int(i)],
                    x0=X0[i].tolist(),
                    reason=reason,
                    limsup=None if batch.truncated[i] else float(limsup[i]),
                )
            )
        log("level %g: %d/%d converged", level, int(converged.sum()), n_runs)

    total = n_runs * len(levels)
    report = AissReport(
        n_runs=total,
        runs_per_level=n_runs,
        fraction_converged=converged_total / total if total else 0.0,
        empirical_gain_points=envelope,
        levels=summaries,
        zero_input_converged=int(anchored.sum()) if anchored is not None else 0,
        nonconverged_seeds=failures,
        seed=seed,
        required_fraction=required_fraction,
    )
    logger.info("ensemble finished: %.4f of %d runs converged", report.fraction_converged, total)
    return report


def sample_region_b(
    spec: InterconnectionSpec,
    region,
    ic_box: Box,
    n_samples: int,
    seed: int,
    attempt_budget: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """
    Rejection-sample up to n_samples members of B_k from ``ic_box``.

    Returns:
        Tuple[np.ndarray, int]: (members, attempts used)

    Raises:
        EmptyRegion: If no member was found within the attempt budget
    """
    budget = attempt_budget or 100 * n_samples
    rng = derive_rng(seed, region.k)
    found: List[np.ndarray] = []
    count = 0
    attempts = 0
    while count < n_samples and attempts < budget:
        batch = min(budget - attempts, max(n_samples, 256))
        X = sample_box(ic_box, spec.state_names, batch, rng)
        attempts += batch
        _, in_b = membership_many(X, region, spec.v1, spec.v2)
        members = X[in_b]
        found.append(members)
        count += members.shape[0]
    if count == 0:
        raise EmptyRegion(region.k, attempts)
    return np.vstack(found)[:n_samples], attempts


def check_theorem1(
    spec: InterconnectionSpec,
    intervals: SmallGainIntervals,
    k: int,
    n_samples: int,
    u_levels: Sequence[float],
    t_end: float,
    h: float,
    *,
    ic_box: Box,
    seed: int = 0,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL,
    input_bound: float = 0.1,
    inner_composition: InnerComposition = InnerComposition.AS_PRINTED,
    input_kind: InputKind = InputKind.CONSTANT,
    input_options: Optional[Dict[str, float]] = None,
    min_fraction: float = 1.0,
    blowup: float = DEFAULT_BLOWUP,
    snapshots: int = 4,
    attempt_budget: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> CheckReport:
    """
    Empirical regional convergence: from B_k into a neighbourhood of A_k.

    Initial conditions are rejection-sampled in B_k. For every input level the
    Euclidean distance from the trajectory tail to A_k is estimated at a few
    tail snapshots. At zero input a run passes when it settled within
    convergence_tol of A_k; those samples are anchored (a zero-input batch is
    run first when the levels do not start at 0). At a nonzero level only
    anchored samples can pass, against the running maximum of their settled
    distances. When the last interval is bounded and k = ell,
    input levels above ``input_bound`` are dropped and runs leaving B_ell are
    counted as escapes.

    Raises:
        EmptyRegion: If no point of B_k is found in ``ic_box``
    """
    region = build_region(k, intervals, spec.gamma12, spec.gamma21, inner_composition)
    bounded_last = k == intervals.ell and math.isfinite(intervals.intervals[-1].upper)
    levels = sorted(float(level) for level in u_levels)
    dropped: List[float] = []
    if bounded_last:
        dropped = [level for level in levels if level > input_bound]
        levels = [level for level in levels if level <= input_bound]

    X0, attempts = sample_region_b(spec, region, ic_box, n_samples, seed, attempt_budget)
    options = dict(input_options or {})
    monitor = None
    if bounded_last:
        def monitor(X: np.ndarray) -> np.ndarray:
            return ~membership_many(X, region, spec.v1, spec.v2)[1]

    def run(signal: InputSignal) -> Tuple[BatchResult, np.ndarray, np.ndarray]:
        batch = _run_chunks(
            spec, X0, signal, t_end, h, tail_fraction, blowup, max_workers,
            snapshots=snapshots, monitor=monitor,
        )
        distance = np.full(X0.shape[0], math.inf)
        for i in np.nonzero(~batch.truncated)[0]:
            distance[i] = max(
                distance_to_region(batch.snapshots[s, i], region, spec.v1, spec.v2)
                for s in range(batch.snapshots.shape[0])
            )
        return batch, _settled(batch, convergence_tol), distance

    anchored = None
    if levels and levels[0] != 0.0:
        _, settled, distance = run(InputSignal.zero(spec.m))
        anchored = settled & (distance <= convergence_tol)

    report = CheckReport(name=f"theorem1:{k}", required_fraction=min_fraction)
    per_level = []
    escapes = 0
    running = 0.0
    for index, level in enumerate(levels):
        signal = make_input(input_kind, spec.m, level, seed=seed + index, **options)
        batch, settled, distance = run(signal)
        if signal.sup_norm == 0:
            radius = convergence_tol
            ok = settled & (distance <= radius)
            if anchored is None:
                anchored = ok
        else:
            fit = settled & anchored
            if fit.any():
                running = max(running, float(distance[fit].max()))
            radius = max(convergence_tol, running)
            ok = fit & (distance <= radius)
        margin = np.where(np.isfinite(distance), radius - distance, -math.inf)

        base = index * X0.shape[0]
        report.checked_points += X0.shape[0]
        report.min_margin = min(report.min_margin, float(margin.min()))
        for i in np.nonzero(~ok)[0]:
            report.violation_count += 1
            if len(report.violations) < 100:
                report.violations.append(
                    Violation(
                        index=base + int(i),
                        point=X0[i].tolist(),
                        lhs=float(distance[i]),
                        rhs=radius,
                        margin=float(margin[i]),
                    )
                )
        level_escapes = int(batch.monitor_hits.sum()) if batch.monitor_hits is not None else 0
        escapes += level_escapes
        finite = distance[np.isfinite(distance)]
        per_level.append({
            "level": level,
            "sup_norm": signal.sup_norm,
            "radius": radius,
            "max_tail_distance": float(finite.max()) if finite.size else None,
            "passed_runs": int(ok.sum()),
            "escapes": level_escapes,
        })

    report.notes.update({
        "levels": per_level,
        "samples": int(X0.shape[0]),
        "zero_input_converged": int(anchored.sum()) if anchored is not None else 0,
        "attempts": attempts,
        "dropped_levels": dropped,
        "escapes_from_B": escapes if bounded_last else None,
        "region": region.model_dump(),
    })
    if escapes:
        logger.warning("%d run(s) left B_%d; consider a smaller input bound", escapes, k)
    logger.info("theorem1 check for k=%d: %d/%d runs failed", k, report.violation_count, report.checked_points)
    return report
