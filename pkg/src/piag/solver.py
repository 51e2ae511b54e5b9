"""Incremental aggregated proximal gradient loop and its certified stepsizes.

One iteration aggregates possibly stale component gradients, takes a gradient
step with that aggregate, and applies the proximal operator of the nonsmooth
term:

    g_k = sum_i (cached gradient of f_i, staleness <= tau)
    y_k = x_k - alpha * g_k
    x_{k+1} = prox_{alpha * h}(y_k)

With zero delay this is exactly forward-backward splitting, and
``reference_fbs`` provides that loop as an independent implementation for
equivalence testing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .delay import DelaySchedule, GradientTable, next_refresh_set
from .model import Problem, as_vector, eval_F, grad_f, smoothness_totals
from .prox import prox, prox_residual

Array = np.ndarray

#: Objective growth beyond which a run is declared divergent.
DIVERGENCE_MARGIN = 1e12

TRACE_HEADER = "k,F,step_norm,prox_residual,max_staleness,delta_k"


class DivergenceError(RuntimeError):
    """Raised when the iteration produces non-finite quantities."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


def stepsize_threshold(L: float, l: float, tau: int) -> float:
    """Largest stepsize (exclusive) with guaranteed descent and summable
    squared steps under delay bound ``tau``.

    Equals ``1 / (Lbar + tau * (lbar + Lbar))`` with ``Lbar = L(tau+1)/2``
    and ``lbar = l(tau+1)/2``; strictly decreasing in both ``tau`` and ``L``.
    """
    if not L > 0:
        raise ValueError("aggregate Lipschitz constant L must be positive")
    if l < 0 or l > L * (1 + 1e-12):
        raise ValueError("weak-convexity total l must lie in [0, L]")
    if tau < 0:
        raise ValueError("delay parameter tau must be nonnegative")
    L_bar = L * (tau + 1) / 2.0
    l_bar = l * (tau + 1) / 2.0
    return 1.0 / (L_bar + tau * (l_bar + L_bar))


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the convergence-rate certificate.

    ``c1`` through ``c8`` form the derived chain ending in the certified
    stepsize cap ``c8``; ``step_threshold`` is the weaker descent threshold.
    ``c0`` is the user-supplied error-bound constant (distance to the
    stationary set over prox residual).
    """

    L: float
    l: float
    tau: int
    c0: float
    L_bar: float
    l_bar: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    c7: float
    c8: float
    step_threshold: float

    def contraction(self, alpha: float) -> float:
        """Certified geometric factor ``1 / (1 + (L * alpha / c0)^2)``."""
        if not alpha > 0:
            raise ValueError("stepsize must be positive")
        return 1.0 / (1.0 + (self.L * alpha / self.c0) ** 2)


def rate_constants(L: float, l: float, tau: int, c0: float) -> TheoryConstants:
    """Evaluate the rate-certificate constants chain for given problem data.

    The cap ``c8 = min(step_threshold, 1/(2 c5 + 2 c7), 1/L)`` never exceeds
    ``1/L`` or the descent threshold.
    """
    if not c0 > 0:
        raise ValueError("error-bound constant c0 must be positive")
    threshold = stepsize_threshold(L, l, tau)  # validates L, l, tau
    L_bar = L * (tau + 1) / 2.0
    l_bar = l * (tau + 1) / 2.0
    c0sq = c0 * c0
    c1 = L * (tau + 1) / 2.0
    c2 = (l + L) * (tau + 1) / 2.0
    c3 = (c0sq * (2 * l * (tau + 1) + L) + L * tau) / (2 * L * L)
    c4 = ((l + L) * (1 + tau) + 2 * tau * (l + L + l * tau) * c0sq) / (2 * L * L)
    c5 = l + L + l * tau + L * tau / 2.0 + L * tau / (2.0 * c0sq)
    c6 = ((tau + 1) * (l + L) / c0sq + 2 * l * tau**2 + 3 * l * tau + l + 3 * L * tau + L) / 2.0
    c7 = c6 * (1.0 + tau * (1.0 + 1.0 / c0sq) ** tau)
    c8 = min(threshold, 1.0 / (2 * c5 + 2 * c7), 1.0 / L)
    return TheoryConstants(
        L=L, l=l, tau=tau, c0=c0, L_bar=L_bar, l_bar=l_bar,
        c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, c8=c8,
        step_threshold=threshold,
    )


@dataclass
class SolverConfig:
    """Run parameters for :func:`solve`.

    ``alpha`` may be a float or one of the strings ``"auto_lemma2"``
    (0.9 times the descent threshold) and ``"auto_c8"`` (the certified cap,
    requires ``c0``).  With ``enforce_theory`` the stepsize is tightened to
    the certified cap when it exceeds it.
    """

    alpha: float | str
    schedule: DelaySchedule
    x0: Array
    max_iters: int = 10000
    prox_residual_tol: float = 1e-8
    trace_every: int = 10
    check_every: int = 10
    enforce_theory: bool = False
    c0: float | None = None
    keep_iterates: bool = False
    # Smallness threshold under which the error bound is assumed to hold.
    # Recorded for bookkeeping only; it has no computational role.
    error_bound_epsilon: float | None = None


@dataclass
class TraceRecord:
    """One trace checkpoint: state at iteration ``k`` and the step taken."""

    k: int
    objective: float
    step_norm: float
    prox_residual: float
    max_staleness: int
    delta: float


@dataclass
class Trace:
    """Solver output consumed by the diagnostics and the CLI."""

    records: list[TraceRecord]
    final_x: Array
    termination: str  # converged | max_iters | diverged
    iterations: int
    alpha: float
    warnings: list[str] = field(default_factory=list)
    iterates: Array | None = None          # (iterations + 1, d) when kept
    objective_values: Array | None = None  # aligned with iterates when kept

    @property
    def final_residual(self) -> float:
        return self.records[-1].prox_residual if self.records else math.nan

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective if self.records else math.nan


def resolve_stepsize(config: SolverConfig, L: float, l: float,
                     tau: int) -> tuple[float, list[str]]:
    """Turn the configured stepsize spec into a float, collecting warnings."""
    warnings: list[str] = []
    threshold = stepsize_threshold(L, l, tau)
    spec = config.alpha
    if isinstance(spec, str):
        if spec == "auto_lemma2":
            alpha = 0.9 * threshold
        elif spec == "auto_c8":
            if config.c0 is None:
                raise ValueError("alpha 'auto_c8' requires the error-bound constant c0")
            alpha = rate_constants(L, l, tau, config.c0).c8
        else:
            raise ValueError(f"unknown stepsize spec {spec!r}")
    else:
        alpha = float(spec)
        if not alpha > 0:
            raise ValueError("stepsize must be positive")
    if config.enforce_theory:
        if config.c0 is None:
            raise ValueError("enforce_theory requires the error-bound constant c0")
        cap = rate_constants(L, l, tau, config.c0).c8
        if alpha > cap:
            warnings.append(f"stepsize {alpha:.6g} tightened to certified cap {cap:.6g}")
            alpha = cap
    if alpha >= threshold:
        warnings.append(
            f"stepsize {alpha:.6g} is not below the descent threshold {threshold:.6g}; "
            "descent and summability guarantees do not apply"
        )
    return alpha, warnings


def piag_step(problem: Problem, table: GradientTable, x_k, alpha: float,
              refresh_set) -> Array:
    """One iteration: refresh gradients, aggregate, gradient step, prox."""
    if not alpha > 0:
        raise ValueError("stepsize must be positive")
    x_k = as_vector(x_k, problem.dimension)
    g = table.refresh_and_aggregate(problem, x_k, refresh_set)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("aggregated gradient is not finite")
    y = x_k - alpha * g
    return prox(problem.nonsmooth, y, alpha)


def solve(problem: Problem, config: SolverConfig) -> Trace:
    """Run the delayed-gradient proximal loop until the prox residual falls
    below tolerance, the iteration budget is exhausted, or divergence.

    The trace keeps every ``trace_every``-th record plus the first ``tau + 1``
    and the terminal one.  The stationarity check uses a fresh full gradient
    and runs every ``check_every`` iterations.
    """
    n = problem.n_components
    schedule = config.schedule
    schedule.validate_for(n)
    tau = schedule.tau
    L, l = smoothness_totals(problem)
    alpha, warnings = resolve_stepsize(config, L, l, tau)
    x0 = as_vector(config.x0, problem.dimension)
    if not problem.nonsmooth.value(x0) < math.inf:
        raise ValueError("x0 lies outside the domain of the nonsmooth term")

    table = GradientTable(problem, x0, tau)
    x = x0.copy()
    f0 = eval_F(problem, x0)
    records: list[TraceRecord] = []
    keep = config.keep_iterates
    iterates = [x0.copy()] if keep else None
    objective_values = [f0] if keep else None
    termination = "max_iters"
    final_k = config.max_iters

    for k in range(config.max_iters):
        checked_residual = None
        if k % config.check_every == 0:
            checked_residual = prox_residual(problem, alpha, x)
            f_here = eval_F(problem, x)
            if not math.isfinite(f_here) or f_here > f0 + DIVERGENCE_MARGIN:
                termination = "diverged"
            elif checked_residual <= config.prox_residual_tol:
                termination = "converged"
            if termination != "max_iters":
                records.append(TraceRecord(k, f_here, 0.0, checked_residual,
                                           table.max_staleness(), table.delta()))
                final_k = k
                break
        refresh = next_refresh_set(schedule, k, n, table.ages)
        try:
            x_next = piag_step(problem, table, x, alpha, refresh)
        except DivergenceError:
            termination = "diverged"
            records.append(TraceRecord(k, eval_F(problem, x), 0.0,
                                       math.inf, table.max_staleness(), table.delta()))
            final_k = k
            break
        if not np.all(np.isfinite(x_next)):
            termination = "diverged"
            records.append(TraceRecord(k, eval_F(problem, x), 0.0,
                                       math.inf, table.max_staleness(), table.delta()))
            final_k = k
            break
        step = x_next - x
        if k <= tau or k % config.trace_every == 0:
            res = checked_residual
            if res is None:
                res = prox_residual(problem, alpha, x)
            records.append(TraceRecord(k, eval_F(problem, x), float(np.linalg.norm(step)),
                                       res, table.max_staleness(), table.delta()))
        table.push_step(step)
        x = x_next
        if keep:
            iterates.append(x.copy())
            objective_values.append(eval_F(problem, x))
    else:
        final_k = config.max_iters
        records.append(TraceRecord(final_k, eval_F(problem, x), 0.0,
                                   prox_residual(problem, alpha, x),
                                   table.max_staleness(), table.delta()))

    if keep:
        iterates = np.asarray(iterates[: final_k + 1])
        objective_values = np.asarray(objective_values[: final_k + 1])
    return Trace(
        records=records,
        final_x=x,
        termination=termination,
        iterations=final_k,
        alpha=alpha,
        warnings=warnings,
        iterates=iterates if keep else None,
        objective_values=objective_values if keep else None,
    )


def reference_fbs(problem: Problem, config: SolverConfig) -> Trace:
    """Forward-backward splitting with the full gradient evaluated directly.

    Mirrors :func:`solve` record for record so the two trajectories can be
    compared bitwise when the schedule induces zero delay.
    """
    tau = config.schedule.tau
    L, l = smoothness_totals(problem)
    alpha, warnings = resolve_stepsize(config, L, l, tau)
    x0 = as_vector(config.x0, problem.dimension)
    if not problem.nonsmooth.value(x0) < math.inf:
        raise ValueError("x0 lies outside the domain of the nonsmooth term")

    x = x0.copy()
    f0 = eval_F(problem, x0)
    steps = deque(maxlen=tau)
    records: list[TraceRecord] = []
    keep = config.keep_iterates
    iterates = [x0.copy()] if keep else None
    objective_values = [f0] if keep else None
    termination = "max_iters"
    final_k = config.max_iters

    def window_sum() -> float:
        total = 0.0
        for s in steps:
            total += float(np.dot(s, s))
        return total

    for k in range(config.max_iters):
        checked_residual = None
        if k % config.check_every == 0:
            checked_residual = prox_residual(problem, alpha, x)
            f_here = eval_F(problem, x)
            if not math.isfinite(f_here) or f_here > f0 + DIVERGENCE_MARGIN:
                termination = "diverged"
            elif checked_residual <= config.prox_residual_tol:
                termination = "converged"
            if termination != "max_iters":
                records.append(TraceRecord(k, f_here, 0.0, checked_residual, 0, window_sum()))
                final_k = k
                break
        g = grad_f(problem, x)
        if not np.all(np.isfinite(g)):
            termination = "diverged"
            records.append(TraceRecord(k, eval_F(problem, x), 0.0, math.inf, 0, window_sum()))
            final_k = k
            break
        x_next = prox(problem.nonsmooth, x - alpha * g, alpha)
        if not np.all(np.isfinite(x_next)):
            termination = "diverged"
            records.append(TraceRecord(k, eval_F(problem, x), 0.0, math.inf, 0, window_sum()))
            final_k = k
            break
        step = x_next - x
        if k <= tau or k % config.trace_every == 0:
            res = checked_residual
            if res is None:
                res = prox_residual(problem, alpha, x)
            records.append(TraceRecord(k, eval_F(problem, x), float(np.linalg.norm(step)),
                                       res, 0, window_sum()))
        if tau > 0:
            steps.append(step.copy())
        x = x_next
        if keep:
            iterates.append(x.copy())
            objective_values.append(eval_F(problem, x))
    else:
        final_k = config.max_iters
        records.append(TraceRecord(final_k, eval_F(problem, x), 0.0,
                                   prox_residual(problem, alpha, x), 0, window_sum()))

    if keep:
        iterates = np.asarray(iterates[: final_k + 1])
        objective_values = np.asarray(objective_values[: final_k + 1])
    return Trace(
        records=records,
        final_x=x,
        termination=termination,
        iterations=final_k,
        alpha=alpha,
        warnings=warnings,
        iterates=iterates if keep else None,
        objective_values=objective_values if keep else None,
    )


# ---------------------------------------------------------------------------
# Trace files.  CSV, one row per checkpoint, floats printed with 17
# significant digits so values round-trip exactly.
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for r in trace.records:
            fh.write(
                f"{r.k},{_fmt(r.objective)},{_fmt(r.step_norm)},"
                f"{_fmt(r.prox_residual)},{r.max_staleness},{_fmt(r.delta)}\n"
            )


def read_trace_csv(path) -> list[TraceRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}: malformed trace row {line!r}")
            records.append(TraceRecord(
                k=int(parts[0]), objective=float(parts[1]), step_norm=float(parts[2]),
                prox_residual=float(parts[3]), max_staleness=int(parts[4]),
                delta=float(parts[5]),
            ))
    return records


def write_iterates_csv(iterates: Array, path) -> None:
    iterates = np.atleast_2d(np.asarray(iterates, dtype=float))
    d = iterates.shape[1]
    with open(path, "w") as fh:
        fh.write("k," + ",".join(f"x_{j}" for j in range(d)) + "\n")
        for k, row in enumerate(iterates):
            fh.write(str(k) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_iterates_csv(path) -> Array:
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("k,"):
            raise ValueError(f"{path}: unexpected iterate-log header")
        for line in fh:
            parts = line.strip().split(",")
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise ValueError(f"{path}: iterate log is empty")
    return np.asarray(rows)
