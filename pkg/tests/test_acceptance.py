"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime.  Criteria cover zero-delay equivalence with
the reference loop, the descent and summability inequalities across schedule
kinds and delays, convergence to enumerable stationary sets, R-linear decay
of objective values and iterates, the two scalar-recursion oracles, residual
scaling monotonicity, self-consistency of the derived constants, and
finite-difference gradient checks.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from piag import (DelaySchedule, SolverConfig, characteristic_root,
                  check_delayed_recursion_rate, check_perturbed_contraction,
                  check_prox_scaling_monotonicity, check_step_recursion_coefficient,
                  check_sufficient_descent, check_summability, dist_to_stationary,
                  fit_rlinear_rate, rate_constants, reference_fbs,
                  reference_solution, smoothness_totals, solve,
                  stepsize_threshold)
from piag.problems import make_quadratic_box, make_quadratic_l1

from helpers import (central_diff_grad, gen_delayed_recursion_sequence,
                     gen_perturbed_contraction_instance)


@contextmanager
def criterion(num, name, budget_seconds=None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"acceptance {num:02d} {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    print(f"acceptance {num:02d} {name}: PASS ({elapsed:.1f}s)")
    if budget_seconds is not None:
        assert elapsed < budget_seconds, f"runtime budget exceeded: {elapsed:.1f}s"


def _schedule_for(kind, tau, n, seed):
    if kind == "none":
        return DelaySchedule("none", tau=0)
    if kind == "cyclic":
        return DelaySchedule("cyclic", tau=tau, block=math.ceil(n / (tau + 1)))
    if kind == "uniform_random":
        return DelaySchedule("uniform_random", tau=tau, seed=seed)
    return DelaySchedule("adversarial_max", tau=tau)


def _run(problem, schedule, max_iters, tol=0.0, alpha=None):
    L, l = smoothness_totals(problem)
    if alpha is None:
        alpha = 0.9 * stepsize_threshold(L, l, schedule.tau)
    cfg = SolverConfig(alpha=alpha, schedule=schedule, x0=np.zeros(problem.dimension),
                       max_iters=max_iters, prox_residual_tol=tol, keep_iterates=True)
    return solve(problem, cfg), cfg


def test_criterion_01_zero_delay_equivalence():
    with criterion(1, "zero-delay bitwise equivalence", budget_seconds=10.0):
        rng = np.random.default_rng(1001)
        for _ in range(20):
            d = int(rng.integers(2, 51))
            n = int(rng.integers(1, 21))
            problem = make_quadratic_l1(n, d, seed=int(rng.integers(0, 2**31)),
                                        lam=float(rng.uniform(0.05, 0.6)))
            cfg = SolverConfig(alpha="auto_lemma2", schedule=DelaySchedule("none", tau=0),
                               x0=np.zeros(d), max_iters=1000, prox_residual_tol=0.0,
                               keep_iterates=True)
            mine = solve(problem, cfg)
            ref = reference_fbs(problem, cfg)
            assert np.array_equal(mine.iterates, ref.iterates)
            assert mine.records == ref.records


@pytest.fixture(scope="module")
def hundred_runs():
    """100 seeded runs covering every schedule kind and tau in {0,1,3,5,10}."""
    kinds = ("none", "cyclic", "uniform_random", "adversarial_max")
    taus = (0, 1, 3, 5, 10)
    runs = []
    rng = np.random.default_rng(2002)
    for i in range(100):
        kind = kinds[i % len(kinds)]
        tau = 0 if kind == "none" else taus[i % len(taus)]
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 11))
        seed = int(rng.integers(0, 2**31))
        if i % 2 == 0:
            problem = make_quadratic_box(n, d, seed=seed, negative_curvature=0.6)
        else:
            problem = make_quadratic_l1(n, d, seed=seed, lam=0.3)
        schedule = _schedule_for(kind, tau, n, seed)
        trace, cfg = _run(problem, schedule, max_iters=300)
        L, l = smoothness_totals(problem)
        constants = rate_constants(L, l, schedule.tau, 1.0)
        runs.append((problem, trace, constants, cfg.alpha))
    return runs


def test_criterion_02_sufficient_descent(hundred_runs):
    with criterion(2, "sufficient descent inequality", budget_seconds=60.0):
        for problem, trace, constants, alpha in hundred_runs:
            report = check_sufficient_descent(trace, constants, alpha, tol=1e-9)
            assert report.violations == 0, f"descent violated at k={report.first_violation_k}"


def test_criterion_03_summability_prefix_bound(hundred_runs):
    with criterion(3, "summability prefix bound"):
        for problem, trace, constants, alpha in hundred_runs:
            f_lower = problem.f_lower_bound_hint
            if f_lower is None:
                f_lower = float(np.min(trace.objective_values)) - 1.0
            report = check_summability(trace, alpha, constants, f_lower, tol=1e-9)
            assert report.violations == 0, f"prefix bound violated at K={report.first_violation_k}"


def test_criterion_04_stationarity_on_enumerable_sets():
    with criterion(4, "distance to stationary set vanishes"):
        for seed, d in ((41, 1), (42, 2), (43, 2)):
            problem = make_quadratic_box(3, d, seed=seed, negative_curvature=0.5)
            ref = reference_solution(problem)
            for tau in (0, 3, 10):
                schedule = _schedule_for("adversarial_max" if tau else "none",
                                         tau, 3, seed)
                trace, _ = _run(problem, schedule, max_iters=100000, tol=1e-11)
                assert trace.termination == "converged"
                assert trace.final_residual <= 1e-8
                assert dist_to_stationary(trace.final_x, ref) <= 1e-6


def _positive_prefix(values, floor):
    values = np.asarray(values, dtype=float)
    keep = values > floor
    cut = len(values)
    for i, ok in enumerate(keep):
        if not ok:
            cut = i
            break
    return values[:cut]


def test_criterion_05_objective_rlinear_rate():
    with criterion(5, "objective values decay R-linearly"):
        for seed in (51, 52):
            problem = make_quadratic_l1(4, 12, seed=seed, lam=0.25)
            f_star = reference_solution(problem).objective_values[0]
            for tau in (0, 2, 5):
                schedule = _schedule_for("cyclic" if tau else "none", tau, 4, seed)
                trace, _ = _run(problem, schedule, max_iters=8000, tol=1e-13)
                gaps = _positive_prefix(trace.objective_values - f_star,
                                        1e-13 * (1.0 + abs(f_star)))
                fit = fit_rlinear_rate(gaps + f_star, limit=f_star, skip=5 * (tau + 1))
                assert fit.rate < 1.0
                assert fit.log_linear_r2 >= 0.95


def test_criterion_06_iterate_rlinear_rate():
    with criterion(6, "iterates converge R-linearly"):
        for seed in (51, 52):
            problem = make_quadratic_l1(4, 12, seed=seed, lam=0.25)
            for tau in (0, 2, 5):
                schedule = _schedule_for("cyclic" if tau else "none", tau, 4, seed)
                trace, _ = _run(problem, schedule, max_iters=8000, tol=1e-13)
                gaps = np.linalg.norm(trace.iterates - trace.final_x, axis=1)
                floor = 1e-9 * (1.0 + float(np.linalg.norm(trace.final_x)))
                usable = _positive_prefix(gaps, floor)
                fit = fit_rlinear_rate(usable, limit=0.0, skip=5 * (tau + 1))
                assert fit.rate < 1.0
                assert fit.log_linear_r2 >= 0.9


def test_criterion_07_perturbed_contraction_oracle():
    with criterion(7, "contraction-with-memory oracle", budget_seconds=30.0):
        rng = np.random.default_rng(7007)
        for trial in range(10_000):
            a, b, c, window, v, w = gen_perturbed_contraction_instance(
                rng, length=50, force_boundary=(trial % 5 == 0))
            cond, bound = check_perturbed_contraction(a, b, c, window, v, w,
                                                      slack=1e-12)
            assert cond
            assert bound, "decay envelope violated on an admissible instance"


def test_criterion_08_delayed_recursion_oracle():
    with criterion(8, "delayed recursion rate oracle"):
        rng = np.random.default_rng(8008)
        for _ in range(1000):
            b0, q, c, tau, seq = gen_delayed_recursion_sequence(rng, length=300)
            assert check_delayed_recursion_rate(b0, q, c, tau, seq, rate_slack=1e-3)
        for tau in range(1, 21):
            for c in np.linspace(0.05, 0.95, 7):
                p = characteristic_root(float(c), tau)
                assert c - 1e-10 <= p < 1.0
                geom = sum(p**j for j in range(tau))
                assert abs(p**tau - (c / tau) * geom) <= 1e-10


def test_criterion_09_residual_scaling_monotonicity():
    with criterion(9, "prox residual scaling monotonicity"):
        rng = np.random.default_rng(9009)
        for trial in range(100):
            n = int(rng.integers(1, 5))
            d = int(rng.integers(1, 7))
            seed = int(rng.integers(0, 2**31))
            if trial % 2 == 0:
                problem = make_quadratic_box(n, d, seed=seed, negative_curvature=0.7)
            else:
                problem = make_quadratic_l1(n, d, seed=seed, lam=0.5)
            x = rng.standard_normal(d) * rng.uniform(0.2, 3.0)
            grid = np.sort(rng.uniform(1e-3, 10.0, size=10))
            assert check_prox_scaling_monotonicity(problem, x, grid)


def test_criterion_10_constants_self_consistency():
    with criterion(10, "derived constants self-consistency"):
        rng = np.random.default_rng(1010)
        for _ in range(1000):
            L = float(rng.uniform(0.05, 100.0))
            l = float(rng.uniform(0.0, 1.0)) * L
            tau = int(rng.integers(0, 11))
            c0 = float(rng.uniform(0.01, 100.0))
            tc = rate_constants(L, l, tau, c0)
            assert tc.c8 <= min(1.0 / L, tc.step_threshold) * (1 + 1e-15)
            if tau >= 1:
                assert check_step_recursion_coefficient(tc, tc.c8)


def test_criterion_11_gradient_correctness():
    with criterion(11, "finite-difference gradient checks"):
        rng = np.random.default_rng(1111)
        problems = [make_quadratic_box(3, 4, seed=111, negative_curvature=0.5),
                    make_quadratic_l1(3, 5, seed=112, lam=0.2)]
        for problem in problems:
            for comp in problem.components:
                for _ in range(100):
                    x = rng.standard_normal(problem.dimension) * rng.uniform(0.1, 2.0)
                    fd = central_diff_grad(comp.value, x)
                    g = comp.grad(x)
                    err = np.linalg.norm(fd - g) / max(1.0, float(np.linalg.norm(g)))
                    assert err <= 1e-6
