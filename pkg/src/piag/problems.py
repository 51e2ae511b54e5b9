"""Desk-scale test problem generators with known smoothness constants and,
where feasible, an enumerable stationary set.

Two families are provided.  ``make_quadratic_box`` sums random quadratics
(possibly indefinite) over a box, so the objective is bounded by compactness
and the stationary set can be enumerated in low dimension.
``make_quadratic_l1`` keeps the component sum strongly convex and adds an l1
term, giving a unique, computable minimizer.  Both families belong to the
quadratic-plus-polyhedral class for which the proximal error bound holds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import (NonsmoothTerm, Problem, QuadraticComponent, as_vector,
                    eval_F, quadratic_component, smoothness_totals)
from .prox import prox_residual, soft_threshold

Array = np.ndarray

MAX_DIMENSION = 200
MAX_COMPONENTS = 100


class ReferenceUnavailableError(RuntimeError):
    """No reference stationary set is computable for this problem family."""


@dataclass
class ReferenceSolution:
    """Enumerated (or uniquely determined) stationary points of a problem."""

    points: list
    objective_values: list
    method: str  # analytic | kkt_enumeration | fixed_point


def _random_symmetric(rng: np.random.Generator, d: int, eig_lo: float,
                      eig_hi: float) -> Array:
    """Symmetric matrix with eigenvalues drawn uniformly from [eig_lo, eig_hi],
    planted through a random orthogonal basis."""
    lam = rng.uniform(eig_lo, eig_hi, size=d)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))  # fix the QR sign ambiguity
    A = (q * lam) @ q.T
    return 0.5 * (A + A.T)


def _sum_matrices(components) -> tuple[Array, Array, float]:
    S = np.zeros_like(components[0].matrix)
    sb = np.zeros_like(components[0].offset)
    const = 0.0
    for comp in components:
        S = S + comp.matrix
        sb = sb + comp.offset
        const += comp.constant
    return S, sb, const


def _quadratic_lower_bound(S: Array, sb: Array, const: float, radius: float) -> float:
    """Lower bound of ``0.5 x'Sx + sb'x + const`` over ``||x|| <= radius``."""
    lam_min = float(np.linalg.eigvalsh(S)[0])
    b = float(np.linalg.norm(sb))

    def phi(r: float) -> float:
        return 0.5 * lam_min * r * r - b * r + const

    candidates = [0.0, radius]
    if lam_min > 0:
        candidates.append(min(radius, b / lam_min))
    return min(phi(r) for r in candidates)


def make_quadratic_box(N: int, d: int, seed: int,
                       negative_curvature: float = 0.0) -> Problem:
    """Sum of ``N`` random quadratics over a symmetric box.

    Component eigenvalues are drawn from ``[-negative_curvature, 1]``, so
    every component is convex when ``negative_curvature`` is 0.  The box
    half-width scales with the linear terms so that interior stationary
    points stay reachable, and compactness bounds the objective below.
    """
    if not 1 <= d <= MAX_DIMENSION:
        raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
    if not 1 <= N <= MAX_COMPONENTS:
        raise ValueError(f"component count must be in [1, {MAX_COMPONENTS}]")
    if negative_curvature < 0:
        raise ValueError("negative_curvature must be nonnegative")
    rng = np.random.default_rng(seed)
    comps = []
    for _ in range(N):
        A = _random_symmetric(rng, d, -negative_curvature, 1.0)
        b = rng.standard_normal(d)
        comps.append(quadratic_component(A, b))
    S, sb, const = _sum_matrices(comps)
    lam_min = float(np.linalg.eigvalsh(S)[0])
    half_width = 10.0 * (1.0 + float(np.linalg.norm(sb)) / max(lam_min, 0.1))
    hint = _quadratic_lower_bound(S, sb, const, half_width * math.sqrt(d))
    return Problem(
        components=tuple(comps),
        nonsmooth=NonsmoothTerm.box(-half_width, half_width),
        dimension=d,
        f_lower_bound_hint=hint,
    )


def make_quadratic_l1(N: int, d: int, seed: int, lam: float) -> Problem:
    """Strongly convex component sum plus an l1 term.

    Individual components may be indefinite for ``N > 1``; draws are repeated
    until the summed matrix has smallest eigenvalue at least 0.1 (up to 100
    attempts).
    """
    if not 1 <= d <= MAX_DIMENSION:
        raise ValueError(f"dimension must be in [1, {MAX_DIMENSION}]")
    if not 1 <= N <= MAX_COMPONENTS:
        raise ValueError(f"component count must be in [1, {MAX_COMPONENTS}]")
    if lam < 0:
        raise ValueError("l1 weight must be nonnegative")
    rng = np.random.default_rng(seed)
    eig_lo = 0.15 if N == 1 else -0.2
    for _ in range(100):
        comps = []
        for _ in range(N):
            A = _random_symmetric(rng, d, eig_lo, 1.0)
            b = rng.standard_normal(d)
            comps.append(quadratic_component(A, b))
        S, sb, const = _sum_matrices(comps)
        if float(np.linalg.eigvalsh(S)[0]) >= 0.1:
            break
    else:
        raise RuntimeError("failed to draw a strongly convex component sum in 100 attempts")
    x_free = np.linalg.solve(S, -sb)
    hint = float(0.5 * x_free @ (S @ x_free) + sb @ x_free + const)
    return Problem(
        components=tuple(comps),
        nonsmooth=NonsmoothTerm.l1(lam),
        dimension=d,
        f_lower_bound_hint=hint,
    )


def _require_quadratic(problem: Problem) -> tuple[Array, Array]:
    if not all(isinstance(c, QuadraticComponent) for c in problem.components):
        raise ReferenceUnavailableError("reference solutions need quadratic components")
    S, sb, _ = _sum_matrices(problem.components)
    return S, sb


def _box_bounds(problem: Problem) -> tuple[Array, Array]:
    d = problem.dimension
    lo = np.broadcast_to(np.asarray(problem.nonsmooth.lo, float), (d,)).astype(float)
    hi = np.broadcast_to(np.asarray(problem.nonsmooth.hi, float), (d,)).astype(float)
    return lo, hi


def _kkt_box_points(S: Array, sb: Array, lo: Array, hi: Array) -> list:
    """Enumerate stationary points of a quadratic over a box via face cases.

    Each coordinate is pinned to its lower bound, its upper bound, or left
    free; the free block is solved exactly and the gradient sign conditions
    on the pinned block are checked.
    """
    d = len(sb)
    points = []
    for pattern in itertools.product((0, 1, 2), repeat=d):
        free = [j for j in range(d) if pattern[j] == 2]
        pinned = [j for j in range(d) if pattern[j] != 2]
        x = np.zeros(d)
        for j in pinned:
            x[j] = lo[j] if pattern[j] == 0 else hi[j]
        if free:
            Ff = np.ix_(free, free)
            rhs = -sb[free]
            if pinned:
                rhs = rhs - S[np.ix_(free, pinned)] @ x[pinned]
            try:
                x_free = np.linalg.solve(S[Ff], rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(x_free)):
                continue
            if np.any(x_free < lo[free] - 1e-12) or np.any(x_free > hi[free] + 1e-12):
                continue
            x[free] = x_free
        g = S @ x + sb
        ok = True
        for j in range(d):
            if pattern[j] == 2:
                ok = abs(g[j]) <= 1e-9
            elif pattern[j] == 0:
                ok = g[j] >= -1e-12  # lower face: negative gradient points outward
            else:
                ok = g[j] <= 1e-12
            if not ok:
                break
        if ok:
            points.append(np.clip(x, lo, hi))
    unique: list = []
    for p in points:
        if not any(np.linalg.norm(p - q) <= 1e-8 for q in unique):
            unique.append(p)
    return unique


def _l1_minimizer(S: Array, sb: Array, lam: float, L: float) -> Array:
    """Unique minimizer of a strongly convex quadratic plus l1 term.

    A forward-backward fixed-point iteration localizes the support, then the
    reduced linear system is solved exactly and checked against the
    first-order conditions.
    """
    d = len(sb)
    x = np.zeros(d)
    step = 1.0 / L
    for _ in range(200000):
        x_new = soft_threshold(x - step * (S @ x + sb), step * lam)
        if np.linalg.norm(x_new - x) <= 1e-15 * (1.0 + np.linalg.norm(x_new)):
            x = x_new
            break
        x = x_new
    support = np.abs(x) > 1e-10
    if np.any(support):
        signs = np.sign(x[support])
        sup = np.nonzero(support)[0]
        try:
            x_sup = np.linalg.solve(S[np.ix_(sup, sup)], -(sb[sup] + lam * signs))
        except np.linalg.LinAlgError:
            return x
        candidate = np.zeros(d)
        candidate[sup] = x_sup
        g = S @ candidate + sb
        if (np.all(np.sign(candidate[sup]) == signs)
                and np.all(np.abs(g[~support]) <= lam + 1e-9)):
            return candidate
    return x


def reference_solution(problem: Problem) -> ReferenceSolution:
    """Stationary set of a generated problem, when computable.

    Supported: strongly convex quadratic sum with no nonsmooth term
    (analytic), quadratic-over-box in dimension at most 3 (exact face
    enumeration), and strongly convex quadratic plus l1 in any dimension
    (fixed-point localization with an exact polish).  Every returned point
    is certified by a prox residual at scale ``1/L`` of at most 1e-10.
    """
    S, sb = _require_quadratic(problem)
    L, _ = smoothness_totals(problem)
    kind = problem.nonsmooth.kind
    if kind == "zero":
        if float(np.linalg.eigvalsh(S)[0]) <= 1e-8:
            raise ReferenceUnavailableError("smooth reference needs a positive definite sum")
        points = [np.linalg.solve(S, -sb)]
        method = "analytic"
    elif kind == "box":
        if problem.dimension > 3:
            raise ReferenceUnavailableError("box enumeration supports dimension <= 3")
        lo, hi = _box_bounds(problem)
        points = _kkt_box_points(S, sb, lo, hi)
        method = "kkt_enumeration"
    elif kind == "l1":
        if float(np.linalg.eigvalsh(S)[0]) <= 1e-8:
            raise ReferenceUnavailableError("l1 reference needs a positive definite sum")
        points = [_l1_minimizer(S, sb, problem.nonsmooth.lam, L)]
        method = "fixed_point"
    else:
        raise ReferenceUnavailableError(f"no reference method for nonsmooth kind {kind!r}")
    certified = [p for p in points if prox_residual(problem, 1.0 / L, p) <= 1e-10]
    if not certified:
        raise RuntimeError("reference computation produced no certified stationary point")
    return ReferenceSolution(
        points=certified,
        objective_values=[eval_F(problem, p) for p in certified],
        method=method,
    )


def dist_to_stationary(x, ref: ReferenceSolution) -> float:
    """Euclidean distance from ``x`` to the enumerated stationary set."""
    if not ref.points:
        raise ValueError("reference stationary set is empty")
    x = as_vector(x)
    return min(float(np.linalg.norm(x - p)) for p in ref.points)


def fit_error_bound_constant(problem: Problem, ref: ReferenceSolution,
                             seed: int = 0, n_samples: int = 200,
                             radius: float = 0.5) -> float:
    """Empirical error-bound constant: twice the largest observed ratio of
    distance-to-stationary-set over prox residual at scale ``1/L``, sampled
    near the reference points.  The factor two is a safety margin so the
    fitted constant stays valid slightly away from the samples.
    """
    L, _ = smoothness_totals(problem)
    scale = 1.0 / L
    rng = np.random.default_rng(seed)
    lo = hi = None
    if problem.nonsmooth.kind in ("box", "box_plus_l1"):
        lo, hi = _box_bounds(problem)
    worst = 0.0
    for i in range(n_samples):
        base = ref.points[i % len(ref.points)]
        x = base + radius * rng.uniform(0.01, 1.0) * rng.standard_normal(problem.dimension)
        if lo is not None:
            x = np.clip(x, lo, hi)
        residual = prox_residual(problem, scale, x)
        if residual <= 1e-12:
            continue
        worst = max(worst, dist_to_stationary(x, ref) / residual)
    return max(2.0 * worst, 1e-6)
