"""Minimize w' K w over the probability simplex.

Two solvers cover the two feasible regions that come up when fitting
sample weights:

* entropic mirror descent (multiplicative updates) for the standard
  simplex, weights nonnegative and summing to one;
* Frank-Wolfe with exact line search for the relaxed region where every
  weight may drop to a common lower bound, possibly negative, while still
  summing to one.

Both start from uniform weights and only ever accept steps that do not
increase the objective, so the recorded objective trace is non-increasing
and the uniform-weight objective is an upper bound on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, UnsupportedConfigurationError
from .stein import SteinGram

__all__ = [
    "QpProblem",
    "QpSolution",
    "solve_mirror_descent",
    "solve_frank_wolfe",
    "solve",
]

_MAX_BACKTRACKS = 60
# Fraction of the linearized decrease a mirror-descent step must deliver.
_ARMIJO_FRACTION = 0.25


@dataclass(frozen=True)
class QpProblem:
    """Quadratic program min w' K w subject to sum(w) = 1, w_i >= lower_bound.

    ``gram`` may be a :class:`SteinGram` or a plain square array; the matrix
    is symmetrized since only its symmetric part enters the quadratic form.
    ``lower_bound`` must satisfy n * lower_bound <= 1 so the region is
    non-empty; zero gives the probability simplex.
    """

    gram: np.ndarray
    lower_bound: float = 0.0

    def __post_init__(self):
        mat = self.gram.matrix if isinstance(self.gram, SteinGram) else self.gram
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValueError(f"gram must be a non-empty square matrix, got {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValueError("gram must be finite")
        mat = 0.5 * (mat + mat.T)
        object.__setattr__(self, "gram", mat)
        lb = float(self.lower_bound)
        if not np.isfinite(lb):
            raise ValueError("lower_bound must be finite")
        if lb * mat.shape[0] > 1.0:
            raise ValueError(
                f"lower_bound {lb} infeasible for n = {mat.shape[0]} (n * lb > 1)"
            )
        object.__setattr__(self, "lower_bound", lb)

    @property
    def n(self) -> int:
        return self.gram.shape[0]


@dataclass(frozen=True)
class QpSolution:
    """Solver output.

    ``gap`` is the linear-minimization (Frank-Wolfe) gap <w - v, grad f(w)>
    at the final iterate, an upper bound on the suboptimality f(w) - f*.
    ``objective_trace`` holds the accepted objective values, starting with
    the initial iterate.
    """

    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool
    gap: float
    objective_trace: np.ndarray = field(repr=False)


def _lmo_vertex(gradient: np.ndarray, lower_bound: float) -> tuple[int, np.ndarray]:
    """Linear minimization over the feasible region.

    Vertices are lb * ones + (1 - n * lb) e_i; the minimizer puts the free
    mass on the lowest-index coordinate with minimal gradient.
    """
    n = gradient.shape[0]
    i = int(np.argmin(gradient))
    vertex = np.full(n, lower_bound)
    vertex[i] = 1.0 - (n - 1) * lower_bound
    return i, vertex


def _fw_gap(weights: np.ndarray, gradient: np.ndarray, lower_bound: float) -> float:
    _, vertex = _lmo_vertex(gradient, lower_bound)
    return float(gradient @ (weights - vertex))


def _trivial_solution(problem: QpProblem) -> QpSolution | None:
    mat = problem.gram
    n = problem.n
    if n == 1:
        w = np.array([1.0])
        obj = float(mat[0, 0])
        return QpSolution(w, obj, 0, True, 0.0, np.array([obj]))
    if float(np.max(np.abs(mat))) == 0.0:
        w = np.full(n, 1.0 / n)
        return QpSolution(w, 0.0, 0, True, 0.0, np.array([0.0]))
    return None


def solve_mirror_descent(
    problem: QpProblem,
    max_iters: int | None = None,
    tol: float = 1e-10,
) -> QpSolution:
    """Entropic mirror descent (multiplicative weights) on the simplex.

    Steps w <- w * exp(-eta * grad) / Z with backtracking on the step size:
    eta starts at 1 / (2 max|K|), halves whenever a step fails a
    sufficient-decrease check, and doubles after each accepted step. Plain
    accept-on-any-decrease stalls by reflecting across the optimum with
    vanishing progress, so acceptance demands a fixed fraction of the
    decrease the linearization predicts. Convergence is declared when the
    relative objective decrease over one accepted step falls below ``tol``.
    Exhausting ``max_iters`` returns the best iterate with ``converged``
    False rather than raising.

    Only ``lower_bound == 0`` is supported; the multiplicative update cannot
    leave the open simplex.
    """
    if problem.lower_bound != 0.0:
        raise UnsupportedConfigurationError(
            "mirror descent handles only lower_bound = 0; use frank_wolfe"
        )
    trivial = _trivial_solution(problem)
    if trivial is not None:
        return trivial
    mat = problem.gram
    n = problem.n
    if max_iters is None:
        max_iters = max(2000, 50 * n)
    w = np.full(n, 1.0 / n)
    obj = float(w @ mat @ w)
    trace = [obj]
    eta0 = 1.0 / (2.0 * float(np.max(np.abs(mat))))
    eta = eta0
    converged = False
    iterations = 0
    grad = 2.0 * (mat @ w)
    for _ in range(max_iters):
        if not np.all(np.isfinite(grad)):
            raise SolverError("mirror descent gradient is not finite")
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            z = -eta * grad
            z -= np.max(z)
            candidate = w * np.exp(z)
            total = float(candidate.sum())
            if total <= 0.0 or not np.isfinite(total):
                eta *= 0.5
                continue
            candidate /= total
            cand_obj = float(candidate @ mat @ candidate)
            predicted = float(grad @ (w - candidate))
            if cand_obj <= obj - _ARMIJO_FRACTION * predicted:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            converged = True
            break
        iterations += 1
        decrease = obj - cand_obj
        w = candidate
        obj = cand_obj
        trace.append(obj)
        grad = 2.0 * (mat @ w)
        eta *= 2.0
        if decrease <= tol * max(abs(obj), 1e-300):
            converged = True
            break
    w = w / float(w.sum())
    gap = _fw_gap(w, grad, 0.0)
    return QpSolution(w, obj, iterations, converged, gap, np.asarray(trace))


def solve_frank_wolfe(
    problem: QpProblem,
    max_iters: int | None = None,
    tol: float | None = None,
) -> QpSolution:
    """Frank-Wolfe with closed-form exact line search and away steps.

    The descent vertex is the feasible vertex minimizing the current
    linearization (lowest index on ties) and steps use the exact quadratic
    line search clipped to the feasible range. Plain toward-vertex steps
    alone stall at 1/t when the optimum sits on a face, so when the away
    direction (reducing the largest-gradient active coordinate) is steeper
    it is taken instead; that restores linear convergence without changing
    the feasible region or the stopping rule. Convergence is declared when
    the Frank-Wolfe gap <w - v, grad f> drops to ``tol``, which defaults to
    1e-10 * n * max(diag K); the gap bounds the remaining suboptimality.
    """
    trivial = _trivial_solution(problem)
    if trivial is not None:
        return trivial
    mat = problem.gram
    n = problem.n
    lb = problem.lower_bound
    span = 1.0 - n * lb
    if span <= 0.0:
        w = np.full(n, lb)
        obj = float(w @ mat @ w)
        return QpSolution(w, obj, 0, True, 0.0, np.array([obj]))
    if max_iters is None:
        max_iters = max(2000, 50 * n)
    if tol is None:
        tol = 1e-10 * n * max(float(np.max(np.diag(mat))), 0.0)
    w = np.full(n, 1.0 / n)
    obj = float(w @ mat @ w)
    trace = [obj]
    converged = False
    iterations = 0
    gap = np.inf
    for _ in range(max_iters):
        grad = 2.0 * (mat @ w)
        if not np.all(np.isfinite(grad)):
            raise SolverError("frank-wolfe gradient is not finite")
        s_idx, vertex = _lmo_vertex(grad, lb)
        gap = float(grad @ (w - vertex))
        if gap <= tol:
            converged = True
            break
        fw_direction = vertex - w
        active = w > lb
        masked = np.where(active, grad, -np.inf)
        a_idx = int(np.argmax(masked))
        away_vertex = np.full(n, lb)
        away_vertex[a_idx] = lb + span
        away_gap = float(grad @ (away_vertex - w))
        if gap >= away_gap:
            direction = fw_direction
            step_cap = 1.0
            drop_idx = None
            directional = gap
        else:
            direction = w - away_vertex
            u_a = (w[a_idx] - lb) / span
            if u_a >= 1.0:
                direction = fw_direction
                step_cap = 1.0
                drop_idx = None
                directional = gap
            else:
                step_cap = u_a / (1.0 - u_a)
                drop_idx = a_idx
                directional = away_gap
        curvature = float(direction @ mat @ direction)
        if curvature <= 0.0:
            step = step_cap
        else:
            step = min(step_cap, directional / (2.0 * curvature))
        if step <= 0.0:
            converged = True
            break
        w = w + step * direction
        if drop_idx is not None and step == step_cap:
            w[drop_idx] = lb
        elif drop_idx is None and step == 1.0:
            w = vertex.copy()
        obj = float(w @ mat @ w)
        iterations += 1
        trace.append(obj)
    w = w / float(w.sum())
    return QpSolution(w, obj, iterations, converged, float(gap), np.asarray(trace))


def solve(
    problem: QpProblem,
    method: str = "auto",
    max_iters: int | None = None,
    tol: float | None = None,
) -> QpSolution:
    """Dispatch to a solver.

    ``auto`` picks mirror descent on the plain simplex and Frank-Wolfe as
    soon as the lower bound departs from zero.
    """
    if method == "auto":
        method = "mirror_descent" if problem.lower_bound == 0.0 else "frank_wolfe"
    if method == "mirror_descent":
        kwargs = {} if tol is None else {"tol": tol}
        return solve_mirror_descent(problem, max_iters=max_iters, **kwargs)
    if method == "frank_wolfe":
        return solve_frank_wolfe(problem, max_iters=max_iters, tol=tol)
    raise ValueError(f"unknown method {method!r}")
