"""Shared oracles for the test suite.

The QP oracles here are deliberately independent of the package solvers:
``enumerate_qp_optimum`` solves the equality-constrained KKT system for every
support subset and keeps the best feasible candidate, which is exact for the
small matrices used in tests. ``grid_qp_optimum`` is a literal simplex grid
scan with local refinement; it is only practical for n <= 3 but serves to
cross-check the enumeration oracle.
"""

import itertools

import numpy as np


def enumerate_qp_optimum(mat, lower_bound=0.0):
    """Exact minimizer of w' K w over {sum w = 1, w >= lower_bound}.

    Enumerates candidate active sets: every subset S of indices is tried as
    the free support, with the complement pinned at the lower bound. The
    stationarity system on S is solved with a least-squares fallback so
    singular blocks do not abort the scan.
    """
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    best_w = None
    best_obj = np.inf
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            free = np.array(support)
            fixed = np.array([i for i in range(n) if i not in support])
            budget = 1.0 - lower_bound * fixed.size
            k_ss = mat[np.ix_(free, free)]
            rhs_lin = np.zeros(free.size)
            if fixed.size:
                rhs_lin = -2.0 * lower_bound * mat[np.ix_(free, fixed)].sum(axis=1)
            system = np.zeros((free.size + 1, free.size + 1))
            system[: free.size, : free.size] = 2.0 * k_ss
            system[: free.size, -1] = -1.0
            system[-1, : free.size] = 1.0
            rhs = np.append(rhs_lin, budget)
            sol, *_ = np.linalg.lstsq(system, rhs, rcond=None)
            w_free = sol[: free.size]
            if np.any(w_free < lower_bound - 1e-9):
                continue
            w = np.full(n, lower_bound)
            w[free] = w_free
            total = w.sum()
            if abs(total - 1.0) > 1e-8:
                continue
            w = w / total
            obj = float(w @ mat @ w)
            if obj < best_obj:
                best_obj = obj
                best_w = w
    return best_w, best_obj


def grid_qp_optimum(mat, lower_bound=0.0, resolution=1e-3):
    """Brute-force simplex grid scan followed by coordinate refinement.

    Only supports n in {2, 3}; larger grids are astronomically big at this
    resolution, which is why the enumeration oracle above exists.
    """
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    if n not in (2, 3):
        raise ValueError("grid oracle only supports n in {2, 3}")

    def objective(w):
        return float(w @ mat @ w)

    hi = 1.0 - (n - 1) * lower_bound
    grid = np.arange(lower_bound, hi + resolution / 2, resolution)
    best_w = None
    best_obj = np.inf
    if n == 2:
        for w1 in grid:
            w = np.array([w1, 1.0 - w1])
            if w[1] < lower_bound - 1e-12:
                continue
            obj = objective(w)
            if obj < best_obj:
                best_obj, best_w = obj, w
    else:
        for w1 in grid:
            for w2 in np.arange(lower_bound, 1.0 - w1 - lower_bound + resolution / 2, resolution):
                w = np.array([w1, w2, 1.0 - w1 - w2])
                if w[2] < lower_bound - 1e-12:
                    continue
                obj = objective(w)
                if obj < best_obj:
                    best_obj, best_w = obj, w

    # Local refinement: shrink a coordinate-pair pattern search until the
    # step is far below the requested resolution.
    step = resolution
    w = best_w.copy()
    while step > 1e-12:
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                cand = w.copy()
                cand[i] += step
                cand[j] -= step
                if cand[j] < lower_bound - 1e-15:
                    continue
                obj = objective(cand)
                if obj < best_obj - 1e-18:
                    best_obj, w = obj, cand
                    improved = True
        if not improved:
            step /= 2.0
    return w, best_obj


def random_psd(rng, n, scale=1.0):
    """Random PSD matrix with eigenvalues spread over a few decades."""
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigs = scale * 10.0 ** rng.uniform(-2, 1, size=n)
    return (basis * eigs) @ basis.T


def central_difference(f, x, eps=1e-5):
    """Componentwise central finite difference of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = eps
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * eps)
    return grad
