"""Score-weighted kernel, Gram assembly, and the weighted discrepancy.

Given a differentiable log-density with score s(x) = grad log p(x) and a
base kernel k, the score-weighted kernel is

    k_p(x, y) = s(x)' k(x, y) s(y) + s(x)' grad_y k(x, y)
              + s(y)' grad_x k(x, y) + trace(grad_x grad_y k(x, y))

It depends on p only through the score, so any normalizing constant of p
drops out. For x drawn from p the expectation of k_p(x, y) vanishes for
every fixed y, and the quadratic form w' K_p w over a sample Gram matrix
K_p measures how far the weighted sample is from p.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GramIntegrityError, ScoreEvaluationError
from .kernels import RbfKernel, pairwise_sq_dists

__all__ = [
    "ExactMoments",
    "ScoreTarget",
    "SteinGram",
    "stein_kernel_eval",
    "stein_kernel_vector",
    "stein_gram",
    "ksd_weighted",
    "stein_identity_check",
    "gram_to_bytes",
    "gram_from_bytes",
]

# Tolerances for Gram integrity checks, relative to matrix scale.
_SYMMETRY_RTOL = 1e-12
_PSD_RTOL = 1e-8
_KSD_CLAMP_RTOL = 1e-10
# Full eigenvalue validation is cubic in n; above this size construction
# checks only symmetry and finiteness, and ksd_weighted still rejects
# negative quadratic forms beyond the PSD slack.
_PSD_CHECK_MAX_N = 1024


@dataclass(frozen=True)
class ExactMoments:
    """Closed-form moments of a target, used as experiment ground truth.

    Attributes:
        mean: (d,) first moment.
        second_moment: (d,) per-coordinate raw second moment E[x_i^2].
        cosine_expectation: optional callable (omega, b) -> E[cos(omega' x + b)].
    """

    mean: np.ndarray
    second_moment: np.ndarray
    cosine_expectation: Callable[[np.ndarray, float], float] | None = None


@dataclass(frozen=True)
class ScoreTarget:
    """A target distribution seen only through its score.

    The score callable maps an (n, d) array of points to an (n, d) array of
    gradients of log p. ``log_density`` maps (n, d) to (n,) and may be
    unnormalized; ``density_normalized`` records whether its values are the
    actual log-density rather than off by an additive constant.

    Attributes:
        dimension: point dimension d.
        score: batched score callable.
        log_density: optional batched log-density callable.
        density_normalized: whether ``log_density`` is normalized.
        exact_moments: optional closed-form moment oracle.
    """

    dimension: int
    score: Callable[[np.ndarray], np.ndarray]
    log_density: Callable[[np.ndarray], np.ndarray] | None = None
    density_normalized: bool = False
    exact_moments: ExactMoments | None = None

    def _as_batch(self, points: np.ndarray) -> tuple[np.ndarray, bool]:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ValueError(
                f"expected points of dimension {self.dimension}, got shape {np.shape(points)}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        return pts, single

    def score_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the score; accepts a single (d,) point or an (n, d) batch."""
        pts, single = self._as_batch(points)
        out = np.asarray(self.score(pts), dtype=float)
        if out.shape != pts.shape:
            raise ValueError(
                f"score callable returned shape {out.shape}, expected {pts.shape}"
            )
        bad = ~np.all(np.isfinite(out), axis=1)
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise ScoreEvaluationError(
                f"score is not finite at point index {idx}", point=pts[idx].copy()
            )
        return out[0] if single else out

    def log_density_at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate log p (possibly unnormalized); scalar for a single point."""
        if self.log_density is None:
            raise ValueError("target does not expose a log-density")
        pts, single = self._as_batch(points)
        out = np.asarray(self.log_density(pts), dtype=float)
        if out.shape != (pts.shape[0],):
            raise ValueError(
                f"log-density callable returned shape {out.shape}, expected ({pts.shape[0]},)"
            )
        if np.any(np.isnan(out)) or np.any(out == np.inf):
            idx = int(np.argmax(np.isnan(out) | (out == np.inf)))
            raise ScoreEvaluationError(
                f"log-density is not usable at point index {idx}", point=pts[idx].copy()
            )
        return float(out[0]) if single else out


def _points_digest(points: np.ndarray) -> str:
    pts = np.ascontiguousarray(points, dtype=float)
    hasher = hashlib.sha256()
    hasher.update(str(pts.shape).encode())
    hasher.update(pts.tobytes())
    return hasher.hexdigest()


@dataclass(frozen=True)
class SteinGram:
    """Symmetric PSD Gram matrix of the score-weighted kernel on a point set.

    Construction validates symmetry to 1e-12 relative to the largest entry.
    Up to 1024 points it also checks the smallest eigenvalue against
    -1e-8 * n * max(diag); beyond that the cubic-cost eigensolve is skipped
    and indefiniteness surfaces through :func:`ksd_weighted`. The digest
    identifies the point set the matrix was built from.
    """

    matrix: np.ndarray
    kernel: RbfKernel
    points_digest: str = field(default="")

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise GramIntegrityError("Gram matrix contains non-finite entries")
        object.__setattr__(self, "matrix", mat)
        scale = float(np.max(np.abs(mat))) if mat.size else 0.0
        asym = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
        if asym > _SYMMETRY_RTOL * max(scale, 1e-300):
            raise GramIntegrityError(
                f"Gram matrix asymmetry {asym:.3e} exceeds tolerance for scale {scale:.3e}"
            )
        n = mat.shape[0]
        if 0 < n <= _PSD_CHECK_MAX_N:
            lam_min = float(np.linalg.eigvalsh(mat)[0])
            floor = -_PSD_RTOL * n * max(float(np.max(np.diag(mat))), 0.0)
            if lam_min < floor:
                raise GramIntegrityError(
                    f"Gram matrix min eigenvalue {lam_min:.3e} below PSD floor {floor:.3e}"
                )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def stein_kernel_eval(
    target: ScoreTarget, kernel: RbfKernel, x: np.ndarray, y: np.ndarray
) -> float:
    """Evaluate the score-weighted kernel k_p(x, y) for one pair of points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = target.score_at(x)
    sy = target.score_at(y)
    h = kernel.bandwidth
    diff = x - y
    sq = float(np.dot(diff, diff))
    k = float(np.exp(-sq / h))
    d = x.shape[0]
    term_ss = float(np.dot(sx, sy)) * k
    term_xy = (2.0 / h) * float(np.dot(sx, diff)) * k
    term_yx = (-2.0 / h) * float(np.dot(sy, diff)) * k
    term_tr = (2.0 * d / h - 4.0 * sq / (h * h)) * k
    return term_ss + term_xy + term_yx + term_tr


def stein_kernel_vector(
    target: ScoreTarget, kernel: RbfKernel, points: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Evaluate k_p(x_i, y) for every row x_i of ``points``, shape (n,)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    y = np.asarray(y, dtype=float)
    scores = target.score_at(pts)
    sy = target.score_at(y)
    h = kernel.bandwidth
    d = pts.shape[1]
    diff = pts - y[None, :]
    sq = np.sum(diff * diff, axis=1)
    k = np.exp(-sq / h)
    term_ss = (scores @ sy) * k
    term_xy = (2.0 / h) * np.sum(scores * diff, axis=1) * k
    term_yx = (-2.0 / h) * (diff @ sy) * k
    term_tr = (2.0 * d / h - 4.0 * sq / (h * h)) * k
    return term_ss + term_xy + term_yx + term_tr


def stein_gram(target: ScoreTarget, kernel: RbfKernel, points: np.ndarray) -> SteinGram:
    """Assemble the full score-weighted Gram matrix on a point set.

    The matrix is computed vectorized and then mirrored from its upper
    triangle so the stored result is exactly symmetric. Entries agree with
    :func:`stein_kernel_eval` applied pairwise.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"expected a non-empty (n, d) point array, got {pts.shape}")
    scores = target.score_at(pts)
    h = kernel.bandwidth
    n, d = pts.shape
    # Everything below reuses a small number of (n, n) buffers; each one is
    # 800 MB at n = 10^4, so building the four kernel terms as separate fresh
    # matrices would exhaust memory long before compute time became an issue.
    sq = pairwise_sq_dists(pts)
    k = np.multiply(sq, -1.0 / h)
    np.exp(k, out=k)
    # Trace term, overwriting the distance buffer.
    bracket = sq
    bracket *= -4.0 / (h * h)
    bracket += 2.0 * d / h
    # Score-score term.
    bracket += scores @ scores.T
    # Cross terms (2/h) * (s_i'x_i + s_j'x_j - s_i'x_j - s_j'x_i).
    row_dot = np.sum(scores * pts, axis=1)
    s_x = scores @ pts.T
    np.add(s_x, s_x.T, out=s_x)
    s_x *= -2.0 / h
    s_x += (2.0 / h) * row_dot[:, None]
    s_x += (2.0 / h) * row_dot[None, :]
    bracket += s_x
    del s_x
    bracket *= k
    del k
    # Mirror the upper triangle row by row for exact symmetry without
    # allocating triangular copies.
    for i in range(n - 1):
        bracket[i + 1 :, i] = bracket[i, i + 1 :]
    return SteinGram(matrix=bracket, kernel=kernel, points_digest=_points_digest(pts))


def ksd_weighted(gram: SteinGram | np.ndarray, weights: np.ndarray) -> float:
    """Weighted squared discrepancy w' K_p w.

    Small negative values from rounding, within 1e-10 * n * max(diag), clamp
    to zero. Anything more negative indicates a broken Gram matrix and
    raises :class:`GramIntegrityError`.
    """
    mat = gram.matrix if isinstance(gram, SteinGram) else np.asarray(gram, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] != mat.shape[0]:
        raise ValueError(
            f"weights shape {w.shape} does not match Gram size {mat.shape[0]}"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    raw = float(w @ mat @ w)
    n = mat.shape[0]
    slack = _KSD_CLAMP_RTOL * n * max(float(np.max(np.diag(mat))), 0.0)
    if raw < -slack:
        raise GramIntegrityError(
            f"weighted discrepancy {raw:.3e} is negative beyond tolerance {slack:.3e}"
        )
    return max(raw, 0.0)


def stein_identity_check(
    target: ScoreTarget,
    kernel: RbfKernel,
    y: np.ndarray,
    grid,
) -> float:
    """Quadrature estimate of E_{x ~ p}[k_p(x, y)], which is zero exactly.

    ``grid`` is a 1-d node array for dimension-1 targets, or a pair of node
    arrays forming a tensor product for dimension-2 targets. The target must
    expose a log-density; normalization is irrelevant because the estimate
    divides by the quadrature mass of p over the same grid.
    """
    if target.log_density is None:
        raise ValueError("identity check requires a target with a log-density")
    d = target.dimension
    if d == 1:
        nodes = np.asarray(grid, dtype=float).reshape(-1)
        if nodes.size < 2:
            raise ValueError("quadrature grid must contain at least two nodes")
        pts = nodes[:, None]
        log_p = target.log_density_at(pts)
        dens = np.exp(log_p - np.max(log_p))
        mass = float(np.trapezoid(dens, nodes))
        if mass <= 0.0:
            raise ValueError("quadrature grid carries no density mass")
        vals = stein_kernel_vector(target, kernel, pts, np.asarray(y, dtype=float))
        return float(np.trapezoid(dens * vals, nodes)) / mass
    if d == 2:
        if not isinstance(grid, (tuple, list)) or len(grid) != 2:
            raise ValueError("dimension-2 check needs a pair of axis node arrays")
        gx = np.asarray(grid[0], dtype=float).reshape(-1)
        gy = np.asarray(grid[1], dtype=float).reshape(-1)
        if gx.size < 2 or gy.size < 2:
            raise ValueError("quadrature grid must contain at least two nodes per axis")
        mx, my = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([mx.ravel(), my.ravel()])
        log_p = target.log_density_at(pts)
        dens = np.exp(log_p - np.max(log_p)).reshape(gx.size, gy.size)
        mass = float(np.trapezoid(np.trapezoid(dens, gy, axis=1), gx))
        if mass <= 0.0:
            raise ValueError("quadrature grid carries no density mass")
        vals = stein_kernel_vector(target, kernel, pts, np.asarray(y, dtype=float))
        vals = vals.reshape(gx.size, gy.size)
        num = float(np.trapezoid(np.trapezoid(dens * vals, gy, axis=1), gx))
        return num / mass
    raise ValueError("identity check supports dimension 1 or 2 targets only")


def gram_to_bytes(gram: SteinGram) -> bytes:
    """Serialize the Gram matrix: 8-byte little-endian size then row-major float64."""
    mat = np.ascontiguousarray(gram.matrix, dtype="<f8")
    return struct.pack("<Q", gram.n) + mat.tobytes(order="C")


def gram_from_bytes(
    data: bytes, kernel: RbfKernel, points_digest: str = ""
) -> SteinGram:
    """Inverse of :func:`gram_to_bytes`; revalidates the matrix on load."""
    if len(data) < 8:
        raise ValueError("truncated Gram serialization")
    (n,) = struct.unpack("<Q", data[:8])
    expected = 8 + 8 * n * n
    if len(data) != expected:
        raise ValueError(
            f"Gram serialization length {len(data)} does not match header size {n}"
        )
    mat = np.frombuffer(data, dtype="<f8", offset=8).reshape(n, n).astype(float)
    return SteinGram(matrix=mat, kernel=kernel, points_digest=points_digest)
