"""
Numerics
Small dense kernel: least squares, pseudo-inverse, continuous Lyapunov
equation, eigenvalue real parts and log-log slope fitting.

Everything here is a pure function over numpy arrays; nothing is cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from app.config import LSQ_COND_LIMIT, LYAPUNOV_RESIDUAL_RTOL, MAX_EIG_DIM
from app.control.errors import DegenerateFit, LyapunovFailure, NotHurwitz, SingularSystem


@dataclass(frozen=True)
class LyapunovSolution:
    """P solving A_cl^T P + P A_cl = -Q, symmetrized, with its residual."""

    P: np.ndarray
    residual: float

    def quadratic(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.P @ z)


def as_matrix(M, name: str = "M") -> np.ndarray:
    arr = np.atleast_2d(np.asarray(M, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def condition_number(M: np.ndarray) -> float:
    """2-norm condition number; inf for rank-deficient or empty matrices."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return math.inf
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] <= 0.0 or not np.isfinite(s[-1]):
        return math.inf
    return float(s[0] / s[-1])


def check_conditioning(M: np.ndarray, cond_limit: Optional[float] = None) -> float:
    limit = LSQ_COND_LIMIT if cond_limit is None else cond_limit
    rows, cols = M.shape
    if rows < cols:
        raise SingularSystem(f"underdetermined system: {rows} rows for {cols} unknowns")
    cond = condition_number(M)
    if not cond <= limit:
        raise SingularSystem(f"condition number {cond:.3e} exceeds limit {limit:.1e}", condition=cond)
    return cond


def least_squares(M, y, cond_limit: Optional[float] = None) -> np.ndarray:
    """
    argmin ||M x - y||_2 for a tall, full-column-rank M.

    Raises SingularSystem when M fails the conditioning guard.
    """
    M = as_matrix(M)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != M.shape[0]:
        raise ValueError(f"y has {y.shape[0]} entries, M has {M.shape[0]} rows")
    check_conditioning(M, cond_limit)
    x, *_ = np.linalg.lstsq(M, y, rcond=None)
    return x


def pseudo_inverse(M, cond_limit: Optional[float] = None) -> np.ndarray:
    """(M^T M)^{-1} M^T, computed by SVD under the same conditioning guard."""
    M = as_matrix(M)
    check_conditioning(M, cond_limit)
    return np.linalg.pinv(M)


def eig_real_parts(A) -> np.ndarray:
    """Real parts of the eigenvalues, sorted in decreasing order."""
    A = as_matrix(A, "A")
    n, m = A.shape
    if n != m:
        raise ValueError(f"A must be square, got {A.shape}")
    if n > MAX_EIG_DIM:
        raise ValueError(f"dimension {n} exceeds supported maximum {MAX_EIG_DIM}")

    if n == 1:
        parts = np.array([A[0, 0]])
    elif n == 2:
        # closed form keeps repeated real roots exact
        tr = A[0, 0] + A[1, 1]
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        disc = tr * tr - 4.0 * det
        if disc <= 0.0:
            parts = np.array([tr / 2.0, tr / 2.0])
        else:
            root = math.sqrt(disc)
            parts = np.array([(tr + root) / 2.0, (tr - root) / 2.0])
    else:
        parts = np.real(np.linalg.eigvals(A))

    return np.sort(parts)[::-1]


def is_hurwitz(A) -> bool:
    return bool(eig_real_parts(A)[0] < 0.0)


def _require_spd(Q: np.ndarray) -> None:
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as e:
        raise ValueError("Q must be positive definite") from e


def solve_lyapunov(A_cl, Q) -> LyapunovSolution:
    """
    Solve A_cl^T P + P A_cl = -Q by vectorization.

    With column-major vec: vec(A^T P) = (I kron A^T) vec(P) and
    vec(P A) = (A^T kron I) vec(P).
    """
    A = as_matrix(A_cl, "A_cl")
    Q = as_matrix(Q, "Q")
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError(f"A_cl {A.shape} and Q {Q.shape} must be square and equal-sized")
    _require_spd(Q)

    real_parts = eig_real_parts(A)
    if real_parts[0] >= 0.0:
        raise NotHurwitz(f"A_cl has eigenvalue real part {real_parts[0]:.6g} >= 0")

    eye = np.eye(n)
    L = np.kron(eye, A.T) + np.kron(A.T, eye)
    vec_p = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    P = vec_p.reshape((n, n), order="F")
    P = 0.5 * (P + P.T)

    residual = float(np.linalg.norm(A.T @ P + P @ A + Q, "fro"))
    q_norm = float(np.linalg.norm(Q, "fro"))
    if residual >= LYAPUNOV_RESIDUAL_RTOL * q_norm:
        raise LyapunovFailure(f"residual {residual:.3e} above {LYAPUNOV_RESIDUAL_RTOL:.0e}*||Q||")
    if np.linalg.eigvalsh(P)[0] <= 0.0:
        raise LyapunovFailure("solution P is not positive definite")

    return LyapunovSolution(P=P, residual=residual)


def _log_points(points: Iterable[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit needs strictly positive x and y")
    lx = np.log(xs)
    if np.ptp(lx) == 0.0:
        raise DegenerateFit("all x values are equal")
    return lx, np.log(ys)


def loglog_fit(points: Iterable[Tuple[float, float]]) -> Tuple[float, float]:
    """Ordinary least-squares line through (log x, log y): (slope, intercept)."""
    lx, ly = _log_points(points)
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def loglog_slope(points: Iterable[Tuple[float, float]]) -> float:
    return loglog_fit(points)[0]


def power_law_fit(features: Sequence[Sequence[float]], values: Sequence[float]) -> np.ndarray:
    """
    Fit values ~ c * prod(features_j ** p_j) in log space.

    Returns (log c, p_1, ..., p_m).
    """
    F = np.asarray(features, dtype=float)
    v = np.asarray(values, dtype=float)
    if F.ndim != 2 or F.shape[0] != v.shape[0]:
        raise ValueError("features must be a matrix with one row per value")
    if np.any(F <= 0.0) or np.any(v <= 0.0):
        raise ValueError("power-law fit needs strictly positive data")
    M = np.column_stack([np.ones(F.shape[0]), np.log(F)])
    try:
        return least_squares(M, np.log(v))
    except SingularSystem as e:
        raise DegenerateFit(f"power-law fit is degenerate: {e}") from e
