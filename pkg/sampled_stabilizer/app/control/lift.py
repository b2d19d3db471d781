"""
Lift
Discrete-time approximate models indexed by the sample time T:

- LinearLift: the (n+1)-state chain z(k+1) = A z(k), y = C z(k), with the
  lifted coordinate z_{n+1} = alpha + beta u held constant over a sample.
- AffineStep: the n-state affine model F^a_T(z, u) = A_z z + B_T (alpha + beta u).
- remainder_study: how far F^a_T drifts from the RK4 flow as T shrinks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.control.errors import DegenerateFit
from app.control.numerics import loglog_slope
from app.control.plant import NormalFormPlant, equilibrium_input, flow_exact

logger = logging.getLogger(__name__)

# remainders below this are treated as exact zeros
EXACT_REMAINDER_TOL = 1e-12


def chain_matrix(dim: int, T: float) -> np.ndarray:
    """Upper-triangular Taylor chain: A[i, j] = T^(j-i) / (j-i)! for j >= i."""
    A = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            A[i, j] = T ** (j - i) / math.factorial(j - i)
    return A


def chain_inverse(dim: int, T: float) -> np.ndarray:
    """Closed-form inverse of chain_matrix: the same pattern with -T."""
    return chain_matrix(dim, -T)


@dataclass(frozen=True)
class LinearLift:
    n: int
    T: float
    A: np.ndarray
    C: np.ndarray

    @property
    def A_inv(self) -> np.ndarray:
        return chain_inverse(self.n + 1, self.T)


def build_lift(n: int, T: float) -> LinearLift:
    if n < 1:
        raise ValueError(f"relative degree must be positive, got {n}")
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    C = np.zeros((1, n + 1))
    C[0, 0] = 1.0
    return LinearLift(n=n, T=T, A=chain_matrix(n + 1, T), C=C)


def continuous_chain(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(A1, B1): the integrator chain shift matrix and last unit vector."""
    A1 = np.eye(n, k=1)
    B1 = np.zeros((n, 1))
    B1[-1, 0] = 1.0
    return A1, B1


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """[B, AB, ..., A^(n-1)B]"""
    n = A.shape[0]
    cols = [B]
    for _ in range(1, n):
        cols.append(A @ cols[-1])
    return np.hstack(cols)


@dataclass(frozen=True)
class AffineStep:
    """
    F^a_T(z, u) = A_z z + B_T (alpha(z) + beta(z) u).

    A_z is the n x n chain, B_T[i] = T^(n-i) / (n-i)!. For n = 2,
    A_z = I + A1 T and B_T = B1 T + B2 T^2.
    """

    n: int
    T: float
    A_z: np.ndarray
    B_T: np.ndarray
    A1: np.ndarray = field(repr=False)
    B1: np.ndarray = field(repr=False)

    @property
    def B2(self) -> np.ndarray:
        """Second-order part of B_T for n = 2; the O(T^2) remainder otherwise."""
        return (self.B_T - self.B1.reshape(-1) * self.T) / self.T ** 2

    def controllable(self) -> bool:
        return int(np.linalg.matrix_rank(controllability_matrix(self.A1, self.B1))) == self.n

    def closed_loop(self, K) -> np.ndarray:
        """A_z + B_T K: the model under the cancelling input."""
        K = np.asarray(K, dtype=float).reshape(1, -1)
        return self.A_z + self.B_T.reshape(-1, 1) @ K


def build_affine_step(n: int, T: float) -> AffineStep:
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    full = chain_matrix(n + 1, T)
    A1, B1 = continuous_chain(n)
    return AffineStep(n=n, T=T, A_z=full[:n, :n].copy(), B_T=full[:n, n].copy(), A1=A1, B1=B1)


def approx_step(plant: NormalFormPlant, z, u: float, T: float) -> np.ndarray:
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    z = np.asarray(z, dtype=float).reshape(-1)
    step = build_affine_step(plant.n, T)
    return step.A_z @ z + step.B_T * plant.lifted(z, u)


def expected_remainder_orders(n: int) -> List[int]:
    """Component i (1-based) of F^e - F^a is O(T^(n - i + 2))."""
    return [n - i + 2 for i in range(1, n + 1)]


def state_input_grid(
    lower: Sequence[float],
    upper: Sequence[float],
    inputs: Sequence[float],
    points_per_axis: int = 5,
) -> List[Tuple[np.ndarray, float]]:
    """Cartesian grid of states times a list of inputs."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(lower, upper)]
    mesh = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
    return [(z, float(u)) for z in mesh for u in inputs]


@dataclass(frozen=True)
class RemainderReport:
    T_list: List[float]
    max_err: np.ndarray  # shape (len(T_list), n)
    slopes: Optional[List[float]]
    expected: List[int]
    fitted_M: float
    exact: bool
    grid_size: int

    def points(self, component: int) -> List[Tuple[float, float]]:
        return [(T, float(e)) for T, e in zip(self.T_list, self.max_err[:, component])]


def remainder_study(
    plant: NormalFormPlant,
    grid: Sequence[Tuple[np.ndarray, float]],
    T_list: Sequence[float],
) -> RemainderReport:
    """
    Max-over-grid |F^e_i - F^a_i| per component and its log-log slope vs T.

    M is fitted as max |F^e - F^a| / (T^3 |(z, u - u0)|) over the grid and T list.
    """
    T_list = [float(T) for T in T_list]
    if len(T_list) < 4:
        raise ValueError(f"need at least 4 sample times, got {len(T_list)}")
    if any(b >= a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("T_list must be strictly decreasing")
    if not grid:
        raise ValueError("grid is empty")
    for z, _ in grid:
        if not plant.box.contains(z):
            raise ValueError(f"grid point z={np.asarray(z).tolist()} lies outside the operating box")

    u0 = equilibrium_input(plant)
    max_err = np.zeros((len(T_list), plant.n))
    fitted_M = 0.0

    for row, T in enumerate(T_list):
        for z, u in grid:
            exact = flow_exact(plant, z, u, T)
            approx = approx_step(plant, z, u, T)
            err = np.abs(exact - approx)
            max_err[row] = np.maximum(max_err[row], err)
            scale = math.hypot(float(np.linalg.norm(z)), u - u0)
            if scale > 0.0:
                fitted_M = max(fitted_M, float(np.linalg.norm(err)) / (T ** 3 * scale))
        logger.debug(f"[Lift/remainder] {plant.name} T={T:g} max_err={max_err[row].tolist()}")

    exact_model = bool(np.all(max_err < EXACT_REMAINDER_TOL))
    slopes: Optional[List[float]] = None
    if not exact_model:
        slopes = []
        for i in range(plant.n):
            col = max_err[:, i]
            if np.any(col <= 0.0):
                raise DegenerateFit(f"component {i + 1} has a zero remainder on part of the T list")
            slopes.append(loglog_slope(zip(T_list, col)))

    logger.info(f"[Lift/remainder] {plant.name} exact={exact_model} slopes={slopes} M={fitted_M:.4g}")
    return RemainderReport(
        T_list=T_list,
        max_err=max_err,
        slopes=slopes,
        expected=expected_remainder_orders(plant.n),
        fitted_M=fitted_M,
        exact=exact_model,
        grid_size=len(grid),
    )
