"""
Controller
Virtual-gain design with a Lyapunov certificate, and the dynamic
input-adaptation law

    u(k+1) = u(k) + sign(beta) * gamma * (v(z_hat(k)) - z_hat_{n+1}(k))

preceded by a fixed transient input sequence while the estimator window fills.
step_controller only sees its own state and the estimate; alpha, beta and
the true state are reserved for the diagnostics below it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from app.config import SINGULAR_GAIN_EPS
from app.control.errors import EstimateMissing, SingularGain, UnstablePoles
from app.control.estimator import Estimate, EstimateOrNotReady
from app.control.lift import approx_step, continuous_chain
from app.control.numerics import LyapunovSolution, eig_real_parts, solve_lyapunov
from app.control.plant import NormalFormPlant

logger = logging.getLogger(__name__)

MAX_DESIGN_ORDER = 4


# === GAIN DESIGN ===

@dataclass(frozen=True)
class GainDesign:
    K: np.ndarray
    P_z: np.ndarray
    Q: np.ndarray
    lambda_z: float
    closed_loop_eigs: np.ndarray

    @property
    def n(self) -> int:
        return int(self.K.shape[0])

    @property
    def A_cl(self) -> np.ndarray:
        A1, B1 = continuous_chain(self.n)
        return A1 + B1 @ self.K.reshape(1, -1)

    def V(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.P_z @ z)


def _certify(K: np.ndarray, Q: Optional[np.ndarray]) -> GainDesign:
    n = K.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    A1, B1 = continuous_chain(n)
    A_cl = A1 + B1 @ K.reshape(1, -1)
    sol: LyapunovSolution = solve_lyapunov(A_cl, Q)
    return GainDesign(
        K=K,
        P_z=sol.P,
        Q=Q,
        lambda_z=float(np.linalg.eigvalsh(Q)[0]),
        closed_loop_eigs=eig_real_parts(A_cl),
    )


def design_gain(n: int, poles: Sequence[complex], Q=None) -> GainDesign:
    """
    Place the eigenvalues of A1 + B1 K at poles.

    For the integrator chain the closed loop is in companion form, so K is
    the negated characteristic polynomial coefficients, lowest order first.
    """
    if not 1 <= n <= MAX_DESIGN_ORDER:
        raise ValueError(f"design supports 1 <= n <= {MAX_DESIGN_ORDER}, got {n}")
    poles = [complex(p) for p in poles]
    if len(poles) != n:
        raise ValueError(f"need {n} poles, got {len(poles)}")
    unstable = [p for p in poles if p.real >= 0.0]
    if unstable:
        raise UnstablePoles(f"poles must have negative real part: {[str(p) for p in unstable]}")

    coeffs = np.poly(poles)
    if np.max(np.abs(np.imag(coeffs))) > 1e-9:
        raise ValueError("complex poles must come in conjugate pairs")
    K = -np.real(coeffs[1:])[::-1].copy()
    design = _certify(K, Q)
    logger.info(f"[Controller/design] n={n} poles={[str(p) for p in poles]} K={K.tolist()}")
    return design


def design_from_gain(K: Sequence[float], Q=None) -> GainDesign:
    """Certificate for an explicit K; raises NotHurwitz when A1 + B1 K is not stable."""
    K = np.asarray(K, dtype=float).reshape(-1)
    if K.shape[0] > MAX_DESIGN_ORDER:
        raise ValueError(f"gain length {K.shape[0]} exceeds {MAX_DESIGN_ORDER}")
    return _certify(K, Q)


# === VIRTUAL INPUT ===

@runtime_checkable
class VirtualInput(Protocol):
    """A stabilizing input for the linear chain, evaluated on the first n estimated states."""

    def __call__(self, z: np.ndarray) -> float: ...


@dataclass(frozen=True)
class LinearVirtualInput:
    K: Tuple[float, ...]

    def __call__(self, z: np.ndarray) -> float:
        return virtual_input(self.K, z)


def virtual_input(K, z_hat) -> float:
    K = np.asarray(K, dtype=float).reshape(-1)
    z = np.asarray(z_hat, dtype=float).reshape(-1)[: K.shape[0]]
    return float(K @ z)


# === DYNAMIC CONTROLLER ===

@dataclass(frozen=True)
class ControllerState:
    u: float
    gamma: float
    K: Tuple[float, ...]
    transient_inputs: Tuple[float, ...]
    step: int = 0
    active: bool = False
    beta_sign: int = 1
    clamp: Optional[Tuple[float, float]] = None
    virtual: Optional[VirtualInput] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.beta_sign not in (1, -1):
            raise ValueError(f"beta_sign must be +1 or -1, got {self.beta_sign}")
        if self.clamp is not None and not self.clamp[0] < self.clamp[1]:
            raise ValueError(f"clamp needs lo < hi, got {self.clamp}")
        if not math.isfinite(self.u):
            raise ValueError(f"held input is not finite: {self.u}")

    @property
    def phase(self) -> str:
        return "active" if self.active else f"transient[{self.step}]"

    def v(self, z_hat: np.ndarray) -> float:
        if self.virtual is not None:
            return float(self.virtual(z_hat[: len(self.K)]))
        return virtual_input(self.K, z_hat)


def initial_state(
    K: Sequence[float],
    gamma: float,
    transient_inputs: Sequence[float],
    beta_sign: int = 1,
    clamp: Optional[Tuple[float, float]] = None,
    virtual: Optional[VirtualInput] = None,
) -> ControllerState:
    transient = tuple(float(x) for x in transient_inputs)
    return ControllerState(
        u=transient[-1] if transient else 0.0,
        gamma=float(gamma),
        K=tuple(float(k) for k in np.asarray(K, dtype=float).reshape(-1)),
        transient_inputs=transient,
        active=not transient,
        beta_sign=beta_sign,
        clamp=clamp,
        virtual=virtual,
    )


def clamp_input(u: float, clamp: Optional[Tuple[float, float]]) -> float:
    if clamp is None:
        return u
    return min(max(u, clamp[0]), clamp[1])


def step_controller(state: ControllerState, est: EstimateOrNotReady) -> Tuple[float, ControllerState]:
    """Emit u(k) and return the state for k+1."""
    if not state.active:
        u_emit = clamp_input(state.transient_inputs[state.step], state.clamp)
        nxt = state.step + 1
        if nxt >= len(state.transient_inputs):
            # continuity at the phase switch
            return u_emit, replace(state, u=u_emit, step=nxt, active=True)
        return u_emit, replace(state, step=nxt)

    if not isinstance(est, Estimate):
        raise EstimateMissing(f"controller is active at phase {state.phase} but no estimate is available")

    u_emit = state.u
    err = state.v(est.z_hat) - est.z_lift_hat
    u_next = clamp_input(state.u + state.beta_sign * state.gamma * err, state.clamp)
    return u_emit, replace(state, u=u_next)


# === DIAGNOSTICS (ground truth) ===

def static_oracle_input(plant: NormalFormPlant, K, z, setpoint: float = 0.0) -> float:
    """The cancelling input (-alpha(z) + K z_tilde) / beta(z), z_tilde shifted by the setpoint."""
    z = np.asarray(z, dtype=float).reshape(-1)
    b = plant.beta(z)
    if abs(b) < SINGULAR_GAIN_EPS:
        raise SingularGain(f"[{plant.name}] |beta(z)| = {abs(b):.3e} at z={z.tolist()}")
    z_tilde = z.copy()
    z_tilde[0] -= setpoint
    return (-plant.alpha(z) + virtual_input(K, z_tilde)) / b


def input_error(plant: NormalFormPlant, K, z, u: float, setpoint: float = 0.0) -> float:
    """e_u = v(z_tilde) - (alpha(z) + beta(z) u)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    z_tilde = z.copy()
    z_tilde[0] -= setpoint
    return virtual_input(K, z_tilde) - plant.lifted(z, u)


@dataclass(frozen=True)
class AdaptationMargin:
    beta_min: float
    beta_max: float
    gamma: float
    gamma_beta_max: float
    lambda_u_max: float

    @property
    def ok(self) -> bool:
        return self.gamma_beta_max < 1.0


def adaptation_margin(plant: NormalFormPlant, gamma: float, points_per_axis: int = 9) -> AdaptationMargin:
    """gamma * beta_max must stay below 1; admissible decrease rate (1 - beta_min gamma) beta_min gamma."""
    b_min, b_max = plant.beta_bounds(points_per_axis)
    return AdaptationMargin(
        beta_min=b_min,
        beta_max=b_max,
        gamma=gamma,
        gamma_beta_max=gamma * b_max,
        lambda_u_max=(1.0 - b_min * gamma) * b_min * gamma,
    )


@dataclass(frozen=True)
class VirtualInputProbe:
    decrease_rate: float
    lipschitz: float
    samples: int

    @property
    def ok(self) -> bool:
        return self.decrease_rate > 0.0 and math.isfinite(self.lipschitz)


def probe_virtual_input(
    plant: NormalFormPlant,
    virtual: VirtualInput,
    design: GainDesign,
    T: float,
    points_per_axis: int = 7,
) -> VirtualInputProbe:
    """
    Empirical check of the two sufficient conditions on a virtual input:
    V_z decreases along F^a_T under the cancelling input at some rate
    lambda > 0, and v is Lipschitz on the box.
    """
    grid = [z for z in plant.box.grid(points_per_axis) if np.linalg.norm(z) > 0.0]
    rates: List[float] = []
    for z in grid:
        b = plant.beta(z)
        u_bar = (-plant.alpha(z) + float(virtual(z))) / b
        z_next = approx_step(plant, z, u_bar, T)
        rates.append(-(design.V(z_next) - design.V(z)) / (T * float(z @ z)))

    pts = np.array(grid)
    vals = np.array([float(virtual(z)) for z in pts])
    lip = 0.0
    for i in range(len(pts)):
        d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        if d.size:
            lip = max(lip, float(np.max(np.abs(vals[i + 1:] - vals[i]) / d)))

    probe = VirtualInputProbe(decrease_rate=float(min(rates)), lipschitz=lip, samples=len(grid))
    logger.info(f"[Controller/probe] {plant.name} T={T:g} lambda={probe.decrease_rate:.4g} L={lip:.4g}")
    return probe
