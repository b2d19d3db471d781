"""
Simloop
The sampled-data closed loop. For k = 0..N with N = floor(horizon / T):

    y(k) = z1(k) + d(k)
    z_hat(k) from the window of y - r(k)
    u(k) emitted by the controller (or the cancelling input in oracle mode)
    z(k+1) = RK4 flow of the plant over T under constant u(k)   (k < N)

Every record also carries the ground-truth diagnostics e_u, V_z, V_eu and W.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.control.controller import (
    GainDesign,
    VirtualInput,
    clamp_input,
    initial_state,
    input_error,
    static_oracle_input,
    step_controller,
    virtual_input,
)
from app.control.errors import BlowUp, SingularGain
from app.control.estimator import Estimate, EstimatorConfig, UniformNoise, WindowEstimator, build_stack
from app.control.plant import NormalFormPlant, flow_exact

logger = logging.getLogger(__name__)

MODE_DATA_DRIVEN = "data-driven"
MODE_ORACLE = "oracle"


class SetpointSchedule:
    """Piecewise-constant reference r(t) from sorted (time, value) pairs."""

    def __init__(self, points: Sequence[Tuple[float, float]]) -> None:
        pts = [(float(t), float(r)) for t, r in points] or [(0.0, 0.0)]
        if any(b[0] < a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("setpoints must be sorted by time")
        self.points = pts

    def value_at(self, t: float) -> float:
        r = 0.0
        for t_i, r_i in self.points:
            if t_i <= t + 1e-12:
                r = r_i
            else:
                break
        return r

    def change_steps(self, T: float, steps: int) -> List[int]:
        """Sample indices (1..steps) where r differs from the previous sample."""
        values = [self.value_at(k * T) for k in range(steps + 1)]
        return [k for k in range(1, steps + 1) if values[k] != values[k - 1]]


@dataclass(frozen=True)
class LoopConfig:
    """A fully resolved run: plant object, certified gain and loop parameters."""

    plant: NormalFormPlant
    design: GainDesign
    T: float
    rho: int
    gamma: float
    transient_inputs: Tuple[float, ...]
    horizon: float
    z0: Tuple[float, ...]
    d_bar: float = 0.0
    seed: int = 0
    setpoints: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    clamp: Optional[Tuple[float, float]] = None
    input_range: Optional[Tuple[float, float]] = None
    substeps: Optional[int] = None
    virtual: Optional[VirtualInput] = field(default=None, compare=False)
    name: str = "run"

    def __post_init__(self) -> None:
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not 0.0 < self.T <= self.horizon:
            raise ValueError(f"need 0 < T <= horizon, got T={self.T}, horizon={self.horizon}")
        if len(self.z0) != self.plant.n:
            raise ValueError(f"z0 has {len(self.z0)} entries, plant has n={self.plant.n}")
        if self.design.n != self.plant.n:
            raise ValueError(f"gain has length {self.design.n}, plant has n={self.plant.n}")
        if len(self.transient_inputs) != self.rho - 1:
            raise ValueError(f"need rho-1={self.rho - 1} transient inputs, got {len(self.transient_inputs)}")
        if self.d_bar < 0.0:
            raise ValueError(f"d_bar must be non-negative, got {self.d_bar}")

    @property
    def steps(self) -> int:
        return int(math.floor(self.horizon / self.T + 1e-9))

    @property
    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(n=self.plant.n, rho=self.rho, T=self.T)

    def replace(self, **changes) -> "LoopConfig":
        return replace(self, **changes)


@dataclass
class Trace:
    """Per-step record arrays, indexed by k = 0..N."""

    n: int
    T: float
    mode: str
    k: np.ndarray
    t: np.ndarray
    z: np.ndarray
    y: np.ndarray
    d: np.ndarray
    z_hat: np.ndarray  # (N+1, n+1), NaN before the window fills
    u: np.ndarray
    v: np.ndarray  # v(z_hat), NaN before the window fills
    e_u: np.ndarray
    Vz: np.ndarray
    Veu: np.ndarray
    W: np.ndarray
    r: np.ndarray
    z_lift: np.ndarray  # alpha(z(k)) + beta(z(k)) u(k-1)
    u_oracle: np.ndarray
    skip: int = 0
    setpoint_changes: List[int] = field(default_factory=list)
    complete: bool = True

    def __len__(self) -> int:
        return int(self.k.shape[0])

    @property
    def z_tilde(self) -> np.ndarray:
        zt = self.z.copy()
        zt[:, 0] -= self.r
        return zt


class _Recorder:
    def __init__(self, n: int) -> None:
        self.n = n
        self.cols: Dict[str, list] = {
            key: []
            for key in ("k", "t", "z", "y", "d", "z_hat", "u", "v", "e_u", "Vz", "Veu", "W", "r", "z_lift", "u_oracle")
        }

    def add(self, **values) -> None:
        for key, val in values.items():
            self.cols[key].append(val)

    def build(self, cfg: LoopConfig, mode: str, changes: List[int], complete: bool) -> Trace:
        c = self.cols
        n = self.n
        return Trace(
            n=n,
            T=cfg.T,
            mode=mode,
            k=np.array(c["k"], dtype=int),
            t=np.array(c["t"], dtype=float),
            z=np.array(c["z"], dtype=float).reshape(-1, n),
            y=np.array(c["y"], dtype=float),
            d=np.array(c["d"], dtype=float),
            z_hat=np.array(c["z_hat"], dtype=float).reshape(-1, n + 1),
            u=np.array(c["u"], dtype=float),
            v=np.array(c["v"], dtype=float),
            e_u=np.array(c["e_u"], dtype=float),
            Vz=np.array(c["Vz"], dtype=float),
            Veu=np.array(c["Veu"], dtype=float),
            W=np.array(c["W"], dtype=float),
            r=np.array(c["r"], dtype=float),
            z_lift=np.array(c["z_lift"], dtype=float),
            u_oracle=np.array(c["u_oracle"], dtype=float),
            skip=cfg.rho - 1,
            setpoint_changes=changes,
            complete=complete,
        )


def _simulate(cfg: LoopConfig, oracle: bool) -> Trace:
    plant = cfg.plant
    n = plant.n
    K = cfg.design.K
    steps = cfg.steps
    mode = MODE_ORACLE if oracle else MODE_DATA_DRIVEN
    schedule = SetpointSchedule(cfg.setpoints)
    changes = schedule.change_steps(cfg.T, steps)

    estimator = WindowEstimator(cfg.estimator_config, build_stack(cfg.estimator_config))
    noise = UniformNoise(cfg.d_bar, cfg.seed)
    ctrl = initial_state(
        K, cfg.gamma, cfg.transient_inputs, beta_sign=plant.beta_sign, clamp=cfg.clamp, virtual=cfg.virtual
    )
    rec = _Recorder(n)
    nan_hat = np.full(n + 1, np.nan)

    z = np.array(cfg.z0, dtype=float)
    u_prev = cfg.transient_inputs[0] if cfg.transient_inputs else 0.0
    saturated = 0
    singular = 0

    logger.info(f"[Simloop] {cfg.name} mode={mode} T={cfg.T:g} steps={steps} d_bar={cfg.d_bar:g} seed={cfg.seed}")
    for k in range(steps + 1):
        t = k * cfg.T
        r = schedule.value_at(t)
        d = noise.sample()
        y = z[0] + d
        est = estimator.step(k, y, offset=r)

        try:
            u_bar = static_oracle_input(plant, K, z, r)
        except SingularGain:
            if oracle:
                raise
            # u_oracle is a diagnostic here
            u_bar = math.nan
            singular += 1
        if oracle:
            u = clamp_input(u_bar, cfg.clamp)
        else:
            u, ctrl = step_controller(ctrl, est)
        if cfg.clamp is not None and math.isfinite(u_bar) and u_bar != clamp_input(u_bar, cfg.clamp):
            saturated += 1

        z_tilde = z.copy()
        z_tilde[0] -= r
        e_u = input_error(plant, K, z, u, r)
        Vz = cfg.design.V(z_tilde)
        ready = isinstance(est, Estimate)
        rec.add(
            k=k,
            t=t,
            z=z.copy(),
            y=y,
            d=d,
            z_hat=est.full if ready else nan_hat,
            u=u,
            v=virtual_input(K, est.z_hat) if ready else math.nan,
            e_u=e_u,
            Vz=Vz,
            Veu=e_u * e_u,
            W=Vz + e_u * e_u,
            r=r,
            z_lift=plant.lifted(z, u_prev),
            u_oracle=u_bar,
        )

        if k == steps:
            break
        try:
            z = flow_exact(plant, z, u, cfg.T, cfg.substeps)
        except BlowUp as e:
            partial = rec.build(cfg, mode, changes, complete=False)
            logger.warning(f"[Simloop] {cfg.name} blew up at k={k} t={t:.6g}: {e}")
            raise BlowUp(f"blow-up at k={k}, t={t:.6g}: {e}", state=e.state, trace=partial) from e
        u_prev = u

    if saturated:
        logger.warning(f"[Simloop] {cfg.name} cancelling input outside the clamp on {saturated} steps")
    if singular:
        logger.warning(f"[Simloop] {cfg.name} input gain below the singular threshold on {singular} steps; u_oracle recorded as nan")
    return rec.build(cfg, mode, changes, complete=True)


def run(config: LoopConfig) -> Trace:
    """Data-driven loop: the controller only sees the estimator's output."""
    return _simulate(config, oracle=False)


def run_oracle(config: LoopConfig) -> Trace:
    """Known-model baseline: the input is the cancelling input on the true state."""
    return _simulate(config, oracle=True)


def estimation_errors(trace: Trace) -> np.ndarray:
    """|(z_tilde, z_lift) - z_hat| for every record after the transient."""
    truth = np.column_stack([trace.z_tilde, trace.z_lift])
    err = np.linalg.norm(truth - trace.z_hat, axis=1)
    return err[trace.skip:]
