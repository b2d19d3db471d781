"""
Estimator
Finite-window least-squares state estimation from sampled outputs.

The window Y(k) = (y(k), y(k-1), ..., y(k-rho+1)) satisfies Y = O z(k) on the
lifted chain, where row j of O is C A^{-j}. The estimate is z_hat = pinv(O) Y,
including the lifted coordinate z_{n+1} ~ alpha + beta u.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import LSQ_COND_LIMIT
from app.control.errors import IllConditioned, SingularSystem
from app.control.numerics import pseudo_inverse

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorConfig:
    n: int
    rho: int
    T: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"relative degree must be positive, got {self.n}")
        if self.rho < self.n + 1:
            raise ValueError(f"window length rho={self.rho} must be at least n+1={self.n + 1}")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive and finite, got {self.T}")


@dataclass(frozen=True)
class ObservabilityStack:
    """O (rho x (n+1)) and its least-squares left inverse."""

    cfg: EstimatorConfig
    O: np.ndarray
    pinv: np.ndarray

    @property
    def noise_gain(self) -> float:
        """sqrt(trace(pinv pinv^T)): rms estimate error per unit-variance output noise."""
        return float(np.sqrt(np.trace(self.pinv @ self.pinv.T)))


@dataclass(frozen=True)
class Estimate:
    z_hat: np.ndarray  # first n entries
    z_lift_hat: float  # estimate of alpha + beta u
    k: int

    @property
    def full(self) -> np.ndarray:
        return np.append(self.z_hat, self.z_lift_hat)


class NotReady:
    """Returned while the output window is still filling."""

    _instance: Optional["NotReady"] = None

    def __new__(cls) -> "NotReady":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NOT_READY"

    def __reduce__(self):
        return (NotReady, ())


NOT_READY = NotReady()

EstimateOrNotReady = Union[Estimate, NotReady]


def normalized_stack(n: int, rho: int) -> np.ndarray:
    """O with T = 1 factored out: entry (j, i) = (-j)^i / i!."""
    O = np.empty((rho, n + 1))
    for j in range(rho):
        for i in range(n + 1):
            O[j, i] = (-j) ** i / math.factorial(i)
    return O


def build_stack(cfg: EstimatorConfig, cond_limit: Optional[float] = None) -> ObservabilityStack:
    """
    O = O_norm D with D = diag(T^i), so pinv(O) = D^{-1} pinv(O_norm).

    The T-free factor goes through the conditioning guard; the diagonal
    scaling is checked separately since its condition number is T^{-n}.
    """
    limit = LSQ_COND_LIMIT if cond_limit is None else cond_limit
    n, rho, T = cfg.n, cfg.rho, cfg.T

    scale = np.array([T ** i for i in range(n + 1)])
    spread = max(scale) / min(scale) if min(scale) > 0.0 else math.inf
    if not spread <= limit:
        raise IllConditioned(
            f"sample-time scaling T^{n} gives condition {spread:.3e} above {limit:.1e}", condition=spread
        )

    O_norm = normalized_stack(n, rho)
    try:
        pinv_norm = pseudo_inverse(O_norm, limit)
    except SingularSystem as e:
        raise IllConditioned(f"observability stack n={n} rho={rho}: {e}", condition=e.condition) from e

    O = O_norm * scale[np.newaxis, :]
    pinv = pinv_norm / scale[:, np.newaxis]
    logger.debug(f"[Estimator] stack n={n} rho={rho} T={T:g} noise_gain={np.sqrt(np.trace(pinv @ pinv.T)):.4g}")
    return ObservabilityStack(cfg=cfg, O=O, pinv=pinv)


def estimate(stack: ObservabilityStack, Y: Sequence[float], k: int = 0) -> Estimate:
    """Y ordered newest first: y(k), y(k-1), ..."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.shape[0] != stack.cfg.rho:
        raise ValueError(f"window has {Y.shape[0]} samples, expected rho={stack.cfg.rho}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("window contains non-finite samples")
    z = stack.pinv @ Y
    return Estimate(z_hat=z[:-1].copy(), z_lift_hat=float(z[-1]), k=k)


class OutputWindow:
    """Holds the last rho raw output samples."""

    def __init__(self, rho: int) -> None:
        self.rho = rho
        self._samples: Deque[float] = deque(maxlen=rho)

    def push(self, y: float) -> None:
        self._samples.appendleft(float(y))

    @property
    def ready(self) -> bool:
        return len(self._samples) == self.rho

    def vector(self, offset: float = 0.0) -> np.ndarray:
        return np.fromiter(self._samples, dtype=float, count=len(self._samples)) - offset


class WindowEstimator:
    """Stack plus window; one call per sample."""

    def __init__(self, cfg: EstimatorConfig, stack: Optional[ObservabilityStack] = None) -> None:
        self.cfg = cfg
        self.stack = stack or build_stack(cfg)
        self.window = OutputWindow(cfg.rho)

    def step(self, k: int, y: float, offset: float = 0.0) -> EstimateOrNotReady:
        """Push y(k), then estimate on the window shifted by offset (the current setpoint)."""
        self.window.push(y)
        if not self.window.ready:
            return NOT_READY
        return estimate(self.stack, self.window.vector(offset), k)


class UniformNoise:
    """i.i.d. uniform samples on [-d_bar, d_bar] from a seeded generator."""

    def __init__(self, d_bar: float, seed: int) -> None:
        if d_bar < 0.0:
            raise ValueError(f"d_bar must be non-negative, got {d_bar}")
        self.d_bar = d_bar
        self.rng = np.random.default_rng(seed)

    def sample(self) -> float:
        if self.d_bar == 0.0:
            return 0.0
        return float(self.rng.uniform(-self.d_bar, self.d_bar))


def estimate_series(
    times: Sequence[float],
    outputs: Sequence[float],
    n: int,
    rho: int,
) -> List[Tuple[float, np.ndarray]]:
    """
    Offline differentiator over a uniformly sampled (t, y) series.

    Returns (t, z_hat_full) for every sample once the window is full.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(outputs, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and outputs must be 1-D and equally long")
    if t.shape[0] < rho:
        raise ValueError(f"need at least rho={rho} samples, got {t.shape[0]}")
    steps = np.diff(t)
    T = float(steps.mean())
    if not np.allclose(steps, T, rtol=1e-6, atol=0.0):
        raise ValueError("samples are not uniformly spaced")

    est = WindowEstimator(EstimatorConfig(n=n, rho=rho, T=T))
    out: List[Tuple[float, np.ndarray]] = []
    for k, (tk, yk) in enumerate(zip(t, y)):
        result = est.step(k, yk)
        if isinstance(result, Estimate):
            out.append((float(tk), result.full))
    return out


@dataclass(frozen=True)
class EstimationErrorReport:
    T_list: List[float]
    clean_errors: List[float]
    noisy_errors: List[float]
    slope_clean: float
    slope_noise: float
    d_bar: float


def _est_error_job(item: Tuple[object, float]) -> Tuple[float, float]:
    """(clean sup error, noisy sup error over the second half) for one sample time."""
    from app.control.simloop import estimation_errors, run

    cfg, d_bar = item
    clean = estimation_errors(run(cfg.replace(d_bar=0.0)))
    noisy = estimation_errors(run(cfg.replace(d_bar=d_bar)))
    return float(np.max(clean)), float(np.max(noisy[len(noisy) // 2:]))


def estimation_error_study(
    base,
    T_list: Sequence[float],
    d_bar: float,
    horizon: Optional[float] = None,
    scale_gamma: bool = True,
    mapper: Optional[Callable[[Callable, Sequence], List]] = None,
) -> EstimationErrorReport:
    """
    Closed-loop estimation error vs T, clean and with noise of bound d_bar.

    base is a simloop.LoopConfig. With scale_gamma the adaptation rate is
    scaled with T so every run shares the same gamma / T. mapper(fn, items)
    runs the per-T jobs, sequentially when omitted.
    """
    from app.control.numerics import loglog_slope

    T_list = [float(T) for T in T_list]
    if len(T_list) < 4:
        raise ValueError(f"need at least 4 sample times, got {len(T_list)}")
    if max(T_list) / min(T_list) < 10.0 - 1e-9:
        raise ValueError("T_list must span at least one decade")
    if d_bar <= 0.0:
        raise ValueError("d_bar must be positive for the noisy branch")

    jobs = []
    for T in T_list:
        gamma = base.gamma * T / base.T if scale_gamma else base.gamma
        jobs.append((base.replace(T=T, gamma=gamma, horizon=horizon or base.horizon), d_bar))
    results = mapper(_est_error_job, jobs) if mapper is not None else [_est_error_job(j) for j in jobs]

    clean = [c for c, _ in results]
    noisy = [d for _, d in results]
    for T, c, d in zip(T_list, clean, noisy):
        logger.info(f"[Estimator/est-error] T={T:g} clean={c:.4g} noisy={d:.4g}")

    return EstimationErrorReport(
        T_list=T_list,
        clean_errors=clean,
        noisy_errors=noisy,
        slope_clean=loglog_slope(zip(T_list, clean)),
        slope_noise=loglog_slope(zip(T_list, noisy)),
        d_bar=d_bar,
    )
