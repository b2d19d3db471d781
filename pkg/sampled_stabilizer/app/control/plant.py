"""
Plant
SISO plants in feedback-linearized normal form, integrated with fixed-step RK4
under a piecewise-constant input:

    dz_i/dt = z_{i+1}   (i < n)
    dz_n/dt = alpha(z) + beta(z) * u

Plants are plain picklable objects so sweeps can ship them to worker processes.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from app.config import BLOWUP_INFLATION, MIN_SUBSTEPS, SINGULAR_GAIN_EPS, SUBSTEP_MAX_DT
from app.control.errors import BlowUp, SingularGain

logger = logging.getLogger(__name__)

# grid density for the construction-time sign check
SIGN_CHECK_POINTS = 5


@dataclass(frozen=True, eq=False)
class OperatingBox:
    """Axis-aligned state bounds; must contain the origin in its interior."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError(f"box bounds differ in length: {lower.shape} vs {upper.shape}")
        if not np.all(lower < upper):
            raise ValueError("box needs lower < upper componentwise")
        if not (np.all(lower < 0.0) and np.all(upper > 0.0)):
            raise ValueError("box must contain the origin in its interior")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def symmetric(cls, half_widths: Sequence[float]) -> "OperatingBox":
        h = np.asarray(half_widths, dtype=float)
        return cls(lower=-h, upper=h)

    @property
    def dim(self) -> int:
        return int(self.lower.shape[0])

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(np.isfinite(z)) and np.all(z >= self.lower) and np.all(z <= self.upper))

    def inflated(self, factor: float = BLOWUP_INFLATION) -> "OperatingBox":
        # scaled about the origin
        return OperatingBox(lower=self.lower * factor, upper=self.upper * factor)

    def grid(self, points_per_axis: int) -> np.ndarray:
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)))


@dataclass(frozen=True)
class NormalFormPlant:
    """
    Base plant. Subclasses provide alpha(z) and beta(z).

    beta_sign is declared, never inferred; construction spot-checks
    beta(z) * beta_sign > 0 on a grid over the box.
    """

    n: int
    box: OperatingBox
    beta_sign: int = 1
    name: str = "plant"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"relative degree must be positive, got {self.n}")
        if self.box.dim != self.n:
            raise ValueError(f"box has dimension {self.box.dim}, plant has n={self.n}")
        if self.beta_sign not in (1, -1):
            raise ValueError(f"beta_sign must be +1 or -1, got {self.beta_sign}")
        self._check_on_box()

    def alpha(self, z: np.ndarray) -> float:
        raise NotImplementedError

    def beta(self, z: np.ndarray) -> float:
        raise NotImplementedError

    def _check_on_box(self) -> None:
        for z in self.box.grid(SIGN_CHECK_POINTS):
            a, b = self.alpha(z), self.beta(z)
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError(f"[{self.name}] alpha/beta not finite at z={z.tolist()}")
            if b * self.beta_sign <= 0.0:
                raise ValueError(
                    f"[{self.name}] beta={b:.6g} at z={z.tolist()} contradicts declared sign {self.beta_sign:+d}"
                )

    def lifted(self, z, u: float) -> float:
        """The lifted coordinate alpha(z) + beta(z) u."""
        z = np.asarray(z, dtype=float)
        return self.alpha(z) + self.beta(z) * u

    def vector_field(self, z: np.ndarray, u: float) -> np.ndarray:
        dz = np.empty(self.n)
        dz[:-1] = z[1:]
        dz[-1] = self.alpha(z) + self.beta(z) * u
        return dz

    def beta_bounds(self, points_per_axis: int = 9) -> Tuple[float, float]:
        """(min, max) of |beta| sampled on a grid over the box."""
        mags = [abs(self.beta(z)) for z in self.box.grid(points_per_axis)]
        return float(min(mags)), float(max(mags))


@dataclass(frozen=True)
class ConstantPlant(NormalFormPlant):
    """alpha and beta constant: the lifted linear model is exact."""

    alpha0: float = 0.0
    beta0: float = 1.0

    def alpha(self, z: np.ndarray) -> float:
        return self.alpha0

    def beta(self, z: np.ndarray) -> float:
        return self.beta0


@dataclass(frozen=True)
class DronePlant(NormalFormPlant):
    """
    Emulated altitude channel.

    alpha(z) = alpha0 + alpha_amp * sin(z1^2)
    beta(z)  = thrust_ratio - z1^4 / 2
    """

    alpha0: float = -5.0
    alpha_amp: float = 2.0
    thrust_ratio: float = 18.0

    def alpha(self, z: np.ndarray) -> float:
        return self.alpha0 + self.alpha_amp * math.sin(z[0] ** 2)

    def beta(self, z: np.ndarray) -> float:
        return self.thrust_ratio - 0.5 * z[0] ** 4


@dataclass(frozen=True)
class ChainPlant(NormalFormPlant):
    """Generic order-n family: alpha(z) = a sin(z1), beta(z) = b0 + b2 z1^2."""

    a: float = 0.5
    b0: float = 2.0
    b2: float = 0.1

    def alpha(self, z: np.ndarray) -> float:
        return self.a * math.sin(z[0])

    def beta(self, z: np.ndarray) -> float:
        return self.b0 + self.b2 * z[0] ** 2


@dataclass(frozen=True)
class LinearDriftPlant(NormalFormPlant):
    """alpha(z) = c . z, beta constant."""

    drift: Tuple[float, ...] = (1.0,)
    beta0: float = 1.0

    def alpha(self, z: np.ndarray) -> float:
        c = np.zeros(self.n)
        c[: len(self.drift)] = self.drift[: self.n]
        return float(c @ z)

    def beta(self, z: np.ndarray) -> float:
        return self.beta0


@dataclass(frozen=True)
class FunctionPlant(NormalFormPlant):
    """Wraps arbitrary callables. Not picklable with lambdas; keep to in-process use."""

    alpha_fn: Optional[Callable[[np.ndarray], float]] = field(default=None, compare=False)
    beta_fn: Optional[Callable[[np.ndarray], float]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.alpha_fn is None or self.beta_fn is None:
            raise ValueError("FunctionPlant needs both alpha_fn and beta_fn")
        super().__post_init__()

    def alpha(self, z: np.ndarray) -> float:
        return float(self.alpha_fn(z))

    def beta(self, z: np.ndarray) -> float:
        return float(self.beta_fn(z))


def default_substeps(T: float) -> int:
    return max(MIN_SUBSTEPS, int(math.ceil(T / SUBSTEP_MAX_DT - 1e-9)))


def _guard(plant: NormalFormPlant, limit: OperatingBox, z: np.ndarray, where: str) -> None:
    if not limit.contains(z):
        raise BlowUp(f"[{plant.name}] state left the inflated box {where}: z={z.tolist()}", state=z.copy())


def flow_exact(
    plant: NormalFormPlant,
    z0,
    u: float,
    T: float,
    substeps: Optional[int] = None,
) -> np.ndarray:
    """
    State after holding input u for T seconds, by classical RK4.

    Every stage state is checked against the box inflated by BLOWUP_INFLATION.
    """
    if not T > 0.0:
        raise ValueError(f"T must be positive, got {T}")
    steps = default_substeps(T) if substeps is None else int(substeps)
    if steps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if not math.isfinite(u):
        raise BlowUp(f"[{plant.name}] non-finite input u={u}")

    z = np.array(z0, dtype=float).reshape(-1)
    if z.shape[0] != plant.n:
        raise ValueError(f"z0 has {z.shape[0]} entries, plant has n={plant.n}")

    limit = plant.box.inflated()
    _guard(plant, limit, z, "before integration")

    h = T / steps
    f = plant.vector_field
    for _ in range(steps):
        k1 = f(z, u)
        zk = z + 0.5 * h * k1
        _guard(plant, limit, zk, "at stage 2")
        k2 = f(zk, u)
        zk = z + 0.5 * h * k2
        _guard(plant, limit, zk, "at stage 3")
        k3 = f(zk, u)
        zk = z + h * k3
        _guard(plant, limit, zk, "at stage 4")
        k4 = f(zk, u)
        z = z + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        _guard(plant, limit, z, "after substep")
    return z


def equilibrium_input(plant: NormalFormPlant) -> float:
    """u0 = -alpha(0) / beta(0)."""
    zero = np.zeros(plant.n)
    b = plant.beta(zero)
    if abs(b) < SINGULAR_GAIN_EPS:
        raise SingularGain(f"[{plant.name}] |beta(0)| = {abs(b):.3e} is below {SINGULAR_GAIN_EPS:.0e}")
    return -plant.alpha(zero) / b
