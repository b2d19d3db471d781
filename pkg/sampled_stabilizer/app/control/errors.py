"""
Exception hierarchy shared by every control module.
"""

from __future__ import annotations

from typing import Any, List, Optional


class ControlError(Exception):
    """Base class for all domain errors raised by the package."""


class SingularSystem(ControlError):
    """Least-squares system is rank deficient or too badly conditioned."""

    def __init__(self, message: str, condition: float = float("inf")) -> None:
        super().__init__(message)
        self.condition = condition


class IllConditioned(SingularSystem):
    """Observability stack trips the conditioning guard (tiny T or large rho)."""


class NotHurwitz(ControlError):
    """Closed-loop matrix has an eigenvalue with non-negative real part."""


class LyapunovFailure(ControlError):
    """Lyapunov solution misses the residual bound or is not positive definite."""


class DegenerateFit(ControlError):
    """Regression points do not determine a slope."""


class BlowUp(ControlError):
    """State left the inflated operating box: finite escape or divergence."""

    def __init__(self, message: str, state: Any = None, trace: Any = None) -> None:
        super().__init__(message)
        self.state = state
        self.trace = trace


class SingularGain(ControlError):
    """|beta| too close to zero to invert."""


class UnstablePoles(ControlError):
    """Requested closed-loop poles are not strictly in the left half plane."""


class EstimateMissing(ControlError):
    """Active controller was stepped without a ready estimate."""


class UnknownPreset(ControlError):
    """Preset name is not registered."""


class UnknownStudy(ControlError):
    """Study name is not registered."""


class LengthMismatch(ControlError):
    """Two traces that must be aligned have different lengths."""


class ConfigError(ControlError):
    """Run configuration failed to load or validate."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  - {d}" for d in self.diagnostics)
