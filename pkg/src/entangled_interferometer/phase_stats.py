"""Number-difference variance and phase-noise algebra for two pair-locked modes.

The variance expressions are lower-bound models: the right-hand side of the
inequality for ``<(dN1 - dN2)^2>`` is taken as the model value, with
detector efficiencies ``eta1``, ``eta2`` and the phase-shifter angle ``phi``.

Two normalisations of the compensated phase variance are kept side by side
(:func:`a4_as_printed` and :func:`a2_chain_variance`) because they do not
agree; neither is preferred here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

ANGLE_CHECK_TOL = 1e-12


@dataclass(frozen=True)
class PairCountModel:
    """Mean pair number per mode and window, detection efficiencies, shifter angle.

    ``covariance`` is Cov(dN1, dN2) and is bounded by ``mean_pairs**2``.
    """

    mean_pairs: float
    eta1: float = 1.0
    eta2: float = 1.0
    shifter_angle: float = math.pi / 4
    covariance: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.mean_pairs) and self.mean_pairs > 0):
            raise DomainError(f"mean_pairs must be positive, got {self.mean_pairs!r}")
        for name in ("eta1", "eta2"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise DomainError(f"{name} must lie in (0, 1], got {value!r}")
        if not math.isfinite(self.shifter_angle):
            raise DomainError("shifter_angle must be finite")
        if not 0 <= self.covariance <= self.mean_pairs**2:
            raise DomainError(
                f"covariance must lie in [0, mean_pairs**2] = [0, {self.mean_pairs**2!r}], "
                f"got {self.covariance!r}"
            )

    @classmethod
    def max_correlated(cls, mean_pairs: float, eta1: float = 1.0, eta2: float = 1.0,
                       shifter_angle: float | None = None) -> "PairCountModel":
        """Model at the covariance cap, optionally at the compensating angle."""
        if shifter_angle is None:
            shifter_angle = optimal_shifter_angle(eta1, eta2)
        return cls(mean_pairs, eta1, eta2, shifter_angle, mean_pairs**2)


def number_diff_variance(m: PairCountModel) -> float:
    n = m.mean_pairs
    cov = min(m.covariance, n * n)
    c, s = math.cos(m.shifter_angle), math.sin(m.shifter_angle)
    e1, e2 = m.eta1, m.eta2
    return (e1 * n * (e1 * n + 1) * c * c
            + e2 * n * (e2 * n + 1) * s * s
            - 2 * e1 * e2 * cov * s * c)


def quadratic_coefficient(eta1: float, eta2: float, phi: float) -> float:
    """Coefficient of ``mean_pairs**2`` in the variance at the covariance cap."""
    c, s = math.cos(phi), math.sin(phi)
    return eta1 * eta1 * c * c + eta2 * eta2 * s * s - 2 * eta1 * eta2 * s * c


def optimal_shifter_angle(eta1: float, eta2: float) -> float:
    """Shifter angle in (0, pi/2) cancelling the quadratic noise term.

    Completing the square gives ``(eta1 cos phi - eta2 sin phi)**2``, so the
    root satisfies ``tan phi = eta1 / eta2``.
    """
    if not (0 < eta1 <= 1 and 0 < eta2 <= 1):
        raise DomainError(f"efficiencies must lie in (0, 1], got ({eta1!r}, {eta2!r})")
    phi = math.atan2(eta1, eta2)
    residual = quadratic_coefficient(eta1, eta2, phi)
    if abs(residual) >= ANGLE_CHECK_TOL:
        raise ArithmeticError(f"shifter angle check failed: coefficient {residual!r}")
    return phi


def phase_rms_from_number_variance(var_diff: float, mean_pairs: float) -> float:
    if var_diff < 0:
        raise DomainError(f"var_diff must be non-negative, got {var_diff!r}")
    if mean_pairs <= 0:
        raise DomainError(f"mean_pairs must be positive, got {mean_pairs!r}")
    return math.pi * math.sqrt(var_diff) / (2 * mean_pairs**1.5)


def entangled_phase_variance(n1: float, n2: float) -> float:
    """Two-channel phase metric ``1 / sqrt(n1 * n2)``."""
    if not (n1 > 0 and n2 > 0):
        raise DomainError(f"photon numbers must be positive, got ({n1!r}, {n2!r})")
    return 1.0 / math.sqrt(n1 * n2)


def a4_as_printed(mean_pairs: float) -> float:
    """Compensated phase variance in its printed form, ``pi / (4 N)``."""
    if mean_pairs <= 0:
        raise DomainError("mean_pairs must be positive")
    return math.pi / (4 * mean_pairs)


def a2_chain_variance(mean_pairs: float) -> float:
    """Square of the propagated rms with the compensated residual ``var = N``.

    Equals ``pi**2 / (4 N**2)``.
    """
    return phase_rms_from_number_variance(mean_pairs, mean_pairs) ** 2
