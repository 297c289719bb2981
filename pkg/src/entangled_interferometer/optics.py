"""Wavelength and wavevector bookkeeping for the down-conversion triplet.

The pump ("green") photon splits into a signal ("red", shorter wavelength)
and an idler ("nIR") photon.  Two derived wavenumbers drive every phase
equation in the geometry model:

    k     = (k_s + k_i) / 2
    delta = k_s - k_i

so that ``k + delta/2`` and ``k - delta/2`` are exactly the signal and idler
angular wavenumbers.  ``k`` is *not* forced to ``pi / lambda_pump``; any
mismatch is reported by :func:`conservation_residual` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class OpticalTriplet:
    """Pump, signal and idler vacuum wavelengths in metres."""

    lambda_pump: float
    lambda_signal: float
    lambda_idler: float

    def __post_init__(self):
        for name in ("lambda_pump", "lambda_signal", "lambda_idler"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite length, got {value!r}")
        if self.lambda_signal > self.lambda_idler:
            raise DomainError(
                "lambda_signal must not exceed lambda_idler "
                f"({self.lambda_signal!r} > {self.lambda_idler!r}); use OpticalTriplet.ordered"
            )

    @classmethod
    def ordered(cls, lambda_pump: float, lambda_a: float, lambda_b: float) -> "OpticalTriplet":
        """Build a triplet from two down-converted wavelengths given in any order."""
        lo, hi = sorted((lambda_a, lambda_b))
        return cls(lambda_pump, lo, hi)

    @property
    def pump_wavenumber(self) -> float:
        return TWO_PI / self.lambda_pump


@dataclass(frozen=True)
class WaveVectorPair:
    """Mean wavenumber ``k`` and signal-idler difference ``delta`` (rad/m)."""

    k: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.k) and math.isfinite(self.delta)):
            raise DomainError("wavenumbers must be finite")
        if self.k <= 0:
            raise DomainError(f"k must be positive, got {self.k!r}")
        if self.delta < 0:
            raise DomainError(f"delta must be non-negative, got {self.delta!r}")
        if self.k <= self.delta / 2:
            raise DomainError("k must exceed delta/2 so the idler wavenumber stays positive")

    @property
    def signal(self) -> float:
        return self.k + self.delta / 2

    @property
    def idler(self) -> float:
        return self.k - self.delta / 2


def wavevectors_from_triplet(t: OpticalTriplet) -> WaveVectorPair:
    if not isinstance(t, OpticalTriplet):
        raise DomainError("expected an OpticalTriplet")
    k_s = TWO_PI / t.lambda_signal
    k_i = TWO_PI / t.lambda_idler
    return WaveVectorPair(k=(k_s + k_i) / 2, delta=k_s - k_i)


def pump_locked_wavevectors(t: OpticalTriplet) -> WaveVectorPair:
    """Wavevectors with ``k`` pinned to half the pump wavenumber.

    This is the parametrisation the geometry solver uses: energy
    conservation fixes ``k`` while ``delta`` comes from the triplet.
    """
    return WaveVectorPair(k=math.pi / t.lambda_pump, delta=wavevectors_from_triplet(t).delta)


def conservation_residual(t: OpticalTriplet) -> float:
    """Relative energy-conservation violation; zero for an exact triplet.

    Positive means the pump photon carries more energy than the pair.
    """
    return 1.0 - t.lambda_pump * (1.0 / t.lambda_signal + 1.0 / t.lambda_idler)
