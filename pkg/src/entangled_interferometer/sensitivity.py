"""Phase metric to displacement to strain, and parameter sweeps.

The strain relation is applied literally as
``strain = (dL / L) * sqrt(bandwidth * 1 s) / (accumulation_time / 1 s)``,
with bandwidth in Hz and time in seconds.  The phase metric is carried as a
bare dimensionless number; it is not claimed to be rad or rad^2.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError
from .phase_stats import entangled_phase_variance


def default_conversion_length(pump_wavelength: float) -> float:
    return pump_wavelength / (4 * math.pi)


def phase_to_displacement(phase_metric: float, conversion_length: float | None = None, *,
                          pump_wavelength: float | None = None) -> float:
    """Displacement ``phase_metric * conversion_length``.

    Without an explicit ``conversion_length`` the pump quarter-wave scale
    ``lambda_pump / (4 pi)`` is used, which needs ``pump_wavelength``.
    """
    if conversion_length is None:
        if pump_wavelength is None:
            raise DomainError("give conversion_length or pump_wavelength")
        conversion_length = default_conversion_length(pump_wavelength)
    if phase_metric < 0 or conversion_length < 0:
        raise DomainError("phase_metric and conversion_length must be non-negative")
    return phase_metric * conversion_length


def strain_sensitivity(displacement: float, arm_length: float, bandwidth: float,
                       accumulation_time: float) -> float:
    if not (arm_length > 0 and bandwidth > 0 and accumulation_time > 0):
        raise DomainError("arm_length, bandwidth and accumulation_time must be positive")
    return displacement / arm_length * math.sqrt(bandwidth) / accumulation_time


@dataclass(frozen=True)
class SensitivityInputs:
    """Everything needed to produce one report row."""

    mean_pairs: float
    conversion_length: float
    arm_length: float
    bandwidth: float
    accumulation_time: float
    eta1: float = 1.0
    eta2: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{f.name} must be positive and finite, got {value!r}")
        if self.eta1 > 1 or self.eta2 > 1:
            raise DomainError("efficiencies must not exceed 1")


@dataclass(frozen=True)
class SensitivityReport:
    mean_pairs: float
    eta1: float
    eta2: float
    phase_metric: float
    conversion_length: float
    displacement: float
    arm_length: float
    bandwidth: float
    accumulation_time: float
    strain: float

    def as_row(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sensitivity_report(inp: SensitivityInputs) -> SensitivityReport:
    metric = entangled_phase_variance(inp.eta1 * inp.mean_pairs, inp.eta2 * inp.mean_pairs)
    dl = phase_to_displacement(metric, inp.conversion_length)
    strain = strain_sensitivity(dl, inp.arm_length, inp.bandwidth, inp.accumulation_time)
    return SensitivityReport(
        mean_pairs=inp.mean_pairs,
        eta1=inp.eta1,
        eta2=inp.eta2,
        phase_metric=metric,
        conversion_length=inp.conversion_length,
        displacement=dl,
        arm_length=inp.arm_length,
        bandwidth=inp.bandwidth,
        accumulation_time=inp.accumulation_time,
        strain=strain,
    )


SWEEPABLE = tuple(f.name for f in fields(SensitivityInputs))


def sensitivity_sweep(base: SensitivityInputs,
                      grid: Mapping[str, Sequence[float]]) -> list[SensitivityReport]:
    """One report per point of the Cartesian product of ``grid``.

    Rows come out in ``itertools.product`` order over the axes as given, so
    the last axis varies fastest.  An ``eta`` axis sets both efficiencies.
    """
    if not grid:
        raise DomainError("sweep grid must have at least one axis")
    axes: list[tuple[str, list[float]]] = []
    for name, values in grid.items():
        if name != "eta" and name not in SWEEPABLE:
            raise DomainError(f"unknown sweep axis {name!r}; expected one of {SWEEPABLE + ('eta',)}")
        values = list(values)
        if not values:
            raise DomainError(f"sweep axis {name!r} is empty")
        axes.append((name, values))

    rows = []
    for point in itertools.product(*(v for _, v in axes)):
        changes: dict[str, float] = {}
        for (name, _), value in zip(axes, point):
            if name == "eta":
                changes["eta1"] = changes["eta2"] = value
            else:
                changes[name] = value
        rows.append(sensitivity_report(replace(base, **changes)))
    return rows


def axis_values(start: float, stop: float, num: int, scale: str = "linear") -> list[float]:
    """Evenly spaced sweep axis; ``scale='log'`` spaces the values geometrically."""
    if num < 1:
        raise DomainError("num must be >= 1")
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise DomainError("log axis bounds must be positive")
        return np.geomspace(start, stop, num).tolist()
    if scale != "linear":
        raise DomainError(f"unknown axis scale {scale!r}")
    return np.linspace(start, stop, num).tolist()
