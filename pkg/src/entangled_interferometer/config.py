"""JSON run configuration: strict schema, then domain-type validation.

Unknown keys are rejected everywhere.  Every section is optional at load
time; subcommands check for the sections they need.  Loading converts each
present section into its domain type, so invariant violations surface here
before any computation starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import DomainError
from .geometry import Constellation, NullCondition, NullConditionSet, SolverOptions
from .link_budget import LinkBudgetConfig
from .montecarlo import Beam, Channel, DetectionGraph, Detector, build_default_graph
from .optics import OpticalTriplet
from .phase_stats import PairCountModel
from .sensitivity import SensitivityInputs, axis_values

Pos = Annotated[float, Field(gt=0)]
NonNeg = Annotated[float, Field(ge=0)]


def _unit_interval(value: float) -> float:
    if not 0 < value <= 1:
        raise ValueError("must lie in the interval (0, 1]")
    return value


# Checked by a validator so the error names the whole interval.
Unit = Annotated[float, AfterValidator(_unit_interval),
                 Field(json_schema_extra={"exclusiveMinimum": 0, "maximum": 1})]
Triple = Annotated[list[float], Field(min_length=3, max_length=3)]


class ConfigError(Exception):
    """Base for configuration problems; always a usage error at the CLI."""


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TripletSection(_Strict):
    lambda_pump: Pos
    lambda_signal: Pos
    lambda_idler: Pos


class LinkBudgetSection(_Strict):
    laser_power: Pos
    tx_aperture: Pos
    rx_aperture_sat: Pos
    uplink_divergence: Annotated[float, Field(gt=0, lt=1)]
    downlink_divergence: Annotated[float, Field(gt=0, lt=1)]
    distance: Pos
    etalon_q: Annotated[float, Field(ge=1)]
    spdc_efficiency: Unit
    photon_rate_pump: Pos | None = None


class ConstellationSection(_Strict):
    arm_lengths: Triple
    instrument_phases_cross: Annotated[list[float], Field(min_length=6, max_length=6)]
    instrument_phases_self: Triple
    integers_cross: Annotated[list[int], Field(min_length=6, max_length=6)]
    integers_self: Annotated[list[int], Field(min_length=3, max_length=3)]
    length_offsets: Triple = [0.0, 0.0, 0.0]
    length_band: Annotated[list[float], Field(min_length=2, max_length=2)] = [1e6, 1e9]


class NullConditionEntry(_Strict):
    kind: Literal["cross", "self", "pump"]
    arms: list[int] = []
    signs: Annotated[list[int], Field(min_length=2, max_length=2)] | None = None
    measured: float = 0.0


class NullConditionsSection(_Strict):
    pump_wavelength: Pos
    reference_length: Pos | None = None
    conditions: list[NullConditionEntry]


class SolverSection(_Strict):
    max_iter: Annotated[int, Field(ge=1)] = 200
    step_tol: Pos = 1e-14
    residual_tol: Pos = 1e-12
    jacobian: Literal["numeric", "analytic"] = "numeric"
    phase_sigma: Pos | None = None
    poor_fit_rms: Pos = 1e-2


class SyntheticSection(_Strict):
    """Generate a consistent instance, add phase noise, then solve it."""

    arm_lengths: Triple
    guess_offsets: Triple
    delta_guess_offset: float
    phase_noise: NonNeg
    trials: Annotated[int, Field(ge=1)] = 1


class GeometrySection(_Strict):
    # overrides the top-level triplet for the geometry pipeline only
    triplet: TripletSection | None = None
    solver: SolverSection = SolverSection()
    constellation: ConstellationSection | None = None
    null_conditions: NullConditionsSection | None = None
    synthetic: SyntheticSection | None = None

    @model_validator(mode="after")
    def _one_mode(self):
        explicit = self.constellation is not None or self.null_conditions is not None
        if explicit and self.synthetic is not None:
            raise ValueError("give either constellation+null_conditions or synthetic, not both")
        if explicit and (self.constellation is None or self.null_conditions is None):
            raise ValueError("explicit geometry needs both constellation and null_conditions")
        if not explicit and self.synthetic is None:
            raise ValueError("geometry needs constellation+null_conditions or synthetic")
        return self


class PairModelSection(_Strict):
    mean_pairs: Pos
    eta1: Unit
    eta2: Unit
    shifter_angle: float
    covariance: NonNeg


class BeamEntry(_Strict):
    label: str
    satellite: Annotated[int, Field(ge=1)]
    arm: Literal["signal", "idler"]


class DetectorEntry(_Strict):
    label: str
    beam: str


class ChannelEntry(_Strict):
    label: str
    detectors: list[str] = []
    polarity: Literal["coincidence", "anticoincidence", "parity"] = "coincidence"
    combine: list[str] = []


class GraphSection(_Strict):
    beams: list[BeamEntry]
    detectors: list[DetectorEntry]
    channels: list[ChannelEntry]
    designated: Annotated[list[str], Field(min_length=2, max_length=2)] | None = None


def _reserved_off(value: float) -> float:
    if value != 0:
        raise ValueError("is reserved and not modelled; only 0 (off) is accepted")
    return value


Reserved = Annotated[float, AfterValidator(_reserved_off), Field(json_schema_extra={"const": 0})]


class SimulationSection(_Strict):
    windows: Annotated[int, Field(ge=1)]
    workers: Annotated[int, Field(ge=1)] = 1
    # detector imperfections kept in the schema for later use, always off
    dark_count_rate: Reserved = 0.0
    dead_time: Reserved = 0.0


class SensitivitySection(_Strict):
    mean_pairs: Pos
    eta1: Unit
    eta2: Unit
    conversion_length: Pos
    arm_length: Pos
    bandwidth: Pos
    accumulation_time: Pos


class AxisSpec(_Strict):
    start: float
    stop: float
    num: Annotated[int, Field(ge=1)]
    scale: Literal["linear", "log"] = "linear"


SweepAxis = Union[Annotated[list[float], Field(min_length=1)], AxisSpec]


class SweepSection(_Strict):
    axes: Annotated[dict[str, SweepAxis], Field(min_length=1)]


class RunConfigModel(_Strict):
    seed: Annotated[int, Field(ge=0, le=2**64 - 1)] | None = None
    output_dir: str | None = None
    triplet: TripletSection | None = None
    link_budget: LinkBudgetSection | None = None
    geometry: GeometrySection | None = None
    pair_model: PairModelSection | None = None
    detection_graph: Literal["default"] | GraphSection | None = None
    simulation: SimulationSection | None = None
    sensitivity: SensitivitySection | None = None
    sweep: SweepSection | None = None


@dataclass(frozen=True)
class GeometryConfig:
    triplet: OpticalTriplet
    solver: SolverOptions
    constellation: Constellation | None = None
    null_conditions: NullConditionSet | None = None
    synthetic: SyntheticSection | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int | None
    output_dir: str | None
    triplet: OpticalTriplet | None
    link_budget: LinkBudgetConfig | None
    geometry: GeometryConfig | None
    pair_model: PairCountModel | None
    detection_graph: DetectionGraph | None
    simulation: SimulationSection | None
    sensitivity: SensitivityInputs | None
    sweep: dict[str, list[float]] | None
    source: Path | None = None


def _section(name: str, build):
    try:
        return build()
    except DomainError as exc:
        raise ConfigValidationError(f"{name}: {exc}") from exc


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        ctx = err.get("ctx") or {}
        limits = ", ".join(f"{k}={v}" for k, v in ctx.items() if k in ("gt", "ge", "lt", "le"))
        constraint = f" [constraint {limits}]" if limits else ""
        lines.append(f"{loc}: {err['msg']}{constraint} (got {err.get('input')!r})")
    return "invalid configuration:\n  " + "\n  ".join(lines)


def _graph(section: GraphSection) -> DetectionGraph:
    return DetectionGraph(
        beams=tuple(Beam(b.label, b.satellite, b.arm) for b in section.beams),
        detectors=tuple(Detector(d.label, d.beam) for d in section.detectors),
        channels=tuple(Channel(c.label, tuple(c.detectors), c.polarity, tuple(c.combine))
                       for c in section.channels),
        designated=tuple(section.designated) if section.designated else None,
    )


def _constellation(s: ConstellationSection) -> Constellation:
    return Constellation(
        arm_lengths=tuple(s.arm_lengths),
        instrument_phases_cross=tuple(s.instrument_phases_cross),
        instrument_phases_self=tuple(s.instrument_phases_self),
        integers_cross=tuple(s.integers_cross),
        integers_self=tuple(s.integers_self),
        length_offsets=tuple(s.length_offsets),
        length_band=tuple(s.length_band),
    )


def _null_conditions(s: NullConditionsSection) -> NullConditionSet:
    conds = tuple(NullCondition(c.kind, tuple(c.arms), tuple(c.signs) if c.signs else None, c.measured)
                  for c in s.conditions)
    return NullConditionSet(conds, s.pump_wavelength, s.reference_length)


def from_model(model: RunConfigModel, source: Path | None = None) -> RunConfig:
    triplet = None
    if model.triplet is not None:
        triplet = _section("triplet", lambda: OpticalTriplet(**model.triplet.model_dump()))

    link = None
    if model.link_budget is not None:
        if triplet is None:
            raise ConfigValidationError("link_budget: requires the triplet section")
        link = _section("link_budget",
                        lambda: LinkBudgetConfig(triplet=triplet, **model.link_budget.model_dump()))

    geometry = None
    if model.geometry is not None:
        g = model.geometry
        if g.triplet is not None:
            g_triplet = _section("geometry.triplet", lambda: OpticalTriplet(**g.triplet.model_dump()))
        elif triplet is not None:
            g_triplet = triplet
        else:
            raise ConfigValidationError("geometry: requires geometry.triplet or the triplet section")
        solver = _section("geometry.solver", lambda: SolverOptions(**g.solver.model_dump()))
        if g.synthetic is not None:
            geometry = GeometryConfig(g_triplet, solver, synthetic=g.synthetic)
        else:
            geometry = GeometryConfig(
                g_triplet, solver,
                constellation=_section("geometry.constellation",
                                       lambda: _constellation(g.constellation)),
                null_conditions=_section("geometry.null_conditions",
                                         lambda: _null_conditions(g.null_conditions)),
            )

    pair = None
    if model.pair_model is not None:
        pair = _section("pair_model", lambda: PairCountModel(**model.pair_model.model_dump()))

    graph = None
    if model.detection_graph == "default":
        graph = build_default_graph()
    elif model.detection_graph is not None:
        graph = _section("detection_graph", lambda: _graph(model.detection_graph))

    sens = None
    if model.sensitivity is not None:
        sens = _section("sensitivity", lambda: SensitivityInputs(**model.sensitivity.model_dump()))

    sweep = None
    if model.sweep is not None:
        sweep = {}
        for name, axis in model.sweep.axes.items():
            if isinstance(axis, AxisSpec):
                sweep[name] = _section(f"sweep.axes.{name}",
                                       lambda a=axis: axis_values(a.start, a.stop, a.num, a.scale))
            else:
                sweep[name] = list(axis)

    return RunConfig(
        seed=model.seed,
        output_dir=model.output_dir,
        triplet=triplet,
        link_budget=link,
        geometry=geometry,
        pair_model=pair,
        detection_graph=graph,
        simulation=model.simulation,
        sensitivity=sens,
        sweep=sweep,
        source=source,
    )


def parse_config(text: str, source: Path | None = None) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigParseError(
            f"{source or '<config>'}: JSON parse error at byte offset {offset} "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    try:
        model = RunConfigModel.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(_format_validation(exc)) from exc
    return from_model(model, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text, path)


def config_schema() -> dict:
    return RunConfigModel.model_json_schema()


def bundled_path(name: str = "paper.json") -> Path:
    return Path(__file__).with_name("data") / name
