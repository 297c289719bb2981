"""Link budget, geometry recovery, phase statistics and coincidence Monte Carlo
for a three-satellite interferometer read out through entangled photon pairs."""

from .errors import AmbiguityError, ConvergenceError, DomainError, SearchBoundError
from .geometry import (
    Constellation,
    GeometrySolution,
    NullCondition,
    NullConditionSet,
    SolverOptions,
    forward_residuals,
    inject_gw,
    jacobian_rank,
    null_condition_jacobian,
    resolve_integers,
    solve_geometry,
    synthesize,
)
from .gf2 import gf2_rank
from .link_budget import (
    LinkBudgetConfig,
    LinkBudgetReport,
    capture_fraction,
    diffraction_divergence,
    divergence_penalty,
    run_chain,
)
from .montecarlo import (
    Beam,
    Channel,
    DetectionGraph,
    Detector,
    TrialBatch,
    build_default_graph,
    compare_with_analytic,
    independent_channel_count,
    simulate_windows,
)
from .optics import (
    OpticalTriplet,
    WaveVectorPair,
    conservation_residual,
    pump_locked_wavevectors,
    wavevectors_from_triplet,
)
from .phase_stats import (
    PairCountModel,
    a2_chain_variance,
    a4_as_printed,
    entangled_phase_variance,
    number_diff_variance,
    optimal_shifter_angle,
    phase_rms_from_number_variance,
)
from .sensitivity import (
    SensitivityInputs,
    SensitivityReport,
    phase_to_displacement,
    sensitivity_report,
    sensitivity_sweep,
    strain_sensitivity,
)

__version__ = "0.1.0"
