"""Virtual nonlinear modal testing of friction-damped structures.

Reference nonlinear modes via multi-harmonic balance, simulated modal-test
campaigns (velocity feedback and PLL phase resonance, with exciter dynamics
and measurement noise), modal-property identification from the records, and
accuracy assessment against the reference.
"""

from .analysis import (
    BackboneInterpolant,
    CriticalLevelTable,
    SynthesizedFrf,
    critical_levels,
    drive_point_mobility_peak,
    interpolate_backbone,
    phase_lag_bias,
    responding_mode_map,
    schedule_from_reference,
    synthesize_frf,
)
from .beam import (
    BeamModel,
    BeamParams,
    ModalBasis,
    ModelError,
    assemble_beam,
    cantilever_analytic_frequencies,
    limit_models,
    linear_modes,
)
from .epmc import (
    BackboneCurve,
    BackbonePoint,
    ConvergenceError,
    HarmonicSolution,
    aft_force,
    power_balance,
    shooting_check,
    solve_backbone,
)
from .friction import (
    JenkinsState,
    cycle_jenkins_to_steady,
    dissipated_energy,
    evaluate_g,
    jenkins_force_series,
    jenkins_update,
)
from .identify import (
    IdentificationError,
    IdentifiedModalPoint,
    SensorModalSet,
    estimate_mass_matrix,
    extract_modal_point,
    fourier_coeffs,
    mac,
    make_sensor_set,
    refine_frequency,
)
from .rig import (
    ExciterParams,
    FeedbackConfig,
    MovingRms,
    NoiseConfig,
    NoiseStream,
    PhaseLockedLoop,
    PLLConfig,
    RigError,
    VelocityFeedback,
    WeightingMatrix,
    build_weighting,
    exciter_rhs,
    transfer_at_resonance,
)
from .scenario import (
    RunResult,
    ScenarioError,
    bundled_scenarios,
    compute_reference,
    emit_plotdata,
    load_scenario,
    reference_interpolant,
    run_scenario,
    synthesized_peak,
    top_centroid,
)
from .simulate import (
    Plant,
    Rig,
    SimConfig,
    SimulationError,
    SteadyStateRecord,
    TimeSeriesRecord,
    classify_response,
    detect_steady_state,
    energy_balance,
    run_backbone_experiment,
    run_pll_experiment,
    run_stepped_sine,
)

__version__ = "0.1.0"
