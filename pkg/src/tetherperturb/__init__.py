"""Three-tether planar perturbation simulator with gait-synchronised warnings."""
from ._accel import USE_NUMBA
from .analysis import (
    DisplacementObservation,
    LmeFit,
    extract_displacement,
    fit_lme,
    impulse_summary,
    summarize_boxplot,
)
from .core import (
    ForceCommand,
    Geometry,
    PlanarForce,
    TetherAngles,
    TetherTensionSet,
    allocate_tensions,
    load_geometry,
    min_nominal_tension,
    natural_frequency,
    resultant_force,
    tether_angles,
)
from .drivetrain import (
    CommandProfile,
    ControllerGains,
    ForceTrace,
    PlantParams,
    StepMetrics,
    bode,
    fit_damping,
    simulate_force,
    step_metrics,
    transfer_function,
)
from .gait import (
    GaitEvent,
    MarkerFrame,
    MarkerStream,
    StanceDetector,
    WarningSpec,
    detect_stance,
    generate_gait,
    predict_next_stance,
    schedule_warning,
)
from .orchestrator import (
    SessionConfig,
    TrialRecord,
    TrialSpec,
    build_trial_plan,
    run_session,
    simulate_study,
)
from .runner import RunnerParams, RunnerState, runner_step
from .workspace import is_omnidirectional_feasible, workspace_map

__version__ = "0.1.0"
