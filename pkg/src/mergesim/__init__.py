"""Microscopic highway-merge negotiation simulator and calibration toolkit.

Core pieces: road/actor/role primitives (scene), car-following and the
four-case merge projection (longitudinal), the politeness lane-change
baseline (mobil), the game-theoretic decision model (game), a fixed-step
engine with CSV logging (engine), merge-event extraction (extraction),
model calibration (calibration), published parameter presets (presets) and
synthetic data generators (synthetic).  The ``mergesim`` CLI fronts the
whole pipeline.
"""

from .calibration import (
    CalibrationDataError,
    OptimizationResult,
    OptimizationSpec,
    SuccessRates,
    behavior_cost,
    multistart_optimize,
    overall_cost,
    predict_event,
    split_dataset,
    success_rates,
)
from .engine import (
    ConfigError,
    RunMetrics,
    ScenarioConfig,
    World,
    lateral_profile,
    load_scenario_config,
    run_scenario,
    sample_lc_duration,
    write_trajectory_log,
)
from .extraction import (
    MergeEvent,
    TrajectoryFormatError,
    extract_lag0_events,
    load_event_dir,
    load_trajectory_log,
    write_event_files,
)
from .game import (
    Action,
    Decision,
    Equilibrium,
    MbrgtParams,
    alpha_from_density,
    beta_schedule,
    build_payoffs,
    drac,
    lemke_howson,
    mbrgt_decide,
    qre_probabilities,
    support_enumeration,
)
from .longitudinal import (
    DEFAULT_IDM,
    AccelProjection,
    IdmParams,
    idm_accel,
    mr_idm_accel,
    project_accelerations,
    project_role_states,
)
from .mobil import FollowerAccels, MobilParams, mobil_decide
from .presets import available_presets, load_preset, preset_strings, sample_behavior
from .scene import (
    ActorState,
    LaneTopology,
    RoleAssignment,
    assign_roles,
    bumper_gap,
)

__version__ = "0.1.0"
