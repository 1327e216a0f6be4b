"""skirmish: a procedurally generated micromanagement combat simulator.

Self-contained two-team skirmishes on a continuous 2D map: per-episode
team compositions and start positions are sampled procedurally, combat is
deterministic given a seed, and the package ships the diagnostic tooling
(open-loop policies, feature-mask regression, replay verification) used to
study what information policies actually need.
"""

__version__ = "0.1.0"

from .engine import (
    RewardConfig,
    StepEvents,
    StepResult,
    UnitState,
    WorldState,
    action_mask,
    available_actions,
    canonical_bytes,
    compute_reward,
    init_world,
    relaxed_actions,
    step,
    world_hash,
)
from .epo import EpoVisibilityTable
from .episodes import (
    EpisodeRecord,
    EvalResult,
    ReplayReport,
    evaluate,
    load_records,
    replay,
    run_episode,
    save_records,
)
from .errors import (
    ConfigError,
    InvalidActionError,
    LayoutError,
    ReplayDivergence,
    ScenarioError,
    SkirmishError,
    StatTableError,
)
from .observation import (
    MASK_IDS,
    MASKS,
    FeatureMask,
    ObservationLayout,
    StateLayout,
    apply_mask,
    build_observation,
    build_observations,
    build_state,
    observation_layout,
    state_layout,
)
from .policies import (
    FocusFirePolicy,
    KitePolicy,
    OpenLoopPolicy,
    Policy,
    RandomPolicy,
    fit_openloop,
    get_policy,
)
from .regression import (
    RegressionDataset,
    RegressionMetrics,
    RegressorConfig,
    export_regression_dataset,
    masked_regression,
    mc_returns,
    run_masked_regressions,
)
from .scenario import (
    RaceConfig,
    ScenarioInstance,
    ScenarioSpec,
    SpawnKind,
    TeamGen,
    default_race_config,
    find_scenario,
    register_position_distribution,
    register_team_distribution,
    registry,
    sample_enemy_team,
    sample_instance,
    sample_positions,
    sample_team,
)
from .units import StatTable, UnitTypeSpec, default_stat_table, load_stat_table
