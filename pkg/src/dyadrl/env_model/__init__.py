"""Simulated dyad environment: clock, transitions, populations and calibration."""
from .batch import EnvNoise, FixedProbPolicy, Trajectory, ZeroPolicy, simulate
from .calibration import (
    CalibrationError,
    UndefinedSTEError,
    calibrate_burden_scaling,
    calibrate_population_burden,
    compute_ste,
    impute_population,
    impute_treatment_effects,
    solve_c_treat,
)
from .clock import ALL_CLOCKS, DECISIONS_PER_DYAD, ActionBundle, ClockIndex, ContractViolation
from .dynamics import (
    DyadState,
    StepNoise,
    adherence_prob,
    distress_step,
    env_step,
    initial_state,
    relationship_prob,
    transition_burden,
    week_mediators,
)
from .optimal import QLearningConfig, TabularPolicy, approx_optimal_policy
from .params import (
    ConfigurationError,
    DyadParams,
    Population,
    PopulationConfig,
    generate_population,
    read_population,
    write_population,
)
from .variants import TestbedVariant, VariantKind, make_variant
