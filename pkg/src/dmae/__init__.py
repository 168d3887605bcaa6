"""Dual-filter adaptive estimation for linear time-varying systems.

Joint estimation of states, unknown disturbances and output faults with two
parallel Kalman filters fused by Bayesian model probabilities, selective
reinitialization, and on-line disturbance-noise adaptation. Ships a scenario
simulator, augmented-KF and particle-filter baselines, analysis tooling and a
command-line front end.
"""

from dmae.model import (
    LtvModel,
    AugmentedModel,
    Partition,
    ModelError,
    build_no_fault_model,
    build_fault_model,
    assemble_process_noise,
    combined_unknown_input_maps,
    check_existence_condition,
    check_convergence_condition,
)
from dmae.kalman import (
    GaussianBelief,
    KalmanStepOutput,
    NumericalError,
    predict,
    update,
    log_likelihood,
)
from dmae.adaptive_noise import InnovationWindow, innovation_cov_estimate, qd_update
from dmae.dmae import (
    DmaeParams,
    DmaeState,
    update_probabilities,
    selective_reinit,
    weighted_estimates,
    dmae_step,
    init_dmae_state,
    initial_record,
    run_dmae,
)
from dmae.scenario import (
    ScenarioConfig,
    ConfigError,
    DrydenParams,
    RunLog,
    simulate_truth,
    dryden_disturbance,
    fault_profile_eval,
    input_signal,
    load_config,
)
from dmae.baselines import ParticleSet, augmented_kf_step, bootstrap_pf_step, run_akf, run_pf
from dmae.analysis import (
    ErrorBoundInputs,
    rmse,
    steady_state_rmse,
    fault_error_bound,
    sensitivity_sweep,
    switch_times,
)

__version__ = "0.1.0"

__all__ = [
    "LtvModel",
    "AugmentedModel",
    "Partition",
    "ModelError",
    "NumericalError",
    "ConfigError",
    "build_no_fault_model",
    "build_fault_model",
    "assemble_process_noise",
    "combined_unknown_input_maps",
    "check_existence_condition",
    "check_convergence_condition",
    "GaussianBelief",
    "KalmanStepOutput",
    "predict",
    "update",
    "log_likelihood",
    "InnovationWindow",
    "innovation_cov_estimate",
    "qd_update",
    "DmaeParams",
    "DmaeState",
    "update_probabilities",
    "selective_reinit",
    "weighted_estimates",
    "dmae_step",
    "init_dmae_state",
    "initial_record",
    "run_dmae",
    "ScenarioConfig",
    "DrydenParams",
    "RunLog",
    "simulate_truth",
    "dryden_disturbance",
    "fault_profile_eval",
    "input_signal",
    "load_config",
    "ParticleSet",
    "augmented_kf_step",
    "bootstrap_pf_step",
    "run_akf",
    "run_pf",
    "ErrorBoundInputs",
    "rmse",
    "steady_state_rmse",
    "fault_error_bound",
    "sensitivity_sweep",
    "switch_times",
    "__version__",
]
