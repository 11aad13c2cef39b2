//! Experiment configuration, dispatch and result files.

mod config;
mod run;

pub use config::{
    from_raw, parse_config, BoundarySpec, ConfigError, ConfigErrors, DetectorSpec, EnsembleSpec, ExperimentConfig,
    Geometry, GridSpec, LimitSpec, Model, OutputSpec, PhysicsSpec, RawConfig, StateSpec, TimeSpec, KEYS,
};
pub use run::{
    compute, load_state, run_experiment, run_sweep, sweep_configs, EnsembleSummary, LimitSummary, OutcomeRow, Results, RunArtifacts,
    RunError, Setup, Summary,
};
