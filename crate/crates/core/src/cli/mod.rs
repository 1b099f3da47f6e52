//! Experiment configuration and orchestration behind the `tnl` binary.

mod config;
mod run;

pub use config::{
    load_config, parse_config, read_modes_csv, ExperimentConfig, ExperimentKind, InitialSpec, LdpOptions, Norms,
    ResolvedNorms,
};
pub use run::{prepare_output, run, seed_from_env, RunOptions, RunOutcome, SEED_ENV};
