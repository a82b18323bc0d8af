//! Experiment harness for `acgame-core`: TOML configuration, seed fan-out,
//! JSONL output and the commands behind the `acgame` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_dynamics, cmd_equilibrium, cmd_run, cmd_validate_game, Outcome};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{exit, HarnessError, Result};
