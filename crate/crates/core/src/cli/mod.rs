//! Scenario files and the command-line verbs built on them.

pub mod commands;
pub mod config;

pub use commands::{cmd_lp, cmd_run, cmd_validate, load, CliError, Loaded, Overrides};
pub use config::{load_scenario, parse_scenario, ConfigError, FieldError, ScenarioConfig};
