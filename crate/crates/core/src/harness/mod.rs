//! Scenario harness: TOML scripts, a deterministic world, and a step runner.

pub mod config;
pub mod run;
pub mod scenarios;
pub mod world;

pub use config::{load_scenario, parse_scenario, Check, ConfigError, ConfigErrors, ScenarioConfig, Step};
pub use run::{run_scenario, AssertionResult, RunReport, Runner};
pub use scenarios::{bundled, BUNDLED};
pub use world::{World, WorldError};
