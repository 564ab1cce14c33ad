//! Two-class macroscopic freeway simulation with PI route guidance and ramp
//! metering, plus the environment used to tune controller gains online with
//! DDPG agents.

pub mod bench;
pub mod config;
pub mod controllers;
pub mod demand;
pub mod env;
pub mod error;
pub mod model;
pub mod params;
pub mod seed;
pub mod topology;

pub use config::ScenarioConfig;
pub use error::{ConfigError, Error, ModelError, Result};
