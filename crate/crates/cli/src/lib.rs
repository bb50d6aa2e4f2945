//! Experiment drivers for `jmperc`: configuration, Monte Carlo runs on a
//! worker pool, CSV/JSON output and SVG rendering.

pub mod config;
pub mod drivers;
pub mod error;
pub mod output;
pub mod render;

pub use config::{Command, ExperimentConfig, Overrides};
pub use drivers::{execute, Check, RunReport};
pub use error::{CliError, Result};
