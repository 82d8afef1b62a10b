//! Configuration files, CSV persistence and experiment directories.

pub mod config;
pub mod csvio;
pub mod experiment;
pub mod manifest;

pub use config::{parse_config, parse_stochastic_config, serialize_config, ConfigError, ConfigErrorKind};
pub use csvio::{CsvError, MomentRow};
pub use experiment::{run_experiment, ExperimentError, ExperimentOptions, ExperimentOutcome};
pub use manifest::{ExperimentManifest, ManifestError, Status};
