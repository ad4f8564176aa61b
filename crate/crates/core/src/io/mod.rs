//! Experiment orchestration, configuration, persistence, and plot emission.

pub mod config;
pub mod csv_out;
pub mod matrix_market;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::{load_config, parse_config, ExperimentConfig, StudyKind};
pub use matrix_market::{read_matrix_market, write_matrix_market, MmLayout};
pub use report::{Assertion, DiagnosticsReport};
pub use runner::{control_distance, run_experiment, ExperimentOutput};
