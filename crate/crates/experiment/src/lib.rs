//! Experiment harness for spin-thimble: presets and config files, seeded
//! parallel β sweeps, CSV rows with a JSON manifest, and repetition
//! summaries.

pub mod config;
pub mod report;
pub mod run;
pub mod seed;

pub use config::{preset, ExperimentConfig, Method, PowerLaw, PRESETS};
pub use run::{execute, read_csv, run, write_csv, Manifest, Row};
