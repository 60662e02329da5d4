//! Experiment orchestration for `bpamp-core`: replicate fan-out, scaling fits,
//! tail and concentration checks, and CSV/JSON reports.

pub mod concentration;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod tails;

pub use config::{Experiment, ExperimentConfig};
pub use error::{HarnessError, Result};
pub use fit::{fit_scaling, ScalingFit};
