//! Orchestration of the NEUS pipeline: configuration, cached stage
//! execution and synthetic fixture generation.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use stages::{export_reports, run_all, run_stage, Stage, StageArtifact};
