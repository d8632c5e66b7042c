//! Pipeline driver for saga-core: runs ingest, construct, views, embed and
//! live-build over a data directory, serves the live endpoint and reports
//! fact provenance.

pub mod config;
pub mod demo;
pub mod inspect;
pub mod lock;
pub mod pipeline;

use thiserror::Error;

pub use config::{LiveSettings, PipelineConfig, Thresholds};
pub use inspect::{inspect, FactProvenance, ProvenanceReport};
pub use lock::DataDirLock;
pub use pipeline::{run_stage, serve, Pipeline, RunOptions, RunReport, Stage, StageReport};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
}

impl CliError {
    pub fn stage(stage: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Stage { stage: stage.into(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage { .. } | CliError::UnknownEntity(_) => EXIT_STAGE,
        }
    }
}
