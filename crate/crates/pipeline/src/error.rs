use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] neus_core::Error),

    #[error("{path}: {field}: {message}")]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("stage `{stage}` needs the `{upstream}` artifact; run `neus run {upstream}` first")]
    MissingUpstream { stage: String, upstream: String },

    #[error("stage `{stage}` needs `{upstream}`, whose artifact was built from different inputs; rerun `neus run {upstream}`")]
    StaleUpstream { stage: String, upstream: String },

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("unknown stage `{0}`")]
    UnknownStage(String),
}

impl PipelineError {
    pub fn config(path: impl Into<PathBuf>, field: impl Into<String>, message: impl ToString) -> Self {
        PipelineError::Config {
            path: path.into(),
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Short class name printed by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            PipelineError::Core(e) => e.class(),
            PipelineError::Config { .. } | PipelineError::UnknownStage(_) => "config",
            PipelineError::MissingUpstream { .. } | PipelineError::StaleUpstream { .. } => "stage",
            PipelineError::Manifest { .. } => "manifest",
        }
    }
}

pub(crate) fn io_error(path: impl Into<PathBuf>, source: std::io::Error) -> PipelineError {
    PipelineError::Core(neus_core::Error::Io {
        path: path.into(),
        source,
    })
}

pub(crate) fn parse_error(context: impl Into<String>, message: impl ToString) -> PipelineError {
    PipelineError::Core(neus_core::Error::Parse {
        context: context.into(),
        message: message.to_string(),
    })
}
