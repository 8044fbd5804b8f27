//! Error types shared across the pipeline.

use thiserror::Error;

/// Configuration loading or validation failures. These are always fatal.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid config value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown prompt set `{0}`")]
    UnknownPromptSet(String),
    #[error("unknown mock scenario `{0}`")]
    UnknownMockScenario(String),
    #[error("embedding dimension mismatch: store has {store_dim}, got {got}")]
    DimensionMismatch { store_dim: usize, got: usize },
}

/// Failures surfaced by model backends.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("mock script exhausted: no reply for {kind} call #{ordinal}")]
    MockExhausted { kind: String, ordinal: usize },
    #[error("request carries {frames} frames, over the declared frame limit {limit}")]
    FrameLimitExceeded { frames: usize, limit: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl BackendError {
    /// Transport failures may be retried; everything else is terminal.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// Event construction failures.
#[derive(Debug, Error)]
pub enum EventError {
    #[error("frame {0} has no expansion embedding; expansion unavailable")]
    ExpansionUnavailable(usize),
    #[error("event {0} has fewer than two frames and cannot be split")]
    Unsplittable(usize),
    #[error("frame index {0} is out of range for the store")]
    InvalidFrame(usize),
}

/// Ingestion failures. These abort a run with the offending file named.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes (expected an embedding container or JSONL text)")]
    BadMagic { path: String },
    #[error("{path}: unsupported container version {version}")]
    BadVersion { path: String, version: u32 },
    #[error("{path}: malformed record at line {line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("frame count mismatch: {path} has {got} records, expected {expected}")]
    FrameCountMismatch {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
}

/// Umbrella error for end-to-end pipeline execution.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("precondition violated: {0}")]
    Precondition(String),
}
