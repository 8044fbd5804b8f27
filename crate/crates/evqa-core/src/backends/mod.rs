//! Provider interfaces for all external models.
//!
//! Four kinds of backends exist: text embedding, clip captioning, a reasoning
//! agent, and the final video answerer. Each is a trait with a deterministic
//! mock implementation (for tests and desk-scale runs) and a generic
//! chat-completions HTTP client (for live services). No backend ever mutates
//! pipeline state; everything flows through return values and the
//! diagnostics channel.

mod http;
mod mock;

pub use http::{HttpAnswerer, HttpAgent, HttpCaptioner, HttpEmbedder};
pub use mock::{
    hash_embedding, prompt_fingerprint, MockAgent, MockAnswerer, MockCaptioner, MockEmbedder,
    MockScript,
};

use crate::config::{BackendKind, BackendProfile, BackendsConfig};
use crate::diag::{codes, Diagnostics};
use crate::error::{BackendError, ConfigError};
use crate::types::FrameRef;

/// Request handed to the answerer backend: the composed prompt, the visual
/// payload as frame references, and the option list for reply parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerRequest {
    pub prompt: String,
    pub frame_refs: Vec<FrameRef>,
    pub options: Vec<String>,
    /// Rendered memory blocks, empty when answering from fallback frames.
    pub memories_text: String,
}

pub trait TextEmbedder: Send + Sync {
    /// Embed `text` into a vector of length `dim`, L2-normalized.
    fn embed_text(
        &self,
        text: &str,
        dim: usize,
        diags: &mut Diagnostics,
    ) -> Result<Vec<f32>, BackendError>;
}

pub trait Captioner: Send + Sync {
    /// One clip-level caption call for an event's frames.
    fn caption_event(
        &self,
        frames: &[FrameRef],
        prompt: &str,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError>;
}

pub trait ReasoningAgent: Send + Sync {
    fn agent_chat(&self, prompt: &str, diags: &mut Diagnostics) -> Result<String, BackendError>;
}

pub trait Answerer: Send + Sync {
    fn answer_video(
        &self,
        request: &AnswerRequest,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError>;
}

/// The four resolved backends used by one pipeline run.
pub struct Backends {
    pub embedder: Box<dyn TextEmbedder>,
    pub captioner: Box<dyn Captioner>,
    pub agent: Box<dyn ReasoningAgent>,
    pub answerer: Box<dyn Answerer>,
    /// Declared frame cap of the answerer, if any.
    pub answerer_frame_limit: Option<usize>,
}

impl Backends {
    /// Resolve every profile in a config section.
    pub fn from_config(cfg: &BackendsConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            embedder: resolve_embedder(&cfg.text_embed)?,
            captioner: resolve_captioner(&cfg.caption)?,
            agent: resolve_agent(&cfg.agent)?,
            answerer: resolve_answerer(&cfg.answerer)?,
            answerer_frame_limit: cfg.answerer.frame_limit,
        })
    }

    /// The default all-mock bundle.
    pub fn mocks() -> Self {
        Self::from_config(&BackendsConfig::default()).expect("builtin scenarios resolve")
    }
}

pub fn resolve_embedder(profile: &BackendProfile) -> Result<Box<dyn TextEmbedder>, ConfigError> {
    match profile.mock_scenario() {
        Some("hash") => Ok(Box::new(MockEmbedder::hash())),
        Some(other) => Err(ConfigError::UnknownMockScenario(other.to_string())),
        None => Ok(Box::new(HttpEmbedder::new(profile))),
    }
}

pub fn resolve_captioner(profile: &BackendProfile) -> Result<Box<dyn Captioner>, ConfigError> {
    match profile.mock_scenario() {
        Some("synthetic") => Ok(Box::new(MockCaptioner::synthetic())),
        Some("prose") => Ok(Box::new(MockCaptioner::prose())),
        Some("fail") => Ok(Box::new(MockCaptioner::failing())),
        Some(other) => Err(ConfigError::UnknownMockScenario(other.to_string())),
        None => Ok(Box::new(HttpCaptioner::new(profile))),
    }
}

pub fn resolve_agent(profile: &BackendProfile) -> Result<Box<dyn ReasoningAgent>, ConfigError> {
    match profile.mock_scenario() {
        Some("keyword") => Ok(Box::new(MockAgent::keyword())),
        Some("fail") => Ok(Box::new(MockAgent::failing())),
        Some(other) => Err(ConfigError::UnknownMockScenario(other.to_string())),
        None => Ok(Box::new(HttpAgent::new(profile))),
    }
}

pub fn resolve_answerer(profile: &BackendProfile) -> Result<Box<dyn Answerer>, ConfigError> {
    match profile.mock_scenario() {
        Some("overlap") => Ok(Box::new(MockAnswerer::overlap(profile.frame_limit))),
        Some("fail") => Ok(Box::new(MockAnswerer::failing(profile.frame_limit))),
        Some(other) => Err(ConfigError::UnknownMockScenario(other.to_string())),
        None => Ok(Box::new(HttpAnswerer::new(profile))),
    }
}

/// Run `call`, retrying retryable failures up to `max_retries` times with a
/// bounded linear backoff. Each retry is recorded in the diagnostics.
pub(crate) fn with_retries<T>(
    op_label: &str,
    max_retries: u32,
    backoff_ms: u64,
    diags: &mut Diagnostics,
    mut call: impl FnMut() -> Result<T, BackendError>,
) -> Result<T, BackendError> {
    let mut attempt: u32 = 0;
    loop {
        match call() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt < max_retries => {
                attempt += 1;
                diags.push(codes::RETRY, format!("{op_label}: retry {attempt} after {e}"));
                if backoff_ms > 0 {
                    let delay = backoff_ms.saturating_mul(u64::from(attempt)).min(5_000);
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                }
            }
            Err(BackendError::Transport { message, .. }) => {
                return Err(BackendError::Transport {
                    attempts: attempt + 1,
                    message,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// Enforce the declared frame limit before any transport happens.
pub(crate) fn check_frame_limit(
    request: &AnswerRequest,
    limit: Option<usize>,
) -> Result<(), BackendError> {
    if let Some(limit) = limit {
        if request.frame_refs.len() > limit {
            return Err(BackendError::FrameLimitExceeded {
                frames: request.frame_refs.len(),
                limit,
            });
        }
    }
    Ok(())
}

pub(crate) fn require_nonempty(text: &str, what: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        Err(BackendError::Precondition(format!("{what} must be non-empty")))
    } else {
        Ok(())
    }
}

/// Label used in mock-exhaustion errors and retry diagnostics.
pub(crate) fn kind_label(kind: BackendKind) -> String {
    kind.as_str().to_string()
}
