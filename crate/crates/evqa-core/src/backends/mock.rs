//! Deterministic mock backends.
//!
//! Mocks come in two flavors: scripted (ordered replies consumed per call,
//! with optional prompt-fingerprint overrides; exhaustion is a test failure)
//! and scenario mocks, which are pure functions of their input and therefore
//! replay byte-identically. Scenario names are what `mock:{scenario}`
//! endpoints resolve to.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{
    check_frame_limit, kind_label, require_nonempty, with_retries, AnswerRequest, Answerer,
    Captioner, ReasoningAgent, TextEmbedder,
};
use crate::config::BackendKind;
use crate::diag::Diagnostics;
use crate::error::BackendError;
use crate::prompts::option_letter;
use crate::types::FrameRef;

/// Script entry that injects a transport failure instead of a reply.
pub const FAIL_MARKER: &str = "!fail";

/// Stable fingerprint of a prompt, used for keyed script overrides.
pub fn prompt_fingerprint(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Map text deterministically to a reproducible pseudo-random unit vector.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    let digest = Sha256::digest(text.as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut v: Vec<f32> = (0..dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

#[derive(Default)]
struct ScriptState {
    replies: BTreeMap<BackendKind, Vec<String>>,
    cursors: BTreeMap<BackendKind, usize>,
    overrides: BTreeMap<(BackendKind, String), String>,
}

/// Ordered mock replies keyed by (kind, call ordinal), with optional keyed
/// overrides by prompt fingerprint. Consumption is serialized under a lock so
/// scripts stay deterministic under concurrent calls.
#[derive(Default)]
pub struct MockScript {
    state: Mutex<ScriptState>,
}

impl MockScript {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn push(self: &Arc<Self>, kind: BackendKind, reply: impl Into<String>) -> Arc<Self> {
        self.state
            .lock()
            .unwrap()
            .replies
            .entry(kind)
            .or_default()
            .push(reply.into());
        Arc::clone(self)
    }

    /// Inject a transport failure at this position in the script.
    pub fn push_failure(self: &Arc<Self>, kind: BackendKind) -> Arc<Self> {
        self.push(kind, FAIL_MARKER)
    }

    /// Register a reply keyed to the exact prompt text. Keyed replies take
    /// precedence over ordinal replies and do not advance the cursor.
    pub fn override_for(
        self: &Arc<Self>,
        kind: BackendKind,
        prompt: &str,
        reply: impl Into<String>,
    ) -> Arc<Self> {
        self.state
            .lock()
            .unwrap()
            .overrides
            .insert((kind, prompt_fingerprint(prompt)), reply.into());
        Arc::clone(self)
    }

    /// Consume the next reply for `kind`.
    pub fn next(&self, kind: BackendKind, prompt: &str) -> Result<String, BackendError> {
        let mut state = self.state.lock().unwrap();
        let key = (kind, prompt_fingerprint(prompt));
        if let Some(reply) = state.overrides.get(&key) {
            return Ok(reply.clone());
        }
        let cursor = *state.cursors.get(&kind).unwrap_or(&0);
        let reply = state
            .replies
            .get(&kind)
            .and_then(|r| r.get(cursor))
            .cloned();
        match reply {
            Some(reply) => {
                state.cursors.insert(kind, cursor + 1);
                if reply == FAIL_MARKER {
                    Err(BackendError::Transport {
                        attempts: 1,
                        message: "scripted transport failure".to_string(),
                    })
                } else {
                    Ok(reply)
                }
            }
            None => Err(BackendError::MockExhausted {
                kind: kind_label(kind),
                ordinal: cursor,
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Embedder
// ---------------------------------------------------------------------------

/// `mock:hash` — deterministic unit vector from a text hash.
pub struct MockEmbedder;

impl MockEmbedder {
    pub fn hash() -> Self {
        MockEmbedder
    }
}

impl TextEmbedder for MockEmbedder {
    fn embed_text(
        &self,
        text: &str,
        dim: usize,
        _diags: &mut Diagnostics,
    ) -> Result<Vec<f32>, BackendError> {
        require_nonempty(text, "embedding text")?;
        Ok(hash_embedding(text, dim))
    }
}

// ---------------------------------------------------------------------------
// Captioner
// ---------------------------------------------------------------------------

enum CaptionBehavior {
    /// Echo a structured When/Where/What reply derived from the prompt.
    Synthetic,
    /// Free prose without field markers, exercising the fallback parser.
    Prose,
    /// Always a transport failure.
    Failing,
    Scripted { script: Arc<MockScript>, max_retries: u32 },
}

pub struct MockCaptioner {
    behavior: CaptionBehavior,
}

impl MockCaptioner {
    pub fn synthetic() -> Self {
        Self { behavior: CaptionBehavior::Synthetic }
    }

    pub fn prose() -> Self {
        Self { behavior: CaptionBehavior::Prose }
    }

    pub fn failing() -> Self {
        Self { behavior: CaptionBehavior::Failing }
    }

    pub fn scripted(script: Arc<MockScript>, max_retries: u32) -> Self {
        Self {
            behavior: CaptionBehavior::Scripted { script, max_retries },
        }
    }
}

/// Pull `spanning {start} to {end}` out of the narrative prompt.
fn parse_span(prompt: &str) -> Option<(String, String)> {
    let rest = prompt.split("spanning ").nth(1)?;
    let (start, rest) = rest.split_once(" to ")?;
    let end = rest.lines().next()?.trim().trim_end_matches('.');
    Some((start.trim().to_string(), end.to_string()))
}

impl Captioner for MockCaptioner {
    fn caption_event(
        &self,
        frames: &[FrameRef],
        prompt: &str,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError> {
        if frames.is_empty() {
            return Err(BackendError::Precondition(
                "caption_event requires at least one frame".to_string(),
            ));
        }
        match &self.behavior {
            CaptionBehavior::Synthetic => {
                let (start, end) = parse_span(prompt)
                    .unwrap_or_else(|| ("?".to_string(), "?".to_string()));
                Ok(format!(
                    "When: {start} to {end}.\nWhere: unspecified setting.\nWhat: continuous activity across {} frames.",
                    frames.len()
                ))
            }
            CaptionBehavior::Prose => Ok(format!(
                "footage of ongoing movement over {} frames without further structure",
                frames.len()
            )),
            CaptionBehavior::Failing => Err(BackendError::Transport {
                attempts: 1,
                message: "scenario `fail` always fails".to_string(),
            }),
            CaptionBehavior::Scripted { script, max_retries } => {
                with_retries("caption", *max_retries, 0, diags, || {
                    script.next(BackendKind::Caption, prompt)
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Agent
// ---------------------------------------------------------------------------

enum AgentBehavior {
    /// Keyword matching over the prompt: structured decomposition replies for
    /// decomposition prompts, keyword-overlap confidence for assessment
    /// prompts.
    Keyword,
    Failing,
    Scripted { script: Arc<MockScript>, max_retries: u32 },
}

pub struct MockAgent {
    behavior: AgentBehavior,
}

impl MockAgent {
    pub fn keyword() -> Self {
        Self { behavior: AgentBehavior::Keyword }
    }

    pub fn failing() -> Self {
        Self { behavior: AgentBehavior::Failing }
    }

    pub fn scripted(script: Arc<MockScript>, max_retries: u32) -> Self {
        Self {
            behavior: AgentBehavior::Scripted { script, max_retries },
        }
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 3)
        .map(str::to_string)
        .collect()
}

const STOPWORDS: &[&str] = &[
    "the", "and", "was", "were", "are", "what", "which", "who", "whom", "did", "does", "how",
    "where", "when", "why", "from", "that", "this", "these", "those", "with", "during", "into",
    "onto", "over", "under", "about", "present", "object", "objects", "segment", "segments",
    "happens", "happened", "video", "clip", "frame", "frames", "scene", "appears", "appear",
];

fn informative_tokens(text: &str) -> Vec<String> {
    // A quoted span is the salient term when present.
    if let Some(rest) = text.split('\'').nth(1) {
        if !rest.is_empty() {
            return tokens(rest.split('\'').next().unwrap_or(rest));
        }
    }
    tokens(text)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn section<'a>(prompt: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let rest = prompt.split(start).nth(1)?;
    Some(rest.split(end).next().unwrap_or(rest))
}

fn keyword_reply(prompt: &str) -> String {
    if prompt.contains("\"object\"") {
        // Decomposition request: object term from the quoted span or the
        // longest token, scene term from the trailing token.
        let question = section(prompt, "Question: ", "\n").unwrap_or(prompt);
        let toks = informative_tokens(question);
        let object = toks
            .iter()
            .max_by_key(|t| t.len())
            .cloned()
            .unwrap_or_else(|| "object".to_string());
        let scene = toks
            .iter()
            .rev()
            .find(|t| **t != object)
            .cloned()
            .unwrap_or_else(|| "scene".to_string());
        serde_json::json!({ "object": object, "scene": scene }).to_string()
    } else {
        // Sufficiency assessment: high confidence iff the memory mentions an
        // informative question token.
        let memory = section(prompt, "Memory:\n", "\nQuestion:").unwrap_or("");
        let question = section(prompt, "Question: ", "\n").unwrap_or("");
        let memory_tokens = tokens(memory);
        let hit = informative_tokens(question)
            .iter()
            .any(|t| memory_tokens.contains(t));
        let confidence = if hit { 0.9 } else { 0.1 };
        serde_json::json!({
            "reasoning": if hit { "memory mentions the queried term" } else { "memory does not mention the queried term" },
            "confidence": confidence,
        })
        .to_string()
    }
}

impl ReasoningAgent for MockAgent {
    fn agent_chat(&self, prompt: &str, diags: &mut Diagnostics) -> Result<String, BackendError> {
        require_nonempty(prompt, "agent prompt")?;
        match &self.behavior {
            AgentBehavior::Keyword => Ok(keyword_reply(prompt)),
            AgentBehavior::Failing => Err(BackendError::Transport {
                attempts: 1,
                message: "scenario `fail` always fails".to_string(),
            }),
            AgentBehavior::Scripted { script, max_retries } => {
                with_retries("agent", *max_retries, 0, diags, || {
                    script.next(BackendKind::Agent, prompt)
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Answerer
// ---------------------------------------------------------------------------

enum AnswerBehavior {
    /// Pick the option with maximal token overlap against the rendered
    /// memories; ties break toward the lowest index.
    Overlap,
    Failing,
    Scripted { script: Arc<MockScript>, max_retries: u32 },
}

pub struct MockAnswerer {
    behavior: AnswerBehavior,
    frame_limit: Option<usize>,
}

impl MockAnswerer {
    pub fn overlap(frame_limit: Option<usize>) -> Self {
        Self { behavior: AnswerBehavior::Overlap, frame_limit }
    }

    pub fn failing(frame_limit: Option<usize>) -> Self {
        Self { behavior: AnswerBehavior::Failing, frame_limit }
    }

    pub fn scripted(script: Arc<MockScript>, max_retries: u32, frame_limit: Option<usize>) -> Self {
        Self {
            behavior: AnswerBehavior::Scripted { script, max_retries },
            frame_limit,
        }
    }
}

impl Answerer for MockAnswerer {
    fn answer_video(
        &self,
        request: &AnswerRequest,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError> {
        check_frame_limit(request, self.frame_limit)?;
        match &self.behavior {
            AnswerBehavior::Overlap => {
                let memory_tokens = tokens(&request.memories_text);
                let mut best = 0usize;
                let mut best_overlap = 0usize;
                for (i, option) in request.options.iter().enumerate() {
                    let mut seen = Vec::new();
                    let overlap = tokens(option)
                        .into_iter()
                        .filter(|t| {
                            if memory_tokens.contains(t) && !seen.contains(t) {
                                seen.push(t.clone());
                                true
                            } else {
                                false
                            }
                        })
                        .count();
                    if overlap > best_overlap {
                        best_overlap = overlap;
                        best = i;
                    }
                }
                Ok(option_letter(best).to_string())
            }
            AnswerBehavior::Failing => Err(BackendError::Transport {
                attempts: 1,
                message: "scenario `fail` always fails".to_string(),
            }),
            AnswerBehavior::Scripted { script, max_retries } => {
                with_retries("answerer", *max_retries, 0, diags, || {
                    script.next(BackendKind::Answerer, &request.prompt)
                })
            }
        }
    }
}
