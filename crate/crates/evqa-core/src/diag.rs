//! Diagnostics channel.
//!
//! Non-fatal degradations (narrative fallbacks, missing flow data, retries,
//! truncation) are recorded here instead of being raised as errors. Each
//! pipeline execution owns one `Diagnostics` value; entries end up in the run
//! report.

use serde::{Deserialize, Serialize};

/// One diagnostic event: a stable machine-readable code plus a human message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub code: String,
    pub message: String,
}

/// Ordered collection of diagnostics for one pipeline execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    entries: Vec<DiagRecord>,
}

impl Diagnostics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, code: &str, message: impl Into<String>) {
        self.entries.push(DiagRecord {
            code: code.to_string(),
            message: message.into(),
        });
    }

    pub fn entries(&self) -> &[DiagRecord] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True if any entry carries the given code.
    pub fn has_code(&self, code: &str) -> bool {
        self.entries.iter().any(|e| e.code == code)
    }

    /// Move all entries from `other` into this channel.
    pub fn absorb(&mut self, other: Diagnostics) {
        self.entries.extend(other.entries);
    }
}

/// Diagnostic codes used across the pipeline.
pub mod codes {
    pub const DECOMPOSE_FALLBACK: &str = "decompose_fallback";
    pub const EXPANSION_UNAVAILABLE: &str = "expansion_unavailable";
    pub const FLOW_FALLBACK: &str = "flow_fallback";
    pub const NARRATIVE_FALLBACK: &str = "narrative_fallback";
    pub const NARRATIVE_BACKEND_FAILED: &str = "narrative_backend_failed";
    pub const RETRY: &str = "retry";
    pub const TRUNCATED: &str = "truncated";
    pub const UNIFORM_FALLBACK: &str = "uniform_fallback";
    pub const ANSWER_SALVAGED: &str = "answer_salvaged";
    pub const ANSWER_UNPARSEABLE: &str = "answer_unparseable";
    pub const COT_UNPARSEABLE: &str = "cot_unparseable";
    pub const QUESTION_SKIPPED: &str = "question_skipped";
    pub const QUESTION_UNANSWERED: &str = "question_unanswered";
}
