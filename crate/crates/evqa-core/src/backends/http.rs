//! Chat-completions HTTP clients for live backends.
//!
//! Every live service speaks the common chat-completions shape: a message
//! list, a model name, and temperature 0 so runs stay as deterministic as the
//! service allows. Frame references travel as image-content parts by URI.
//! Credentials come from per-kind environment variables
//! (`TEXT_EMBED_API_KEY`, `CAPTION_API_KEY`, `AGENT_API_KEY`,
//! `ANSWERER_API_KEY`).

use std::time::Duration;

use serde_json::{json, Value};

use super::{
    check_frame_limit, require_nonempty, with_retries, AnswerRequest, Answerer, Captioner,
    ReasoningAgent, TextEmbedder,
};
use crate::config::{BackendKind, BackendProfile};
use crate::diag::Diagnostics;
use crate::error::{BackendError, ConfigError};
use crate::types::FrameRef;

struct HttpClient {
    endpoint: String,
    model_name: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_ms: u64,
    client: reqwest::blocking::Client,
}

impl HttpClient {
    fn new(profile: &BackendProfile, kind: BackendKind) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(profile.timeout_ms))
            .build()
            .expect("reqwest client construction");
        Self {
            endpoint: profile.endpoint.clone(),
            model_name: profile.model_name.clone(),
            api_key: std::env::var(kind.api_key_env()).ok(),
            max_retries: profile.max_retries,
            backoff_ms: profile.retry_backoff_ms,
            client,
        }
    }

    fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let mut request = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            });
        }
        if !status.is_success() {
            return Err(BackendError::Precondition(format!(
                "backend rejected request: HTTP {status}"
            )));
        }
        response.json().map_err(|e| BackendError::Transport {
            attempts: 1,
            message: format!("malformed JSON body: {e}"),
        })
    }

    /// POST a chat request and pull out the first choice's content.
    fn chat(
        &self,
        label: &str,
        content: Value,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model_name,
            "messages": [{ "role": "user", "content": content }],
            "temperature": 0,
        });
        let reply = with_retries(label, self.max_retries, self.backoff_ms, diags, || {
            self.post(&body)
        })?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Transport {
                attempts: 1,
                message: "reply lacks choices[0].message.content".to_string(),
            })
    }
}

/// Mixed text-and-image content: the prompt followed by one image part per
/// frame reference.
fn content_with_frames(prompt: &str, frames: &[FrameRef]) -> Value {
    let mut parts = vec![json!({ "type": "text", "text": prompt })];
    for frame in frames {
        parts.push(json!({
            "type": "image_url",
            "image_url": { "url": frame.uri() },
        }));
    }
    Value::Array(parts)
}

pub struct HttpEmbedder {
    inner: HttpClient,
}

impl HttpEmbedder {
    pub fn new(profile: &BackendProfile) -> Self {
        Self {
            inner: HttpClient::new(profile, BackendKind::TextEmbed),
        }
    }
}

impl TextEmbedder for HttpEmbedder {
    fn embed_text(
        &self,
        text: &str,
        dim: usize,
        diags: &mut Diagnostics,
    ) -> Result<Vec<f32>, BackendError> {
        require_nonempty(text, "embedding text")?;
        let body = json!({ "model": self.inner.model_name, "input": text });
        let reply = with_retries(
            "text-embed",
            self.inner.max_retries,
            self.inner.backoff_ms,
            diags,
            || self.inner.post(&body),
        )?;
        let values = reply["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| BackendError::Transport {
                attempts: 1,
                message: "reply lacks data[0].embedding".to_string(),
            })?;
        let vector: Vec<f32> = values
            .iter()
            .map(|v| v.as_f64().unwrap_or(0.0) as f32)
            .collect();
        if vector.len() != dim {
            return Err(BackendError::Config(ConfigError::DimensionMismatch {
                store_dim: dim,
                got: vector.len(),
            }));
        }
        Ok(vector)
    }
}

pub struct HttpCaptioner {
    inner: HttpClient,
}

impl HttpCaptioner {
    pub fn new(profile: &BackendProfile) -> Self {
        Self {
            inner: HttpClient::new(profile, BackendKind::Caption),
        }
    }
}

impl Captioner for HttpCaptioner {
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
        self.inner
            .chat("caption", content_with_frames(prompt, frames), diags)
    }
}

pub struct HttpAgent {
    inner: HttpClient,
}

impl HttpAgent {
    pub fn new(profile: &BackendProfile) -> Self {
        Self {
            inner: HttpClient::new(profile, BackendKind::Agent),
        }
    }
}

impl ReasoningAgent for HttpAgent {
    fn agent_chat(&self, prompt: &str, diags: &mut Diagnostics) -> Result<String, BackendError> {
        require_nonempty(prompt, "agent prompt")?;
        self.inner.chat("agent", Value::String(prompt.to_string()), diags)
    }
}

pub struct HttpAnswerer {
    inner: HttpClient,
    frame_limit: Option<usize>,
}

impl HttpAnswerer {
    pub fn new(profile: &BackendProfile) -> Self {
        Self {
            inner: HttpClient::new(profile, BackendKind::Answerer),
            frame_limit: profile.frame_limit,
        }
    }
}

impl Answerer for HttpAnswerer {
    fn answer_video(
        &self,
        request: &AnswerRequest,
        diags: &mut Diagnostics,
    ) -> Result<String, BackendError> {
        check_frame_limit(request, self.frame_limit)?;
        self.inner.chat(
            "answerer",
            content_with_frames(&request.prompt, &request.frame_refs),
            diags,
        )
    }
}
