//! Query decomposition and keyframe retrieval.
//!
//! A question is decomposed into a multi-granular query set (original text,
//! an object-level term, a scene-level term). Each frame is scored as the
//! ω-weighted sum of dot products between its L2-normalized retrieval
//! embedding and the three L2-normalized query embeddings, and the top K
//! frames are returned in temporal order.

use serde::{Deserialize, Serialize};

use crate::backends::{ReasoningAgent, TextEmbedder};
use crate::config::PipelineConfig;
use crate::diag::{codes, Diagnostics};
use crate::error::{ConfigError, PipelineError};
use crate::prompts::{render, PromptSet};
use crate::types::FrameStore;

/// The decomposed query: the original text plus one object-level and one
/// scene-level term, each with an L2-normalized text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub main: String,
    pub object_level: String,
    pub scene_level: String,
    /// Embeddings for (main, object_level, scene_level), in that order.
    pub embeddings: [Vec<f32>; 3],
    /// Set when decomposition fell back to copying the main query.
    pub fallback: bool,
}

/// Similarity score for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub frame_index: usize,
    pub score: f64,
}

pub(crate) fn l2_normalized(v: &[f32]) -> Vec<f32> {
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

fn parse_decomposition(reply: &str) -> Option<(String, String)> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    let value: serde_json::Value = serde_json::from_str(&reply[start..=end]).ok()?;
    let object = value.get("object")?.as_str()?.trim().to_string();
    let scene = value.get("scene")?.as_str()?.trim().to_string();
    if object.is_empty() || scene.is_empty() {
        return None;
    }
    Some((object, scene))
}

/// Decompose a question into the multi-granular query set.
///
/// The agent is asked once for a structured `{object, scene}` reply, with one
/// repair re-prompt on a malformed answer. If both attempts fail, the object
/// and scene terms fall back to the main query and the result is flagged.
pub fn decompose_query(
    question: &str,
    agent: &dyn ReasoningAgent,
    embedder: &dyn TextEmbedder,
    embedding_dim: usize,
    prompts: &PromptSet,
    diags: &mut Diagnostics,
) -> Result<QuerySet, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::Precondition(
            "question must be non-empty".to_string(),
        ));
    }

    let prompt = render(&prompts.decompose, &[("question", question)]);
    let mut parsed = None;
    let mut attempt_prompt = prompt.clone();
    for _ in 0..2 {
        let reply = agent.agent_chat(&attempt_prompt, diags)?;
        if let Some(pair) = parse_decomposition(&reply) {
            parsed = Some(pair);
            break;
        }
        attempt_prompt = format!(
            "{prompt}\nThe previous reply was not valid JSON. Reply with exactly one JSON object and nothing else."
        );
    }

    let (object_level, scene_level, fallback) = match parsed {
        Some((object, scene)) => (object, scene, false),
        None => {
            diags.push(
                codes::DECOMPOSE_FALLBACK,
                "decomposition reply unparseable twice; using the main query for all terms",
            );
            (question.to_string(), question.to_string(), true)
        }
    };

    let embed = |text: &str, diags: &mut Diagnostics| -> Result<Vec<f32>, PipelineError> {
        let v = embedder.embed_text(text, embedding_dim, diags)?;
        Ok(l2_normalized(&v))
    };
    let embeddings = [
        embed(question, diags)?,
        embed(&object_level, diags)?,
        embed(&scene_level, diags)?,
    ];

    Ok(QuerySet {
        main: question.to_string(),
        object_level,
        scene_level,
        embeddings,
        fallback,
    })
}

/// Score every frame against the query set.
///
/// Pure: identical inputs yield bit-identical outputs. Output is in frame
/// order, one entry per frame.
pub fn score_frames(
    store: &FrameStore,
    qs: &QuerySet,
    cfg: &PipelineConfig,
) -> Result<Vec<ScoredFrame>, ConfigError> {
    for embedding in &qs.embeddings {
        if embedding.len() != store.embedding_dim {
            return Err(ConfigError::DimensionMismatch {
                store_dim: store.embedding_dim,
                got: embedding.len(),
            });
        }
    }
    let weights = [cfg.omega_main, cfg.omega_object, cfg.omega_scene];
    Ok(store
        .frames
        .iter()
        .map(|frame| {
            let normalized = l2_normalized(&frame.embedding);
            let score = weights
                .iter()
                .zip(&qs.embeddings)
                .map(|(w, q)| w * dot(&normalized, q))
                .sum();
            ScoredFrame {
                frame_index: frame.frame_index,
                score,
            }
        })
        .collect())
}

/// Pick the `k` highest-scoring frames and return their indices in temporal
/// order. Ties at the boundary go to the earlier frame. Fewer than `k`
/// frames saturates to all of them.
pub fn select_top_k(scores: &[ScoredFrame], k: usize) -> Vec<usize> {
    assert!(k >= 1, "top-k selection requires k >= 1");
    let mut ranked: Vec<&ScoredFrame> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.frame_index.cmp(&b.frame_index))
    });
    let mut selected: Vec<usize> = ranked
        .into_iter()
        .take(k)
        .map(|s| s.frame_index)
        .collect();
    selected.sort_unstable();
    selected
}
