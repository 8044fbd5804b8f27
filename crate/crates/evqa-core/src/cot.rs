//! Recursive chain-of-thought memory selection and final answering.
//!
//! Each top-level episodic memory is scored for sufficiency by the reasoning
//! agent. Memories at or above the confidence threshold are accepted;
//! insufficient ones are split at their strongest visual boundary and the
//! halves are examined recursively (left first) down to the depth cap. The
//! selected set, the composed answer request, and the tolerant option-letter
//! parser live here too.

use serde::{Deserialize, Serialize};

use crate::backends::{AnswerRequest, Answerer, Backends, ReasoningAgent};
use crate::config::PipelineConfig;
use crate::diag::{codes, Diagnostics};
use crate::error::BackendError;
use crate::event::{split_event, KeyEvent};
use crate::memory::{build_memory, render_memory, EpisodicMemory};
use crate::prompts::{lettered_options, option_letter, render, PromptSet};
use crate::types::{FrameRef, FrameStore, QuestionInstance};

/// What the reasoner decided at one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoTAction {
    /// Confidence reached the threshold; the memory is sufficient.
    Accept,
    /// Insufficient but refinable: the event was split and recursed into.
    Split,
    /// A top-level result dropped at selection time.
    Reject,
    /// Insufficient and unrefinable (depth cap reached or event
    /// unsplittable); returned as a terminal candidate.
    DepthCappedAccept,
}

/// One reasoning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoTStep {
    pub event_id: usize,
    pub depth: usize,
    pub reasoning: String,
    pub confidence: f64,
    pub action: CoTAction,
}

/// A memory chosen for the answerer, with its event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMemory {
    pub memory: EpisodicMemory,
    pub event: KeyEvent,
    /// False only for the best-effort result kept when nothing reached the
    /// confidence threshold.
    pub sufficient: bool,
}

/// Full record of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CoTTrace {
    pub steps: Vec<CoTStep>,
    pub selected: Vec<SelectedMemory>,
    /// Distinct frames across all selected events.
    pub frames_used: usize,
}

/// Result of one recursion: the memory and event the branch settled on, and
/// whether a sufficient confidence was reached within the depth budget.
#[derive(Debug, Clone)]
pub struct CotOutcome {
    pub memory: EpisodicMemory,
    pub event: KeyEvent,
    pub valid: bool,
    pub confidence: f64,
    pub depth: usize,
}

fn parse_prediction(reply: &str) -> Option<(String, f64)> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    let value: serde_json::Value = serde_json::from_str(&reply[start..=end]).ok()?;
    let reasoning = value.get("reasoning")?.as_str()?.to_string();
    let confidence = value.get("confidence")?.as_f64()?;
    Some((reasoning, confidence))
}

/// Ask the agent whether `mem` suffices to answer the question.
///
/// One repair re-prompt on a malformed reply; two failures yield confidence
/// 0.0 with reasoning `unparseable`. Transport failures degrade the same way
/// so the recursion always terminates. Confidence is clamped to [0,1].
pub fn predict_cot(
    mem: &EpisodicMemory,
    question: &QuestionInstance,
    depth: usize,
    agent: &dyn ReasoningAgent,
    prompts: &PromptSet,
    diags: &mut Diagnostics,
) -> (String, f64) {
    debug_assert!(depth >= 1);
    let prompt = render(
        &prompts.cot,
        &[
            ("memory_block", render_memory(mem).as_str()),
            ("question", question.question_text.as_str()),
            ("options", lettered_options(&question.options).as_str()),
            ("depth", depth.to_string().as_str()),
        ],
    );

    let mut attempt_prompt = prompt.clone();
    for _ in 0..2 {
        match agent.agent_chat(&attempt_prompt, diags) {
            Ok(reply) => {
                if let Some((reasoning, confidence)) = parse_prediction(&reply) {
                    let clamped = if confidence.is_nan() {
                        0.0
                    } else {
                        confidence.clamp(0.0, 1.0)
                    };
                    return (reasoning, clamped);
                }
            }
            Err(e) => {
                diags.push(
                    codes::COT_UNPARSEABLE,
                    format!("event {}: agent call failed: {e}", mem.event_id),
                );
            }
        }
        attempt_prompt = format!(
            "{prompt}\nThe previous reply was not valid JSON. Reply with exactly one JSON object and nothing else."
        );
    }
    diags.push(
        codes::COT_UNPARSEABLE,
        format!(
            "event {}: no parseable sufficiency reply after repair",
            mem.event_id
        ),
    );
    ("unparseable".to_string(), 0.0)
}

/// One recursion over a memory and its event.
///
/// Accept at `confidence >= tau_conf`. Otherwise split and try the earlier
/// half first; its result is returned when valid, else the later half's
/// result decides. Unrefinable nodes (depth cap, unsplittable event) return
/// themselves marked invalid.
#[allow(clippy::too_many_arguments)]
pub fn cot_recurse(
    mem: EpisodicMemory,
    event: KeyEvent,
    store: &FrameStore,
    question: &QuestionInstance,
    depth: usize,
    cfg: &PipelineConfig,
    backends: &Backends,
    prompts: &PromptSet,
    steps: &mut Vec<CoTStep>,
    diags: &mut Diagnostics,
) -> CotOutcome {
    let (reasoning, confidence) =
        predict_cot(&mem, question, depth, backends.agent.as_ref(), prompts, diags);

    let mut step = CoTStep {
        event_id: event.event_id,
        depth,
        reasoning,
        confidence,
        action: CoTAction::Accept,
    };

    if confidence >= cfg.tau_conf {
        steps.push(step);
        return CotOutcome {
            memory: mem,
            event,
            valid: true,
            confidence,
            depth,
        };
    }

    let splittable = event.frame_count() >= 2;
    if depth >= cfg.d_max || !splittable {
        step.action = CoTAction::DepthCappedAccept;
        steps.push(step);
        return CotOutcome {
            memory: mem,
            event,
            valid: false,
            confidence,
            depth,
        };
    }

    step.action = CoTAction::Split;
    steps.push(step);

    let (left_event, right_event) =
        split_event(&event, store).expect("split precondition checked");
    let left_mem = build_memory(
        &left_event,
        store,
        backends.captioner.as_ref(),
        prompts,
        depth + 1,
        diags,
    );
    let right_mem = build_memory(
        &right_event,
        store,
        backends.captioner.as_ref(),
        prompts,
        depth + 1,
        diags,
    );

    let left = cot_recurse(
        left_mem,
        left_event,
        store,
        question,
        depth + 1,
        cfg,
        backends,
        prompts,
        steps,
        diags,
    );
    if left.valid {
        return left;
    }
    cot_recurse(
        right_mem,
        right_event,
        store,
        question,
        depth + 1,
        cfg,
        backends,
        prompts,
        steps,
        diags,
    )
}

/// Run the recursion over every top-level memory in temporal order and keep
/// the sufficient results. If nothing is sufficient, the single
/// highest-confidence invalid result is kept so the answerer always has
/// something; dropped results are recorded as reject steps.
#[allow(clippy::too_many_arguments)]
pub fn select_memories(
    memories: &[EpisodicMemory],
    events: &[KeyEvent],
    store: &FrameStore,
    question: &QuestionInstance,
    cfg: &PipelineConfig,
    backends: &Backends,
    prompts: &PromptSet,
    diags: &mut Diagnostics,
) -> CoTTrace {
    assert_eq!(
        memories.len(),
        events.len(),
        "memories and events must align by event_id"
    );

    let mut steps = Vec::new();
    let mut outcomes = Vec::with_capacity(memories.len());
    for (mem, event) in memories.iter().zip(events) {
        outcomes.push(cot_recurse(
            mem.clone(),
            event.clone(),
            store,
            question,
            1,
            cfg,
            backends,
            prompts,
            &mut steps,
            diags,
        ));
    }

    let any_valid = outcomes.iter().any(|o| o.valid);
    let keep_invalid = if any_valid {
        None
    } else {
        // Highest confidence wins; earlier event on ties.
        outcomes
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| {
                a.confidence
                    .total_cmp(&b.confidence)
                    .then_with(|| ib.cmp(ia))
            })
            .map(|(i, _)| i)
    };

    let mut selected = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        if outcome.valid || keep_invalid == Some(i) {
            selected.push(SelectedMemory {
                sufficient: outcome.valid,
                memory: outcome.memory,
                event: outcome.event,
            });
        } else {
            steps.push(CoTStep {
                event_id: outcome.event.event_id,
                depth: outcome.depth,
                reasoning: "dropped: no sufficient refinement found".to_string(),
                confidence: outcome.confidence,
                action: CoTAction::Reject,
            });
        }
    }

    let frames_used = distinct_frames(&selected);
    CoTTrace {
        steps,
        selected,
        frames_used,
    }
}

fn distinct_frames(selected: &[SelectedMemory]) -> usize {
    let mut all: Vec<usize> = selected
        .iter()
        .flat_map(|s| s.event.expanded_indices.iter().copied())
        .collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Pick `k` evenly spaced values out of `0..n`.
pub fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    (0..k)
        .map(|i| (((i as f64 + 0.5) * n as f64 / k as f64) as usize).min(n - 1))
        .collect()
}

/// Compose the answer request from the selected memories: rendered blocks in
/// temporal order, the selected events' frames (evenly subsampled down to the
/// answerer's declared frame limit), the question, and lettered options.
pub fn compose_answer_prompt(
    trace: &CoTTrace,
    store: &FrameStore,
    question: &QuestionInstance,
    prompts: &PromptSet,
    frame_limit: Option<usize>,
) -> AnswerRequest {
    assert!(
        !trace.selected.is_empty(),
        "compose_answer_prompt requires a non-empty selection; use compose_fallback_request"
    );
    let mut selected: Vec<&SelectedMemory> = trace.selected.iter().collect();
    selected.sort_by(|a, b| {
        a.event
            .start_s
            .total_cmp(&b.event.start_s)
            .then_with(|| a.event.event_id.cmp(&b.event.event_id))
    });

    let memories_text = selected
        .iter()
        .map(|s| render_memory(&s.memory))
        .collect::<Vec<_>>()
        .join("\n\n");

    let mut frame_indices: Vec<usize> = selected
        .iter()
        .flat_map(|s| s.event.expanded_indices.iter().copied())
        .collect();
    frame_indices.sort_unstable();
    frame_indices.dedup();
    if let Some(limit) = frame_limit {
        if frame_indices.len() > limit {
            frame_indices = evenly_spaced(frame_indices.len(), limit)
                .into_iter()
                .map(|i| frame_indices[i])
                .collect();
        }
    }

    build_request(&frame_indices, memories_text, store, question, prompts)
}

/// Compose an answer request without memories, from uniformly sampled frames.
pub fn compose_fallback_request(
    frame_indices: &[usize],
    store: &FrameStore,
    question: &QuestionInstance,
    prompts: &PromptSet,
) -> AnswerRequest {
    build_request(
        frame_indices,
        String::new(),
        store,
        question,
        prompts,
    )
}

fn build_request(
    frame_indices: &[usize],
    memories_text: String,
    store: &FrameStore,
    question: &QuestionInstance,
    prompts: &PromptSet,
) -> AnswerRequest {
    let memories_slot = if memories_text.is_empty() {
        "(no episodic memories selected)".to_string()
    } else {
        memories_text.clone()
    };
    let prompt = render(
        &prompts.answer,
        &[
            ("memories", memories_slot.as_str()),
            ("question", question.question_text.as_str()),
            ("options", lettered_options(&question.options).as_str()),
        ],
    );
    let frame_refs = frame_indices
        .iter()
        .map(|&i| FrameRef {
            video_id: store.video_id.clone(),
            frame_index: i,
            timestamp_s: store.frames[i].timestamp_s,
        })
        .collect();
    AnswerRequest {
        prompt,
        frame_refs,
        options: question.options.clone(),
        memories_text,
    }
}

/// Find the first standalone option letter in a reply.
fn parse_option_letter(reply: &str, option_count: usize) -> Option<usize> {
    let trimmed = reply.trim();
    if trimmed.len() == 1 {
        let c = trimmed.chars().next().unwrap().to_ascii_uppercase();
        let idx = (c as i32) - ('A' as i32);
        if (0..option_count as i32).contains(&idx) {
            return Some(idx as usize);
        }
    }
    let chars: Vec<char> = reply.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let idx = (c as i32) - ('A' as i32);
        if !(0..option_count as i32).contains(&idx) {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = chars.get(i + 1).is_none_or(|c| !c.is_alphanumeric());
        if prev_ok && next_ok {
            return Some(idx as usize);
        }
    }
    None
}

fn overlap_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= 3)
        .map(str::to_string)
        .collect()
}

/// Outcome of the final answer call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub predicted_index: usize,
    /// The reply matched no option letter and was salvaged by lexical
    /// overlap.
    pub salvaged: bool,
}

/// Send the composed request to the answerer and parse the reply into an
/// option index. One repair re-prompt when no letter is found; after that the
/// lexically most-overlapping option is chosen and flagged as salvaged.
/// Backend hard failures propagate so the caller can mark the question
/// unanswered.
pub fn answer(
    question: &QuestionInstance,
    request: &AnswerRequest,
    answerer: &dyn Answerer,
    diags: &mut Diagnostics,
) -> Result<AnswerOutcome, BackendError> {
    let option_count = question.options.len();
    let reply = answerer.answer_video(request, diags)?;
    if let Some(idx) = parse_option_letter(&reply, option_count) {
        return Ok(AnswerOutcome {
            predicted_index: idx,
            salvaged: false,
        });
    }

    let mut repair = request.clone();
    repair.prompt = format!(
        "{}\nThe previous reply did not name an option. Reply with exactly one option letter.",
        request.prompt
    );
    let second = answerer.answer_video(&repair, diags)?;
    if let Some(idx) = parse_option_letter(&second, option_count) {
        return Ok(AnswerOutcome {
            predicted_index: idx,
            salvaged: false,
        });
    }

    // Salvage: most-overlapping option against the last reply.
    let reply_tokens = overlap_tokens(&second);
    let mut best = 0usize;
    let mut best_overlap = 0usize;
    for (i, option) in question.options.iter().enumerate() {
        let mut seen: Vec<String> = Vec::new();
        let overlap = overlap_tokens(option)
            .into_iter()
            .filter(|t| {
                if reply_tokens.contains(t) && !seen.contains(t) {
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
    diags.push(
        codes::ANSWER_SALVAGED,
        format!(
            "reply matched no option letter; salvaged to option {} by lexical overlap",
            option_letter(best)
        ),
    );
    Ok(AnswerOutcome {
        predicted_index: best,
        salvaged: true,
    })
}
