//! End-to-end question execution and benchmark evaluation.
//!
//! `run_question` drives the whole pipeline for one question: decompose,
//! score, top-K, segment, expand, build memories, select, answer. When no
//! memory reaches the confidence threshold the answerer falls back to
//! uniformly spaced frames, mirroring the uniform-sampling baseline.
//! `evaluate` runs a question set with a bounded worker pool and aggregates
//! accuracy and frame budgets into a deterministic report.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::config::PipelineConfig;
use crate::cot::{
    answer, compose_answer_prompt, compose_fallback_request, evenly_spaced, select_memories,
    AnswerOutcome, CoTStep, CoTTrace,
};
use crate::diag::{codes, Diagnostics};
use crate::error::{BackendError, IngestError, PipelineError};
use crate::event::{expand_all, segment_events, ExpansionDiag};
use crate::memory::build_memory;
use crate::prompts::PromptSet;
use crate::retrieval::{decompose_query, score_frames, select_top_k};
use crate::types::{FrameStore, QuestionInstance};

/// How one question ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionStatus {
    Answered,
    /// The video could not be resolved; excluded from every aggregate.
    Skipped,
    /// Backends failed hard; counted but not scored.
    Unanswered,
}

/// Per-question result and audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub video_id: String,
    pub status: QuestionStatus,
    pub predicted_index: Option<usize>,
    /// Against ground truth, when the question carries one.
    pub correct: Option<bool>,
    /// Distinct frames shown to the answerer.
    pub frames_used: usize,
    pub fallback_used: bool,
    pub salvaged: bool,
    pub steps: Vec<CoTStep>,
    pub expansion: Vec<ExpansionDiag>,
    pub diagnostics: Diagnostics,
}

impl QuestionRecord {
    fn shell(question: &QuestionInstance) -> Self {
        Self {
            question_id: question.question_id.clone(),
            video_id: question.video_id.clone(),
            status: QuestionStatus::Unanswered,
            predicted_index: None,
            correct: None,
            frames_used: 0,
            fallback_used: false,
            salvaged: false,
            steps: Vec::new(),
            expansion: Vec::new(),
            diagnostics: Diagnostics::new(),
        }
    }
}

/// Run aggregates. Accuracy and frame means are over answered questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    pub answered: usize,
    pub correct: usize,
    pub skipped: usize,
    pub unanswered: usize,
    pub accuracy_pct: Option<f64>,
    pub mean_frames_used: Option<f64>,
    pub wall_clock_s: f64,
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: Vec<QuestionRecord>,
    pub aggregates: Aggregates,
}

impl RunReport {
    /// Deterministic form for comparisons: the wall clock is zeroed.
    pub fn normalized(&self) -> RunReport {
        let mut report = self.clone();
        report.aggregates.wall_clock_s = 0.0;
        report
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        std::fs::write(path, self.to_json()).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// 0 clean, 2 partial (skips, unanswered questions, or diagnostics).
    pub fn exit_code(&self) -> i32 {
        let partial = self.aggregates.skipped > 0
            || self.aggregates.unanswered > 0
            || self.records.iter().any(|r| !r.diagnostics.is_empty());
        if partial {
            2
        } else {
            0
        }
    }
}

/// Answer a question from uniformly spaced frames only — the baseline the
/// selection pipeline is compared against, and the fallback when selection
/// produces nothing sufficient.
pub fn answer_uniform_baseline(
    store: &FrameStore,
    question: &QuestionInstance,
    cfg: &PipelineConfig,
    backends: &Backends,
    prompts: &PromptSet,
    diags: &mut Diagnostics,
) -> Result<(AnswerOutcome, usize), BackendError> {
    let budget = cfg.top_k.min(store.len());
    let frames = evenly_spaced(store.len(), budget);
    let request = compose_fallback_request(&frames, store, question, prompts);
    let outcome = answer(question, &request, backends.answerer.as_ref(), diags)?;
    Ok((outcome, frames.len()))
}

/// Execute the full pipeline for one question. Backend failures degrade to
/// an unanswered record; only configuration errors abort.
pub fn run_question(
    store: &FrameStore,
    question: &QuestionInstance,
    cfg: &PipelineConfig,
    backends: &Backends,
    prompts: &PromptSet,
) -> Result<QuestionRecord, PipelineError> {
    let mut record = QuestionRecord::shell(question);
    let mut diags = Diagnostics::new();

    if store.is_empty() {
        diags.push(
            codes::QUESTION_UNANSWERED,
            format!("{}: store has no frames", question.question_id),
        );
        record.diagnostics = diags;
        return Ok(record);
    }

    let qs = match decompose_query(
        &question.question_text,
        backends.agent.as_ref(),
        backends.embedder.as_ref(),
        store.embedding_dim,
        prompts,
        &mut diags,
    ) {
        Ok(qs) => qs,
        Err(PipelineError::Backend(BackendError::Config(c))) => {
            return Err(PipelineError::Config(c))
        }
        Err(PipelineError::Config(c)) => return Err(PipelineError::Config(c)),
        Err(e) => {
            diags.push(
                codes::QUESTION_UNANSWERED,
                format!("{}: query decomposition failed: {e}", question.question_id),
            );
            record.diagnostics = diags;
            return Ok(record);
        }
    };

    let scores = score_frames(store, &qs, cfg).map_err(PipelineError::Config)?;
    let keyframes = select_top_k(&scores, cfg.top_k);
    let events = segment_events(&keyframes, store, cfg.delta_t_s);
    let (events, expansion_diags) = expand_all(&events, store, cfg, &mut diags);
    record.expansion = expansion_diags;

    let memories: Vec<_> = events
        .iter()
        .map(|event| {
            build_memory(
                event,
                store,
                backends.captioner.as_ref(),
                prompts,
                1,
                &mut diags,
            )
        })
        .collect();

    let trace: CoTTrace = select_memories(
        &memories, &events, store, question, cfg, backends, prompts, &mut diags,
    );
    record.steps = trace.steps.clone();

    let sufficient = trace.selected.iter().any(|s| s.sufficient);
    let (request, frames_used) = if sufficient {
        let request = compose_answer_prompt(
            &trace,
            store,
            question,
            prompts,
            backends.answerer_frame_limit,
        );
        (request, trace.frames_used)
    } else {
        // Nothing reached the confidence threshold: fall back to uniform
        // sampling at the retrieval budget.
        diags.push(
            codes::UNIFORM_FALLBACK,
            format!(
                "{}: no sufficient memory selected; answering from uniform frames",
                question.question_id
            ),
        );
        record.fallback_used = true;
        let budget = cfg.top_k.min(store.len());
        let frames = evenly_spaced(store.len(), budget);
        let request = compose_fallback_request(&frames, store, question, prompts);
        let count = frames.len();
        (request, count)
    };
    record.frames_used = frames_used;

    match answer(question, &request, backends.answerer.as_ref(), &mut diags) {
        Ok(outcome) => {
            record.status = QuestionStatus::Answered;
            record.predicted_index = Some(outcome.predicted_index);
            record.salvaged = outcome.salvaged;
            record.correct = question
                .answer_index
                .map(|gt| gt == outcome.predicted_index);
        }
        Err(e) => {
            diags.push(
                codes::QUESTION_UNANSWERED,
                format!("{}: answerer failed: {e}", question.question_id),
            );
        }
    }

    record.diagnostics = diags;
    Ok(record)
}

/// Evaluate a question set over one or more stores with `workers` threads.
/// Questions whose `video_id` resolves to no store are marked skipped.
/// Records are order-normalized by question id.
pub fn evaluate(
    stores: &[FrameStore],
    questions: &[QuestionInstance],
    cfg: &PipelineConfig,
    backends: &Backends,
    prompts: &PromptSet,
    workers: usize,
) -> Result<RunReport, PipelineError> {
    let started = Instant::now();
    let mut by_video: BTreeMap<&str, &FrameStore> = BTreeMap::new();
    for store in stores {
        if by_video.insert(store.video_id.as_str(), store).is_some() {
            return Err(PipelineError::Ingest(IngestError::Manifest(format!(
                "duplicate video_id `{}`",
                store.video_id
            ))));
        }
    }

    let workers = workers.max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<QuestionRecord>>> = Mutex::new(vec![None; questions.len()]);
    let fatal: Mutex<Option<PipelineError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers.min(questions.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= questions.len() {
                    break;
                }
                if fatal.lock().unwrap().is_some() {
                    break;
                }
                let question = &questions[i];
                let record = match by_video.get(question.video_id.as_str()) {
                    Some(store) => run_question(store, question, cfg, backends, prompts),
                    None => {
                        let mut record = QuestionRecord::shell(question);
                        record.status = QuestionStatus::Skipped;
                        record.diagnostics.push(
                            codes::QUESTION_SKIPPED,
                            format!("no store for video_id `{}`", question.video_id),
                        );
                        Ok(record)
                    }
                };
                match record {
                    Ok(record) => slots.lock().unwrap()[i] = Some(record),
                    Err(e) => {
                        let mut guard = fatal.lock().unwrap();
                        if guard.is_none() {
                            *guard = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    let mut records: Vec<QuestionRecord> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every question produced a record"))
        .collect();
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    let total = records.len();
    let answered = records
        .iter()
        .filter(|r| r.status == QuestionStatus::Answered)
        .count();
    let skipped = records
        .iter()
        .filter(|r| r.status == QuestionStatus::Skipped)
        .count();
    let unanswered = records
        .iter()
        .filter(|r| r.status == QuestionStatus::Unanswered)
        .count();
    let correct = records.iter().filter(|r| r.correct == Some(true)).count();
    let accuracy_pct = (answered > 0).then(|| 100.0 * correct as f64 / answered as f64);
    let mean_frames_used = (answered > 0).then(|| {
        records
            .iter()
            .filter(|r| r.status == QuestionStatus::Answered)
            .map(|r| r.frames_used as f64)
            .sum::<f64>()
            / answered as f64
    });

    Ok(RunReport {
        records,
        aggregates: Aggregates {
            total,
            answered,
            correct,
            skipped,
            unanswered,
            accuracy_pct,
            mean_frames_used,
            wall_clock_s: started.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::harness::synth::{synth_generate, PlantedEvent, SynthSpec};

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            num_frames: 80,
            embedding_dim: 32,
            planted_events: vec![
                PlantedEvent { start_index: 15, length: 5, target_query_id: 0 },
                PlantedEvent { start_index: 50, length: 5, target_query_id: 1 },
            ],
            noise_scale: 0.5,
            seed,
            questions_per_event: 2,
        }
    }

    fn small_cfg() -> PipelineConfig {
        let mut cfg = default_config();
        cfg.top_k = 12;
        cfg
    }

    #[test]
    fn scripted_perfect_world_scores_full_accuracy() {
        let (store, questions) = synth_generate(&spec(3)).unwrap();
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let report = evaluate(
            &[store],
            &questions,
            &small_cfg(),
            &backends,
            &prompts,
            1,
        )
        .unwrap();
        assert_eq!(report.aggregates.answered, 4);
        assert_eq!(report.aggregates.accuracy_pct, Some(100.0));
        assert!(report.aggregates.mean_frames_used.unwrap() <= 15.0);
        let cfg = small_cfg();
        for record in &report.records {
            assert!(!record.fallback_used);
            assert!(record.frames_used >= 5);
            // Selection never adds frames beyond retrieval plus expansion.
            let top_level_events: std::collections::BTreeSet<usize> = record
                .steps
                .iter()
                .filter(|s| s.depth == 1)
                .map(|s| s.event_id)
                .collect();
            assert!(
                record.frames_used
                    <= cfg.top_k + 2 * cfg.l_max * top_level_events.len().max(1)
            );
            assert!(record.frames_used <= 80);
        }
    }

    #[test]
    fn zero_questions_build_an_empty_report() {
        let (store, _) = synth_generate(&spec(4)).unwrap();
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let report =
            evaluate(&[store], &[], &small_cfg(), &backends, &prompts, 1).unwrap();
        assert_eq!(report.aggregates.total, 0);
        assert_eq!(report.aggregates.accuracy_pct, None);
        assert_eq!(report.aggregates.mean_frames_used, None);
        assert_eq!(report.exit_code(), 0);
    }

    #[test]
    fn unresolvable_video_is_skipped_and_denominators_shrink() {
        let (store, mut questions) = synth_generate(&spec(5)).unwrap();
        questions[1].video_id = "missing".into();
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let report = evaluate(
            &[store],
            &questions,
            &small_cfg(),
            &backends,
            &prompts,
            1,
        )
        .unwrap();
        assert_eq!(report.aggregates.total, 4);
        assert_eq!(report.aggregates.skipped, 1);
        assert_eq!(report.aggregates.answered, 3);
        assert_eq!(report.aggregates.accuracy_pct, Some(100.0));
        assert_eq!(report.exit_code(), 2);
    }

    #[test]
    fn empty_store_yields_unanswered_with_diagnostic() {
        let store = FrameStore {
            video_id: "empty".into(),
            frames: vec![],
            embedding_dim: 4,
            expansion_embeddings: None,
        };
        let question = QuestionInstance {
            question_id: "q".into(),
            video_id: "empty".into(),
            question_text: "Which object is present in the 'kettle' segment?".into(),
            options: vec!["a".into(), "b".into()],
            answer_index: Some(0),
        };
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let record =
            run_question(&store, &question, &small_cfg(), &backends, &prompts).unwrap();
        assert_eq!(record.status, QuestionStatus::Unanswered);
        assert!(record.diagnostics.has_code(codes::QUESTION_UNANSWERED));
    }

    #[test]
    fn unknown_token_falls_back_to_uniform_frames() {
        // A question about an absent object: every memory scores low, so the
        // record is answered from uniform frames and flagged.
        let (store, _) = synth_generate(&spec(6)).unwrap();
        let question = QuestionInstance {
            question_id: "q-absent".into(),
            video_id: store.video_id.clone(),
            question_text: "Which object is present in the 'zeppelin' segment?".into(),
            options: vec![
                "the zeppelin".into(),
                "the kettle".into(),
                "the violin".into(),
                "the anvil".into(),
            ],
            answer_index: Some(0),
        };
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let cfg = small_cfg();
        let record = run_question(&store, &question, &cfg, &backends, &prompts).unwrap();
        assert!(record.fallback_used);
        assert!(record.diagnostics.has_code(codes::UNIFORM_FALLBACK));
        assert_eq!(record.frames_used, cfg.top_k.min(store.len()));
        assert_eq!(record.status, QuestionStatus::Answered);
    }

    #[test]
    fn worker_counts_do_not_change_records() {
        let (store, questions) = synth_generate(&spec(7)).unwrap();
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let cfg = small_cfg();
        let one =
            evaluate(std::slice::from_ref(&store), &questions, &cfg, &backends, &prompts, 1)
                .unwrap();
        let four = evaluate(&[store], &questions, &cfg, &backends, &prompts, 4).unwrap();
        assert_eq!(one.normalized(), four.normalized());
    }

    #[test]
    fn duplicate_video_id_is_fatal() {
        let (store, questions) = synth_generate(&spec(8)).unwrap();
        let prompts = PromptSet::named("default").unwrap();
        let backends = Backends::mocks();
        let err = evaluate(
            &[store.clone(), store],
            &questions,
            &small_cfg(),
            &backends,
            &prompts,
            1,
        );
        assert!(matches!(err, Err(PipelineError::Ingest(_))));
    }
}
