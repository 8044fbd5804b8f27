//! Synthetic fixture generation.
//!
//! Deterministic desk-scale worlds for exercising the whole pipeline without
//! model weights: planted events whose frames embed near their target
//! question's embedding (cosine >= 0.8 by construction), appearance and flow
//! artifacts that make event boundaries crisp, and planted detections whose
//! labels carry the answer signal. Everything derives from one seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::backends::hash_embedding;
use crate::error::{IngestError, PipelineError};
use crate::harness::formats;
use crate::harness::ingest::IngestManifest;
use crate::types::{BBox, Detection, FrameRecord, FrameStore, QuestionInstance};

const WORDS: &[&str] = &[
    "kettle", "violin", "tractor", "lantern", "parrot", "anvil", "compass", "saxophone",
    "umbrella", "hammock", "bicycle", "telescope", "cactus", "trumpet", "goggles", "barrel",
    "magnet", "helmet", "canoe", "whistle",
];

fn token_for(query_id: usize) -> String {
    if query_id < WORDS.len() {
        WORDS[query_id].to_string()
    } else {
        format!("{}{}", WORDS[query_id % WORDS.len()], query_id / WORDS.len())
    }
}

/// One planted event: `length` contiguous frames tied to one target query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedEvent {
    pub start_index: usize,
    pub length: usize,
    pub target_query_id: usize,
}

impl PlantedEvent {
    fn end_index(&self) -> usize {
        self.start_index + self.length - 1
    }

    fn contains(&self, i: usize) -> bool {
        (self.start_index..=self.end_index()).contains(&i)
    }
}

fn default_questions_per_event() -> usize {
    1
}

/// Specification of one synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_frames: usize,
    pub embedding_dim: usize,
    pub planted_events: Vec<PlantedEvent>,
    pub noise_scale: f64,
    pub seed: u64,
    /// Question variants emitted per planted event (option order reshuffled
    /// per variant).
    #[serde(default = "default_questions_per_event")]
    pub questions_per_event: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Precondition(msg));
        if self.num_frames == 0 {
            return fail("num_frames must be positive".into());
        }
        if self.embedding_dim < 2 {
            return fail("embedding_dim must be at least 2".into());
        }
        if self.noise_scale < 0.0 {
            return fail("noise_scale must be non-negative".into());
        }
        if self.questions_per_event == 0 {
            return fail("questions_per_event must be positive".into());
        }
        let mut sorted = self.planted_events.clone();
        sorted.sort_by_key(|e| e.start_index);
        for event in &sorted {
            if event.length == 0 {
                return fail(format!("planted event at {} has zero length", event.start_index));
            }
            if event.end_index() >= self.num_frames {
                return fail(format!(
                    "planted event {}..={} exceeds num_frames {}",
                    event.start_index,
                    event.end_index(),
                    self.num_frames
                ));
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].start_index <= pair[0].end_index() {
                return fail(format!(
                    "planted events overlap at frame {}",
                    pair[1].start_index
                ));
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: &[f32]) -> Vec<f32> {
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pull a unit vector into the `min_cos` cone around unit vector `q`.
fn cone_clamp(v: &[f32], q: &[f32], min_cos: f32) -> Vec<f32> {
    let vu = unit(v);
    let c = dot(&vu, q);
    if c >= min_cos {
        return vu;
    }
    let residual: Vec<f32> = vu.iter().zip(q).map(|(x, y)| x - c * y).collect();
    let rn: f32 = residual.iter().map(|x| x * x).sum::<f32>().sqrt();
    if rn < 1e-6 {
        return q.to_vec();
    }
    let sin = (1.0 - min_cos * min_cos).sqrt();
    unit(
        &q.iter()
            .zip(&residual)
            .map(|(qi, ri)| min_cos * qi + sin * ri / rn)
            .collect::<Vec<f32>>(),
    )
}

const PLANTED_MIN_COS: f32 = 0.8;
const EVENT_FLOW: f64 = 0.2;
const BOUNDARY_FLOW: f64 = 8.0;
const BACKGROUND_FLOW: f64 = 1.0;

/// Build a synthetic store and its ground-truth questions.
pub fn synth_generate(
    spec: &SynthSpec,
) -> Result<(FrameStore, Vec<QuestionInstance>), PipelineError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.embedding_dim;
    let video_id = format!("synth-{}", spec.seed);
    let noise = spec.noise_scale as f32;

    // Per-event identity: a token, the shared question text, and the anchor
    // embeddings frames are planted around.
    struct EventWorld {
        token: String,
        question_text: String,
        query_vec: Vec<f32>,
        object_vec: Vec<f32>,
        appearance: Vec<f32>,
    }
    let worlds: Vec<EventWorld> = spec
        .planted_events
        .iter()
        .map(|event| {
            let token = token_for(event.target_query_id);
            let question_text =
                format!("Which object is present in the '{token}' segment?");
            let query_vec = hash_embedding(&question_text, dim);
            let object_vec = hash_embedding(&token, dim);
            let appearance = hash_embedding(&format!("{token}-appearance"), dim);
            EventWorld {
                token,
                question_text,
                query_vec,
                object_vec,
                appearance,
            }
        })
        .collect();

    let event_of = |i: usize| -> Option<usize> {
        spec.planted_events.iter().position(|e| e.contains(i))
    };
    let is_boundary = |i: usize| -> bool {
        spec.planted_events
            .iter()
            .any(|e| i == e.start_index || i == e.end_index() + 1)
    };

    let mut frames = Vec::with_capacity(spec.num_frames);
    let mut expansion = Vec::with_capacity(spec.num_frames);
    for i in 0..spec.num_frames {
        let g_embed = gaussian(&mut rng, dim);
        let g_phi = gaussian(&mut rng, dim);

        let (embedding, phi) = match event_of(i) {
            Some(e) => {
                let world = &worlds[e];
                // Near the target question, pulled toward its object term.
                let raw: Vec<f32> = (0..dim)
                    .map(|k| {
                        world.query_vec[k] + 0.5 * world.object_vec[k] + noise * g_embed[k]
                    })
                    .collect();
                let embedding = cone_clamp(&raw, &world.query_vec, PLANTED_MIN_COS);
                // Stable appearance inside an event, light jitter.
                let phi: Vec<f32> = (0..dim)
                    .map(|k| world.appearance[k] + 0.05 * g_phi[k])
                    .collect();
                (embedding, unit(&phi))
            }
            None => {
                let mut basis = vec![0.0f32; dim];
                basis[i % dim] = 1.0;
                let raw: Vec<f32> = (0..dim)
                    .map(|k| basis[k] + noise * g_embed[k])
                    .collect();
                (unit(&raw), unit(&g_phi))
            }
        };

        let flow_mean_mag = if i == 0 {
            None
        } else if is_boundary(i) {
            Some(BOUNDARY_FLOW)
        } else if event_of(i).is_some() {
            Some(EVENT_FLOW)
        } else {
            Some(BACKGROUND_FLOW)
        };

        let detections = match event_of(i) {
            Some(e) => {
                let world = &worlds[e];
                let event = &spec.planted_events[e];
                let offset = i - event.start_index;
                let span = event.length.max(2) - 1;
                let x = 0.1 + 0.6 * offset as f64 / span as f64;
                Some(vec![
                    Detection {
                        object_id: (2 * e) as i64,
                        label: world.token.clone(),
                        bbox: BBox::new(x, 0.4, x + 0.1, 0.5),
                        confidence: 0.9,
                    },
                    Detection {
                        object_id: (2 * e + 1) as i64,
                        label: "marker".to_string(),
                        bbox: BBox::new(0.45, 0.4, 0.55, 0.5),
                        confidence: 0.9,
                    },
                ])
            }
            None => Some(vec![]),
        };

        frames.push(FrameRecord {
            frame_index: i,
            timestamp_s: i as f64,
            embedding,
            flow_mean_mag,
            detections,
        });
        expansion.push(phi);
    }

    let store = FrameStore {
        video_id: video_id.clone(),
        frames,
        embedding_dim: dim,
        expansion_embeddings: Some(expansion),
    };

    // Questions: the correct option names the planted token, distractors name
    // absent ones. Option order is reshuffled per variant.
    let used: Vec<&str> = worlds.iter().map(|w| w.token.as_str()).collect();
    let mut absent_pool: Vec<String> = WORDS
        .iter()
        .filter(|w| !used.contains(*w))
        .map(|w| w.to_string())
        .collect();
    for n in 0..3usize {
        // Keeps the pool workable even when every word is planted.
        absent_pool.push(format!("phantom{n}"));
    }

    let mut questions = Vec::new();
    for (e, world) in worlds.iter().enumerate() {
        for variant in 0..spec.questions_per_event {
            let mut distractors = absent_pool.clone();
            distractors.shuffle(&mut rng);
            let mut options: Vec<String> = distractors
                .into_iter()
                .take(3)
                .map(|w| format!("the {w}"))
                .collect();
            options.push(format!("the {}", world.token));
            options.shuffle(&mut rng);
            let answer_index = options
                .iter()
                .position(|o| *o == format!("the {}", world.token))
                .expect("correct option present");
            questions.push(QuestionInstance {
                question_id: format!("q{e:03}-{variant:03}"),
                video_id: video_id.clone(),
                question_text: world.question_text.clone(),
                options,
                answer_index: Some(answer_index),
            });
        }
    }

    Ok((store, questions))
}

/// Write a generated world as an ingestible fixture directory and return the
/// saved manifest.
pub fn write_fixture_dir(
    store: &FrameStore,
    questions: &[QuestionInstance],
    dir: &Path,
) -> Result<IngestManifest, IngestError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let embeddings: Vec<Vec<f32>> = store.frames.iter().map(|f| f.embedding.clone()).collect();
    formats::write_matrix(&dir.join("embeddings.bin"), &embeddings)?;

    let expansion_path = match &store.expansion_embeddings {
        Some(rows) => {
            formats::write_matrix(&dir.join("expansion.bin"), rows)?;
            Some("expansion.bin".into())
        }
        None => None,
    };

    let flows: Option<Vec<f64>> = store
        .frames
        .iter()
        .skip(1)
        .map(|f| f.flow_mean_mag)
        .collect();
    let flow_path = match flows {
        Some(means) if !means.is_empty() => {
            formats::write_flow_jsonl(&dir.join("flow.jsonl"), &means)?;
            Some("flow.jsonl".into())
        }
        _ => None,
    };

    let detections_path = if store.frames.iter().all(|f| f.detections.is_some()) {
        let per_frame: Vec<Vec<Detection>> = store
            .frames
            .iter()
            .map(|f| f.detections.clone().unwrap())
            .collect();
        formats::write_detections(&dir.join("detections.jsonl"), &per_frame)?;
        Some("detections.jsonl".into())
    } else {
        None
    };

    formats::write_questions(&dir.join("questions.jsonl"), questions)?;

    let manifest = IngestManifest {
        video_id: store.video_id.clone(),
        embeddings_path: "embeddings.bin".into(),
        expansion_embeddings_path: expansion_path,
        flow_path,
        detections_path,
        fps: 1.0,
    };
    manifest.save(&dir.join("manifest.toml"))?;
    Ok(manifest)
}
