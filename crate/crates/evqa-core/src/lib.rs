//! Training-free episodic-memory engine for long-video question answering.
//!
//! The pipeline turns a question over a long video into an answer in five
//! stages, all operating on precomputed frame artifacts (embeddings,
//! detections, optical-flow magnitudes — never pixels):
//!
//! 1. **Retrieval** — decompose the question into a multi-granular query set
//!    and retrieve the top-K keyframes by weighted embedding similarity.
//! 2. **Event building** — group keyframes into temporally coherent events
//!    and adaptively expand their boundaries using a spatio-temporal
//!    difference score over appearance and motion.
//! 3. **Episodic memory** — encode each event into a structured record: a
//!    when/where/what narrative plus object-count and location-relation
//!    evolutions.
//! 4. **Recursive selection** — score each memory's sufficiency with a
//!    reasoning agent, splitting insufficient events into finer ones down to
//!    a depth cap, keeping a minimal sufficient subset.
//! 5. **Answering** — compose the selected memories, frames, question, and
//!    options into one request for the video answerer.
//!
//! All model access goes through the pluggable backends in [`backends`];
//! deterministic mocks make the whole pipeline runnable and testable at desk
//! scale.

pub mod backends;
pub mod config;
pub mod cot;
pub mod diag;
pub mod error;
pub mod event;
pub mod harness;
pub mod memory;
pub mod prompts;
pub mod retrieval;
pub mod types;

pub use config::{default_config, BackendKind, BackendProfile, BackendsConfig, PipelineConfig};
pub use cot::{CoTAction, CoTStep, CoTTrace, SelectedMemory};
pub use diag::{DiagRecord, Diagnostics};
pub use error::{BackendError, ConfigError, EventError, IngestError, PipelineError};
pub use event::{ExpansionDiag, KeyEvent};
pub use harness::{IngestManifest, QuestionRecord, RunReport, SynthSpec};
pub use memory::{
    CountEvolution, EpisodicMemory, LocationEvolution, RelationLabel, SceneGraph, SceneNarrative,
};
pub use retrieval::{QuerySet, ScoredFrame};
pub use types::{
    format_ts, validate_store, BBox, Detection, FrameRecord, FrameRef, FrameStore,
    QuestionInstance, ValidationFinding,
};
