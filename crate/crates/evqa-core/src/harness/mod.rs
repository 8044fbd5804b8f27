//! File ingestion, synthetic fixtures, and benchmark evaluation.

pub mod eval;
pub mod formats;
pub mod ingest;
pub mod synth;

pub use eval::{
    answer_uniform_baseline, evaluate, run_question, Aggregates, QuestionRecord, QuestionStatus,
    RunReport,
};
pub use ingest::{ingest, IngestManifest};
pub use synth::{synth_generate, write_fixture_dir, PlantedEvent, SynthSpec};
