//! Command-line frontend for the episodic-memory video QA engine.
//!
//! Verbs: `validate` (manifest and store checks), `synth` (fixture
//! generation), `run` (one question with a printed trace), `eval` (benchmark
//! run writing a JSON report), `inspect-memory` (render the memories built
//! for one query), `config-print` (effective configuration).
//!
//! Configuration resolves as file < environment (`EVQA_*`) < flags.
//! Exit codes: 0 success, 1 fatal config/ingest error, 2 partial (skips or
//! diagnostics present).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use evqa_core::backends::Backends;
use evqa_core::config::{apply_env, default_config, BackendsConfig, ConfigDoc, PipelineConfig};
use evqa_core::cot::CoTAction;
use evqa_core::diag::Diagnostics;
use evqa_core::event::{expand_all, segment_events};
use evqa_core::harness::{
    self, evaluate, ingest, run_question, synth_generate, IngestManifest, QuestionStatus, SynthSpec,
};
use evqa_core::memory::{build_memory, render_memory};
use evqa_core::prompts::{option_letter, PromptSet};
use evqa_core::retrieval::{decompose_query, score_frames, select_top_k};
use evqa_core::types::{validate_store, FrameStore, QuestionInstance};

#[derive(Parser)]
#[command(name = "evqa", version, about = "Episodic-memory video question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline keys as flags, overriding the config file and environment.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    omega_main: Option<f64>,
    #[arg(long)]
    omega_object: Option<f64>,
    #[arg(long)]
    omega_scene: Option<f64>,
    #[arg(long)]
    delta_t_s: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tau_st: Option<f64>,
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long)]
    tau_conf: Option<f64>,
    #[arg(long)]
    d_max: Option<usize>,
    #[arg(long)]
    frame_cap: Option<usize>,
    #[arg(long)]
    prompt_set: Option<String>,
    #[arg(long)]
    spatial_scale: Option<f64>,
    #[arg(long)]
    flow_scale: Option<f64>,
    #[arg(long)]
    allow_unbounded_alpha: Option<bool>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<(PipelineConfig, BackendsConfig)> {
        let mut cfg = default_config();
        let mut backends = BackendsConfig::default();
        if let Some(path) = &self.config {
            let doc = ConfigDoc::load(path)?;
            doc.apply(&mut cfg);
            if let Some(b) = doc.backends {
                backends = b;
            }
        }
        let env: BTreeMap<String, String> = std::env::vars().collect();
        apply_env(&mut cfg, &env)?;

        macro_rules! overlay {
            ($field:ident) => {
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            };
        }
        overlay!(top_k);
        overlay!(omega_main);
        overlay!(omega_object);
        overlay!(omega_scene);
        overlay!(delta_t_s);
        overlay!(alpha);
        overlay!(tau_st);
        overlay!(l_max);
        overlay!(tau_conf);
        overlay!(d_max);
        overlay!(frame_cap);
        overlay!(prompt_set);
        overlay!(spatial_scale);
        overlay!(flow_scale);
        overlay!(allow_unbounded_alpha);

        cfg.validate()?;
        Ok((cfg, backends))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest's files and the assembled store's invariants.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic fixture directory from a spec file.
    Synth {
        /// TOML file describing the synthetic world.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for the fixture files and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one question end to end and print the reasoning trace.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        /// Question to run; defaults to the only question in the file.
        #[arg(long)]
        question_id: Option<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a question set and write a JSON report.
    Eval {
        /// Manifest per video; repeatable.
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        questions: PathBuf,
        /// Report output path.
        #[arg(long, default_value = "report.json")]
        report: PathBuf,
        /// Worker threads for question-level parallelism.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Build and print the episodic memories retrieved for one query.
    InspectMemory {
        #[arg(long)]
        manifest: PathBuf,
        /// Query text.
        #[arg(long)]
        question: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the effective configuration after file/env/flag merging.
    ConfigPrint {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load_store(
    manifest_path: &Path,
    cfg: &PipelineConfig,
    diags: &mut Diagnostics,
) -> Result<FrameStore> {
    let manifest = IngestManifest::load(manifest_path)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let store = ingest(&manifest, cfg, diags)
        .with_context(|| format!("ingesting {}", manifest_path.display()))?;
    Ok(store)
}

fn print_diags(diags: &Diagnostics) {
    for entry in diags.entries() {
        eprintln!("  [{}] {}", entry.code, entry.message);
    }
}

fn cmd_validate(manifest: &Path, config: &ConfigArgs) -> Result<i32> {
    let (cfg, _) = config.resolve()?;
    let mut diags = Diagnostics::new();
    let store = load_store(manifest, &cfg, &mut diags)?;
    let findings = validate_store(&store, cfg.frame_cap);
    println!(
        "{}: {} frames, dim {}, expansion {}, findings {}",
        store.video_id,
        store.len(),
        store.embedding_dim,
        if store.expansion_embeddings.is_some() { "yes" } else { "no" },
        findings.len()
    );
    for finding in &findings {
        println!("  {finding}");
    }
    print_diags(&diags);
    Ok(if findings.is_empty() && diags.is_empty() { 0 } else { 2 })
}

fn cmd_synth(spec_path: &Path, out: &Path) -> Result<i32> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SynthSpec = toml::from_str(&text).context("parsing synth spec")?;
    let (store, questions) = synth_generate(&spec)?;
    let manifest = harness::write_fixture_dir(&store, &questions, out)?;
    println!(
        "wrote {} frames (dim {}), {} questions, manifest {}",
        store.len(),
        store.embedding_dim,
        questions.len(),
        out.join("manifest.toml").display()
    );
    println!("video_id: {}", manifest.video_id);
    Ok(0)
}

fn action_tag(action: CoTAction) -> &'static str {
    match action {
        CoTAction::Accept => "accept",
        CoTAction::Split => "split",
        CoTAction::Reject => "reject",
        CoTAction::DepthCappedAccept => "depth-capped-accept",
    }
}

fn cmd_run(
    manifest: &Path,
    questions_path: &Path,
    question_id: Option<&str>,
    config: &ConfigArgs,
) -> Result<i32> {
    let (cfg, backends_cfg) = config.resolve()?;
    let backends = Backends::from_config(&backends_cfg)?;
    let prompts = PromptSet::named(&cfg.prompt_set)?;
    let mut diags = Diagnostics::new();
    let store = load_store(manifest, &cfg, &mut diags)?;

    let questions = harness::formats::read_questions(questions_path)?;
    let question: &QuestionInstance = match question_id {
        Some(id) => questions
            .iter()
            .find(|q| q.question_id == id)
            .ok_or_else(|| anyhow!("question `{id}` not found in {}", questions_path.display()))?,
        None if questions.len() == 1 => &questions[0],
        None => bail!(
            "{} holds {} questions; pick one with --question-id",
            questions_path.display(),
            questions.len()
        ),
    };

    let record = run_question(&store, question, &cfg, &backends, &prompts)?;

    println!("question {}: {}", record.question_id, question.question_text);
    println!("trace:");
    for step in &record.steps {
        println!(
            "  event {} depth {} {} (confidence {:.2}) — {}",
            step.event_id,
            step.depth,
            action_tag(step.action),
            step.confidence,
            step.reasoning
        );
    }
    println!(
        "frames used: {}{}",
        record.frames_used,
        if record.fallback_used { " (uniform fallback)" } else { "" }
    );
    match record.predicted_index {
        Some(idx) => {
            let verdict = match record.correct {
                Some(true) => " — correct",
                Some(false) => " — wrong",
                None => "",
            };
            println!(
                "answer: {} ({}){}{}",
                option_letter(idx),
                question.options[idx],
                if record.salvaged { " [salvaged]" } else { "" },
                verdict
            );
        }
        None => println!("answer: unanswered"),
    }
    print_diags(&record.diagnostics);

    Ok(match record.status {
        QuestionStatus::Answered if record.diagnostics.is_empty() => 0,
        _ => 2,
    })
}

fn cmd_eval(
    manifests: &[PathBuf],
    questions_path: &Path,
    report_path: &Path,
    workers: usize,
    config: &ConfigArgs,
) -> Result<i32> {
    let (cfg, backends_cfg) = config.resolve()?;
    let backends = Backends::from_config(&backends_cfg)?;
    let prompts = PromptSet::named(&cfg.prompt_set)?;

    let mut diags = Diagnostics::new();
    let mut stores = Vec::with_capacity(manifests.len());
    for manifest in manifests {
        stores.push(load_store(manifest, &cfg, &mut diags)?);
    }
    let questions = harness::formats::read_questions(questions_path)?;

    let report = evaluate(&stores, &questions, &cfg, &backends, &prompts, workers)?;
    report.write(report_path)?;

    let a = &report.aggregates;
    println!(
        "{} questions: {} answered, {} correct, {} skipped, {} unanswered",
        a.total, a.answered, a.correct, a.skipped, a.unanswered
    );
    if let Some(acc) = a.accuracy_pct {
        println!("accuracy: {acc:.1}%");
    }
    if let Some(frames) = a.mean_frames_used {
        println!("mean frames used: {frames:.1}");
    }
    println!("wall clock: {:.2}s", a.wall_clock_s);
    println!("report: {}", report_path.display());
    print_diags(&diags);

    Ok(if diags.is_empty() { report.exit_code() } else { 2.max(report.exit_code()) })
}

fn cmd_inspect_memory(manifest: &Path, question_text: &str, config: &ConfigArgs) -> Result<i32> {
    let (cfg, backends_cfg) = config.resolve()?;
    let backends = Backends::from_config(&backends_cfg)?;
    let prompts = PromptSet::named(&cfg.prompt_set)?;
    let mut diags = Diagnostics::new();
    let store = load_store(manifest, &cfg, &mut diags)?;

    let qs = decompose_query(
        question_text,
        backends.agent.as_ref(),
        backends.embedder.as_ref(),
        store.embedding_dim,
        &prompts,
        &mut diags,
    )?;
    println!(
        "query terms: main={:?} object={:?} scene={:?}{}",
        qs.main,
        qs.object_level,
        qs.scene_level,
        if qs.fallback { " (fallback)" } else { "" }
    );

    let scores = score_frames(&store, &qs, &cfg)?;
    let keyframes = select_top_k(&scores, cfg.top_k);
    let events = segment_events(&keyframes, &store, cfg.delta_t_s);
    let (events, expansion) = expand_all(&events, &store, &cfg, &mut diags);
    println!(
        "{} keyframes -> {} events ({} expansion probes)",
        keyframes.len(),
        events.len(),
        expansion.len()
    );

    for event in &events {
        let memory = build_memory(
            event,
            &store,
            backends.captioner.as_ref(),
            &prompts,
            1,
            &mut diags,
        );
        println!(
            "\n== event {} [{} frames, {}–{}] ==",
            event.event_id,
            event.frame_count(),
            evqa_core::format_ts(event.start_s),
            evqa_core::format_ts(event.end_s),
        );
        println!("{}", render_memory(&memory));
    }
    print_diags(&diags);
    Ok(if diags.is_empty() { 0 } else { 2 })
}

#[derive(Serialize)]
struct EffectiveConfig<'a> {
    #[serde(flatten)]
    pipeline: &'a PipelineConfig,
    backends: &'a BackendsConfig,
}

fn cmd_config_print(config: &ConfigArgs) -> Result<i32> {
    let (cfg, backends) = config.resolve()?;
    let doc = EffectiveConfig {
        pipeline: &cfg,
        backends: &backends,
    };
    print!("{}", toml::to_string(&doc)?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { manifest, config } => cmd_validate(manifest, config),
        Command::Synth { spec, out } => cmd_synth(spec, out),
        Command::Run {
            manifest,
            questions,
            question_id,
            config,
        } => cmd_run(manifest, questions, question_id.as_deref(), config),
        Command::Eval {
            manifest,
            questions,
            report,
            workers,
            config,
        } => cmd_eval(manifest, questions, report, *workers, config),
        Command::InspectMemory {
            manifest,
            question,
            config,
        } => cmd_inspect_memory(manifest, question, config),
        Command::ConfigPrint { config } => cmd_config_print(config),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
